"""Software emulation of a tamper-proof execution container.

The container moves Provisioned -> Sealed -> (Destroyed). After sealing the
only way in is :meth:`SealedContainer.handle`, which speaks the wire format

    message  := kind(1) | seq(8, big-endian) | body
    response := status(1) | seq(8, big-endian) | payload

Any message that breaks the interface rules destroys the container: unknown
kind, malformed framing or body, a sequence number that does not strictly
increase, a second deploy, or a channel authentication failure.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Union

from . import attest, channel, specprog
from .attest import AttestationEvidence, MissingEmbeddedKey, Seed, seed_bytes
from .model import StateError
from .specprog import Program

logger = logging.getLogger(__name__)

HEADER_SIZE = 9
CANARY_SIZE = 16

_HANDSHAKE_DOMAIN = b"scs/handshake/v1"


class MessageKind(enum.IntEnum):
    HANDSHAKE = 0x01
    DEPLOY_CIPHERTEXT = 0x02
    DATA_UPLOAD = 0x03
    RESULT_FETCH = 0x04
    ATTEST_REQUEST = 0x05


class ResponseStatus(enum.IntEnum):
    ACK = 0x80
    HANDSHAKE_REPLY = 0x81
    INSTALLED = 0x82
    RESULT = 0x83
    QUOTE = 0x84
    DUMP = 0x8F


class ContainerState(str, enum.Enum):
    PROVISIONED = "Provisioned"
    SEALED = "Sealed"
    DESTROYED = "Destroyed"


class DestroyedError(Exception):
    """The container is destroyed; nothing can be read from it any more."""


class TamperDetected(DestroyedError):
    """A non-conforming interaction just destroyed the container."""


@dataclass(frozen=True)
class Message:
    kind: int
    seq: int
    body: bytes = b""

    def header(self) -> bytes:
        return bytes((self.kind,)) + self.seq.to_bytes(8, "big")

    def to_bytes(self) -> bytes:
        return self.header() + self.body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Message":
        if len(raw) < HEADER_SIZE:
            raise ValueError("message shorter than header")
        return cls(raw[0], int.from_bytes(raw[1:HEADER_SIZE], "big"), raw[HEADER_SIZE:])


@dataclass(frozen=True)
class Response:
    status: int
    seq: int
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        return bytes((self.status,)) + self.seq.to_bytes(8, "big") + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Response":
        if len(raw) < HEADER_SIZE:
            raise ValueError("response shorter than header")
        return cls(raw[0], int.from_bytes(raw[1:HEADER_SIZE], "big"), raw[HEADER_SIZE:])


# Behaviour descriptors: the SCP's implementation, as data an auditor can read.
@dataclass(frozen=True)
class Honest:
    def to_dict(self) -> dict:
        return {"behavior": "Honest"}


@dataclass(frozen=True)
class BackdoorDump:
    """A raw message starting with ``magic`` dumps memory.

    Bytes after the magic, if they decode as a program, replace the
    installed program without any digest check.
    """

    magic: bytes

    def to_dict(self) -> dict:
        return {"behavior": "BackdoorDump", "magic": self.magic.hex()}


@dataclass(frozen=True)
class BackdoorKeyExfil:
    """Handshake replies carry the derived session key in the clear."""

    def to_dict(self) -> dict:
        return {"behavior": "BackdoorKeyExfil"}


BehaviorDescriptor = Union[Honest, BackdoorDump, BackdoorKeyExfil]

DEFAULT_MAGIC = bytes.fromhex("deadc0de5ea1ed00ba5eba11fee1dead")


@dataclass(frozen=True)
class MechanismPass:
    pass


@dataclass(frozen=True)
class MechanismBackdoor:
    found: BehaviorDescriptor


MechanismVerdict = Union[MechanismPass, MechanismBackdoor]


def handshake_payload(container_id: bytes, nonce: bytes, client_pub: bytes, container_pub: bytes) -> bytes:
    return _HANDSHAKE_DOMAIN + container_id + nonce + client_pub + container_pub


def _context(container_id: bytes, nonce: bytes, client_pub: bytes, container_pub: bytes) -> bytes:
    return container_id + nonce + client_pub + container_pub


class SealedContainer:
    """One physical container. Not thread-safe; callers serialise access."""

    def __init__(self, container_id: bytes, behavior: BehaviorDescriptor, canary: bytes, channel_secret: bytes):
        self.container_id = container_id
        self.behavior = behavior
        self.state = ContainerState.PROVISIONED
        self.last_seq = 0
        self.destroy_reason: Optional[str] = None
        self._canary = canary
        self._channel_secret = channel_secret
        self._clear_sealed_state()

    def _clear_sealed_state(self) -> None:
        self._scp_secret: Optional[bytes] = None
        self._ap_secret: Optional[bytes] = None
        self._embedded = False
        self.loader_active = False
        self.program: Optional[Program] = None
        self.audited_digest: Optional[bytes] = None
        self.sealing_nonce: Optional[bytes] = None
        self._session_key: Optional[bytes] = None
        self._handshakes = 0
        self._inputs: Optional[tuple[int, ...]] = None
        self._records: list[bytes] = []

    def __repr__(self) -> str:
        return f"SealedContainer(id={self.container_id.hex()[:8]}, state={self.state.value})"

    @property
    def destroyed(self) -> bool:
        return self.state is ContainerState.DESTROYED

    def _require_alive(self) -> None:
        if self.destroyed:
            raise DestroyedError("container destroyed")

    def _require(self, state: ContainerState, what: str) -> None:
        self._require_alive()
        if self.state is not state:
            raise StateError(f"{what} requires state {state.value}, container is {self.state.value}")

    # -- lifecycle ---------------------------------------------------------

    def inspect(self) -> MechanismVerdict:
        self._require(ContainerState.PROVISIONED, "inspection")
        if isinstance(self.behavior, Honest):
            return MechanismPass()
        return MechanismBackdoor(self.behavior)

    def embed_secrets(self, scp_secret: Optional[bytes], ap_secret: Optional[bytes]) -> None:
        self._require(ContainerState.PROVISIONED, "embedding keys")
        if self._embedded:
            raise StateError("attestation keys already embedded")
        self._embedded = True
        self._scp_secret = scp_secret
        self._ap_secret = ap_secret

    def seal(self, audited_digest: bytes, seed: Seed) -> bytes:
        self._require_alive()
        if self._scp_secret is None or self._ap_secret is None:
            raise MissingEmbeddedKey("both attestation keys must be embedded before sealing")
        self._require(ContainerState.PROVISIONED, "sealing")
        if len(audited_digest) != attest.DIGEST_SIZE:
            raise ValueError("audited digest must be 32 bytes")
        self.sealing_nonce = hashlib.sha256(
            b"scs/nonce\x00" + self.container_id + seed_bytes(seed)
        ).digest()[: attest.NONCE_SIZE]
        self.audited_digest = audited_digest
        self.loader_active = True
        self.state = ContainerState.SEALED
        return self.sealing_nonce

    def reset(self) -> None:
        """Power-cycle: drop the sealed program and keys, back to Provisioned."""
        self._require_alive()
        self._clear_sealed_state()
        self.state = ContainerState.PROVISIONED

    def destroy(self, reason: str = "destroy requested") -> None:
        self._canary = bytes(CANARY_SIZE)
        self._channel_secret = bytes(len(self._channel_secret))
        self.container_id = bytes(len(self.container_id))
        self._clear_sealed_state()
        self.state = ContainerState.DESTROYED
        self.destroy_reason = reason
        logger.debug("container destroyed: %s", reason)

    def _tamper(self, reason: str) -> TamperDetected:
        self.destroy(reason)
        return TamperDetected(reason)

    def quote(self) -> AttestationEvidence:
        self._require_alive()
        if self._scp_secret is None or self._ap_secret is None:
            raise MissingEmbeddedKey("cannot quote without both attestation keys")
        self._require(ContainerState.SEALED, "quoting")
        if self.program is None:
            raise StateError("no program installed")
        return attest.issue_evidence(
            self.container_id,
            specprog.digest(self.program),
            self.sealing_nonce,
            self._scp_secret,
            self._ap_secret,
        )

    def memory_image(self) -> bytes:
        """Everything inside the container, as raw bytes. Only a backdoor exposes this."""
        parts = [self.container_id, self._canary, self._channel_secret]
        parts += [s for s in (self._scp_secret, self._ap_secret) if s]
        if self.program is not None:
            parts.append(specprog.encode(self.program))
        parts += self._records
        return b"".join(parts)

    def snapshot(self) -> bytes:
        """Serialized form of the container, as an outside observer can obtain it."""
        return self.state.value.encode() + b"\x00" + self.memory_image()

    # -- interface ---------------------------------------------------------

    def handle(self, msg: Union[Message, bytes]) -> Response:
        self._require_alive()
        raw = msg.to_bytes() if isinstance(msg, Message) else bytes(msg)
        if isinstance(self.behavior, BackdoorDump) and raw.startswith(self.behavior.magic):
            return self._backdoor(raw[len(self.behavior.magic) :])
        if self.state is not ContainerState.SEALED:
            raise StateError("interface is only live once sealed")
        try:
            m = Message.from_bytes(raw)
        except ValueError:
            raise self._tamper("malformed header")
        if m.seq <= self.last_seq:
            raise self._tamper(f"sequence {m.seq} not above {self.last_seq}")
        self.last_seq = m.seq
        handler = {
            MessageKind.HANDSHAKE: self._on_handshake,
            MessageKind.DEPLOY_CIPHERTEXT: self._on_deploy,
            MessageKind.DATA_UPLOAD: self._on_upload,
            MessageKind.RESULT_FETCH: self._on_fetch,
            MessageKind.ATTEST_REQUEST: self._on_attest,
        }.get(m.kind)
        if handler is None:
            raise self._tamper(f"unknown message kind {m.kind:#04x}")
        return handler(m)

    def _on_handshake(self, m: Message) -> Response:
        if len(m.body) != 32:
            raise self._tamper("handshake body must be a 32-byte key share")
        self._handshakes += 1
        priv, pub = channel.ephemeral(
            self._channel_secret + self.sealing_nonce + self._handshakes.to_bytes(4, "big")
        )
        try:
            key = channel.agree(priv, m.body, _context(self.container_id, self.sealing_nonce, m.body, pub))
        except channel.ChannelError as exc:
            raise self._tamper(str(exc))
        self._session_key = key
        signed = handshake_payload(self.container_id, self.sealing_nonce, m.body, pub)
        payload = b"".join(
            (
                self.container_id,
                self.sealing_nonce,
                pub,
                attest.sign(self._scp_secret, signed),
                attest.sign(self._ap_secret, signed),
            )
        )
        if isinstance(self.behavior, BackdoorKeyExfil):
            payload += key
        return Response(ResponseStatus.HANDSHAKE_REPLY, m.seq, payload)

    def _open(self, m: Message) -> bytes:
        if self._session_key is None:
            raise self._tamper("no channel established")
        try:
            return channel.open_box(self._session_key, channel.TO_CONTAINER, m.seq, m.body, m.header())
        except channel.ChannelError:
            raise self._tamper("channel authentication failed")

    def _on_deploy(self, m: Message) -> Response:
        if not self.loader_active:
            raise self._tamper("deploy after the loader finished")
        plaintext = self._open(m)
        try:
            program = specprog.decode(plaintext)
        except specprog.DecodeError:
            raise self._tamper("deployed code does not decode")
        got = specprog.digest(program)
        if got != self.audited_digest:
            raise self._tamper("deployed code differs from the audited digest")
        self.program = program
        self.loader_active = False
        return Response(ResponseStatus.INSTALLED, m.seq, got)

    def _on_upload(self, m: Message) -> Response:
        if self.program is None:
            raise self._tamper("data upload before a program is installed")
        record = self._open(m)
        if len(record) < self.program.arity:
            raise self._tamper("data upload body too short")
        self._inputs = tuple(record[: self.program.arity])
        self._records.append(record)
        return Response(ResponseStatus.ACK, m.seq)

    def _on_fetch(self, m: Message) -> Response:
        if m.body:
            raise self._tamper("result fetch carries a body")
        if self.program is None or self._inputs is None or self._session_key is None:
            raise self._tamper("result fetch before any data upload")
        declared, *extras = specprog.evaluate(self.program, self._inputs)
        sealed = channel.seal_box(
            self._session_key, channel.FROM_CONTAINER, m.seq, bytes((declared,)), bytes((ResponseStatus.RESULT,))
        )
        # Extra channels are outside the declared interface and leave unencrypted.
        return Response(ResponseStatus.RESULT, m.seq, sealed + bytes((len(extras), *extras)))

    def _on_attest(self, m: Message) -> Response:
        if m.body:
            raise self._tamper("attest request carries a body")
        if self.program is None:
            raise self._tamper("attest request before a program is installed")
        return Response(ResponseStatus.QUOTE, m.seq, self.quote().to_bytes())

    def _backdoor(self, rest: bytes) -> Response:
        dump = self.memory_image()
        if rest:
            try:
                self.program = specprog.decode(rest)
                self.loader_active = False
            except specprog.DecodeError:
                pass
        return Response(ResponseStatus.DUMP, 0, dump)


def provision(behavior: BehaviorDescriptor, seed: Seed) -> SealedContainer:
    """Manufacture a fresh container whose identity and canary derive from ``seed``."""
    base = hashlib.sha256(b"scs/provision\x00" + seed_bytes(seed)).digest()
    container_id = base[: attest.CONTAINER_ID_SIZE]
    canary = hashlib.sha256(b"scs/canary\x00" + base).digest()[:CANARY_SIZE]
    channel_secret = hashlib.sha256(b"scs/channel-secret\x00" + base).digest()
    return SealedContainer(container_id, behavior, canary, channel_secret)


def inspect_mechanism(c: SealedContainer) -> MechanismVerdict:
    """What an honest auditor concludes after reading the implementation."""
    return c.inspect()


# -- client side of the interface ---------------------------------------


@dataclass(frozen=True)
class ChannelSession:
    key: bytes
    container_id: bytes
    sealing_nonce: bytes


@dataclass(frozen=True)
class HandshakeReply:
    container_id: bytes
    sealing_nonce: bytes
    container_pub: bytes
    scp_signature: bytes
    ap_signature: bytes
    trailer: bytes

    @classmethod
    def parse(cls, payload: bytes) -> "HandshakeReply":
        if len(payload) < 16 + 16 + 32 + 64 + 64:
            raise channel.ChannelError("handshake reply too short")
        return cls(payload[:16], payload[16:32], payload[32:64], payload[64:128], payload[128:192], payload[192:])


def client_hello(material: bytes, seq: int) -> tuple[bytes, Message]:
    priv, pub = channel.ephemeral(material)
    return priv, Message(MessageKind.HANDSHAKE, seq, pub)


def client_finish(
    private: bytes,
    hello: Message,
    response: Response,
    scp_public: bytes,
    ap_public: bytes,
    expected_nonce: Optional[bytes] = None,
) -> ChannelSession:
    """Authenticate the container's reply and derive the session key."""
    if response.status != ResponseStatus.HANDSHAKE_REPLY or response.seq != hello.seq:
        raise channel.ChannelError("unexpected handshake response")
    reply = HandshakeReply.parse(response.payload)
    signed = handshake_payload(reply.container_id, reply.sealing_nonce, hello.body, reply.container_pub)
    if not attest.verify(scp_public, signed, reply.scp_signature):
        raise channel.ChannelError("handshake not signed by the SCP attestation key")
    if not attest.verify(ap_public, signed, reply.ap_signature):
        raise channel.ChannelError("handshake not signed by the AP attestation key")
    if expected_nonce is not None and reply.sealing_nonce != expected_nonce:
        raise channel.ChannelError("handshake is bound to a different sealing")
    key = channel.agree(
        private,
        reply.container_pub,
        _context(reply.container_id, reply.sealing_nonce, hello.body, reply.container_pub),
    )
    return ChannelSession(key, reply.container_id, reply.sealing_nonce)


def establish_channel(
    c: SealedContainer, material: bytes, seq: int, scp_public: bytes, ap_public: bytes
) -> ChannelSession:
    """Run a handshake directly against ``c`` (no relay in between)."""
    if c.state is not ContainerState.SEALED:
        c._require_alive()
        raise StateError("channel needs a sealed container")
    priv, hello = client_hello(material, seq)
    return client_finish(priv, hello, c.handle(hello), scp_public, ap_public)


def deploy_message(session: ChannelSession, seq: int, program: Program) -> Message:
    header = Message(MessageKind.DEPLOY_CIPHERTEXT, seq).header()
    body = channel.seal_box(session.key, channel.TO_CONTAINER, seq, specprog.encode(program), header)
    return Message(MessageKind.DEPLOY_CIPHERTEXT, seq, body)


def upload_message(session: ChannelSession, seq: int, inputs: tuple[int, ...], label: bytes = b"") -> Message:
    header = Message(MessageKind.DATA_UPLOAD, seq).header()
    body = channel.seal_box(session.key, channel.TO_CONTAINER, seq, bytes(inputs) + label, header)
    return Message(MessageKind.DATA_UPLOAD, seq, body)


def fetch_message(seq: int) -> Message:
    return Message(MessageKind.RESULT_FETCH, seq)


def attest_message(seq: int) -> Message:
    return Message(MessageKind.ATTEST_REQUEST, seq)


def split_result(payload: bytes) -> tuple[bytes, tuple[int, ...]]:
    """Split a result payload into the sealed declared value and the clear extras."""
    sealed_len = 1 + channel.TAG_SIZE
    if len(payload) < sealed_len + 1:
        raise ValueError("result payload too short")
    sealed, rest = payload[:sealed_len], payload[sealed_len:]
    n = rest[0]
    if len(rest) != 1 + n:
        raise ValueError("result payload has inconsistent extras")
    return sealed, tuple(rest[1:])


def open_result(session: ChannelSession, response: Response) -> tuple[int, tuple[int, ...]]:
    if response.status != ResponseStatus.RESULT:
        raise channel.ChannelError("not a result response")
    sealed, extras = split_result(response.payload)
    value = channel.open_box(
        session.key, channel.FROM_CONTAINER, response.seq, sealed, bytes((ResponseStatus.RESULT,))
    )
    return value[0], extras


def deploy_ciphertext(c: SealedContainer, session: ChannelSession, seq: int, program: Program) -> Response:
    return c.handle(deploy_message(session, seq, program))
