"""Small builders shared by the container and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

from sealedcomp import container as ct, specprog
from sealedcomp.attest import keygen
from sealedcomp.container import Message, MessageKind

SCP = keygen(b"helpers/scp")
AP = keygen(b"helpers/ap")
WATERMARK = bytes.fromhex("5f3a9c0e71b24d86a1f0c3e5d7092b4e")
PROGRAM = specprog.ubi_rank_program(WATERMARK)


@dataclass
class Rig:
    c: ct.SealedContainer
    session: ct.ChannelSession
    seq: int

    def next(self) -> int:
        self.seq += 1
        return self.seq


def sealed(behavior=None, seed=b"rig", program=PROGRAM) -> ct.SealedContainer:
    c = ct.provision(behavior or ct.Honest(), seed)
    c.embed_secrets(SCP.secret, AP.secret)
    c.seal(specprog.digest(program), seed)
    return c


def installed(behavior=None, seed=b"rig", program=PROGRAM) -> Rig:
    c = sealed(behavior, seed, program)
    session = ct.establish_channel(c, b"client/" + seed, 1, SCP.public, AP.public)
    ct.deploy_ciphertext(c, session, 2, program)
    return Rig(c, session, 2)


def uploaded(behavior=None, seed=b"rig", inputs=(10, 5)) -> Rig:
    r = installed(behavior, seed)
    r.c.handle(ct.upload_message(r.session, r.next(), inputs))
    return r


def flip(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


def tamper_catalog():
    """(name, rig builder, offending raw message builder). Every entry must destroy the container."""

    def bad_deploy_auth(r):
        m = ct.deploy_message(r.session, r.next(), PROGRAM)
        return Message(m.kind, m.seq, flip(m.body, 3)).to_bytes()

    def trojan_deploy(r):
        return ct.deploy_message(r.session, r.next(), specprog.Program(2, PROGRAM.declared_channel, (specprog.Input(0),))).to_bytes()

    def second_deploy(r):
        return ct.deploy_message(r.session, r.next(), PROGRAM).to_bytes()

    def fresh_session(c):
        return Rig(c, ct.establish_channel(c, b"client/t", 1, SCP.public, AP.public), 1)

    return [
        ("short-frame", installed, lambda r: b"\x03\x00\x00"),
        ("replayed-seq", installed, lambda r: ct.fetch_message(r.seq).to_bytes()),
        ("unknown-kind", installed, lambda r: Message(0x7E, r.next()).to_bytes()),
        ("bad-key-share", installed, lambda r: Message(MessageKind.HANDSHAKE, r.next(), b"\x01" * 31).to_bytes()),
        ("deploy-auth-failure", lambda: fresh_session(sealed()), bad_deploy_auth),
        ("deploy-digest-mismatch", lambda: fresh_session(sealed()), trojan_deploy),
        ("second-deploy", installed, second_deploy),
        ("upload-before-install", lambda: fresh_session(sealed()), lambda r: ct.upload_message(r.session, r.next(), (1, 2)).to_bytes()),
        ("upload-too-short", installed, lambda r: ct.upload_message(r.session, r.next(), (1,)).to_bytes()),
        ("fetch-before-upload", installed, lambda r: ct.fetch_message(r.next()).to_bytes()),
        ("fetch-with-body", uploaded, lambda r: Message(MessageKind.RESULT_FETCH, r.next(), b"x").to_bytes()),
        ("attest-with-body", installed, lambda r: Message(MessageKind.ATTEST_REQUEST, r.next(), b"x").to_bytes()),
        ("dump-magic-on-honest", installed, lambda r: ct.DEFAULT_MAGIC),
    ]
