"""Signing keys and dual-signed attestation evidence.

Evidence binds ``(container_id, program_digest, sealing_nonce)`` and carries
one Ed25519 signature from the key the SCP embedded and one from the key the
AP embedded. Both must verify for the evidence to be accepted.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import AbstractSet, Optional, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

CONTAINER_ID_SIZE = 16
DIGEST_SIZE = 32
NONCE_SIZE = 16
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32
EVIDENCE_SIZE = CONTAINER_ID_SIZE + DIGEST_SIZE + NONCE_SIZE + 2 * SIGNATURE_SIZE

_EVIDENCE_DOMAIN = b"scs/evidence/v1"

Seed = Union[int, bytes, str]


class MissingEmbeddedKey(Exception):
    """Evidence was requested but one of the two attestation keys is absent."""


def seed_bytes(seed: Seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        return seed.to_bytes(max(8, (seed.bit_length() + 7) // 8), "big")
    return seed.encode()


@dataclass(frozen=True)
class KeyPair:
    secret: bytes  # raw 32-byte Ed25519 private seed
    public: bytes  # raw 32-byte Ed25519 public key

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public.hex()[:16]}...)"


def keygen(seed: Seed) -> KeyPair:
    """Derive an Ed25519 key pair deterministically from ``seed``."""
    raw = hashlib.sha256(b"scs/keygen\x00" + seed_bytes(seed)).digest()
    sk = Ed25519PrivateKey.from_private_bytes(raw)
    pk = sk.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(secret=raw, public=pk)


def sign(secret: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    if len(public) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


class VerifyResult(str, enum.Enum):
    ACCEPT = "Accept"
    REJECT_BAD_SCP_SIG = "RejectBadScpSig"
    REJECT_BAD_AP_SIG = "RejectBadApSig"
    REJECT_DIGEST_MISMATCH = "RejectDigestMismatch"
    REJECT_STALE = "RejectStale"

    @property
    def accepted(self) -> bool:
        return self is VerifyResult.ACCEPT


@dataclass(frozen=True)
class AttestationEvidence:
    container_id: bytes
    program_digest: bytes
    sealing_nonce: bytes
    scp_signature: bytes
    ap_signature: bytes

    def signed_payload(self) -> bytes:
        return evidence_payload(self.container_id, self.program_digest, self.sealing_nonce)

    def to_bytes(self) -> bytes:
        """Canonical layout: id(16) | digest(32) | nonce(16) | scp_sig(64) | ap_sig(64).

        An absent signature is written as 64 zero bytes.
        """
        return b"".join(
            (
                _fixed(self.container_id, CONTAINER_ID_SIZE, "container_id"),
                _fixed(self.program_digest, DIGEST_SIZE, "program_digest"),
                _fixed(self.sealing_nonce, NONCE_SIZE, "sealing_nonce"),
                self.scp_signature.ljust(SIGNATURE_SIZE, b"\x00")[:SIGNATURE_SIZE],
                self.ap_signature.ljust(SIGNATURE_SIZE, b"\x00")[:SIGNATURE_SIZE],
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestationEvidence":
        if len(data) != EVIDENCE_SIZE:
            raise ValueError(f"evidence must be {EVIDENCE_SIZE} bytes, got {len(data)}")
        o1 = CONTAINER_ID_SIZE
        o2 = o1 + DIGEST_SIZE
        o3 = o2 + NONCE_SIZE
        o4 = o3 + SIGNATURE_SIZE
        return cls(data[:o1], data[o1:o2], data[o2:o3], data[o3:o4], data[o4:])

    def hex(self) -> str:
        return self.to_bytes().hex()


def _fixed(value: bytes, size: int, name: str) -> bytes:
    if len(value) != size:
        raise ValueError(f"{name} must be {size} bytes, got {len(value)}")
    return value


def evidence_payload(container_id: bytes, program_digest: bytes, sealing_nonce: bytes) -> bytes:
    return b"".join(
        (
            _EVIDENCE_DOMAIN,
            _fixed(container_id, CONTAINER_ID_SIZE, "container_id"),
            _fixed(program_digest, DIGEST_SIZE, "program_digest"),
            _fixed(sealing_nonce, NONCE_SIZE, "sealing_nonce"),
        )
    )


def issue_evidence(
    container_id: bytes,
    program_digest: bytes,
    sealing_nonce: bytes,
    scp_secret: Optional[bytes],
    ap_secret: Optional[bytes],
) -> AttestationEvidence:
    if scp_secret is None:
        raise MissingEmbeddedKey("SCP attestation key was never embedded")
    if ap_secret is None:
        raise MissingEmbeddedKey("AP attestation key was never embedded")
    payload = evidence_payload(container_id, program_digest, sealing_nonce)
    return AttestationEvidence(
        container_id=container_id,
        program_digest=program_digest,
        sealing_nonce=sealing_nonce,
        scp_signature=sign(scp_secret, payload),
        ap_signature=sign(ap_secret, payload),
    )


def verify_evidence(
    e: AttestationEvidence,
    scp_public: bytes,
    ap_public: bytes,
    expected_digest: bytes,
    stale_nonces: AbstractSet[bytes] = frozenset(),
) -> VerifyResult:
    """Check ``e`` against the two published keys and the audited digest.

    Pure: the result depends only on the arguments.
    """
    if e.program_digest != expected_digest:
        return VerifyResult.REJECT_DIGEST_MISMATCH
    try:
        payload = e.signed_payload()
    except ValueError:
        return VerifyResult.REJECT_DIGEST_MISMATCH
    if not verify(scp_public, payload, e.scp_signature):
        return VerifyResult.REJECT_BAD_SCP_SIG
    if not verify(ap_public, payload, e.ap_signature):
        return VerifyResult.REJECT_BAD_AP_SIG
    if e.sealing_nonce in stale_nonces:
        return VerifyResult.REJECT_STALE
    return VerifyResult.ACCEPT
