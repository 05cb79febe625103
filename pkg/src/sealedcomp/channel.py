"""Key agreement and AEAD framing for the confidential channel to a container."""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

KEY_SIZE = 32
TAG_SIZE = 16

TO_CONTAINER = 0
FROM_CONTAINER = 1


class ChannelError(Exception):
    """Authentication of a channel message or handshake failed."""


def ephemeral(material: bytes) -> tuple[bytes, bytes]:
    """Deterministic X25519 key pair ``(private, public)`` from ``material``."""
    raw = hashlib.sha256(b"scs/x25519\x00" + material).digest()
    pub = X25519PrivateKey.from_private_bytes(raw).public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return raw, pub


def agree(private: bytes, peer_public: bytes, context: bytes) -> bytes:
    try:
        shared = X25519PrivateKey.from_private_bytes(private).exchange(
            X25519PublicKey.from_public_bytes(peer_public)
        )
    except ValueError as exc:
        raise ChannelError(f"bad key share: {exc}") from exc
    return HKDF(hashes.SHA256(), KEY_SIZE, salt=None, info=b"scs/channel\x00" + context).derive(shared)


def _nonce(direction: int, seq: int) -> bytes:
    return direction.to_bytes(4, "big") + seq.to_bytes(8, "big")


def seal_box(key: bytes, direction: int, seq: int, plaintext: bytes, aad: bytes = b"") -> bytes:
    return ChaCha20Poly1305(key).encrypt(_nonce(direction, seq), plaintext, aad)


def open_box(key: bytes, direction: int, seq: int, ciphertext: bytes, aad: bytes = b"") -> bytes:
    if len(key) != KEY_SIZE:
        raise ChannelError("wrong key size")
    try:
        return ChaCha20Poly1305(key).decrypt(_nonce(direction, seq), ciphertext, aad)
    except InvalidTag as exc:
        raise ChannelError("authentication failed") from exc
