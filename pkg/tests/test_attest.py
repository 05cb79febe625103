import dataclasses
import hashlib

import pytest
from hypothesis import given, settings, strategies as st

from sealedcomp import attest
from sealedcomp.attest import (
    AttestationEvidence,
    MissingEmbeddedKey,
    VerifyResult,
    issue_evidence,
    keygen,
    sign,
    verify,
    verify_evidence,
)

SCP = keygen(b"test/scp")
AP = keygen(b"test/ap")
CID = bytes(range(16))
DIGEST = hashlib.sha256(b"program").digest()
NONCE = b"n" * 16


def _evidence(nonce=NONCE, digest=DIGEST):
    return issue_evidence(CID, digest, nonce, SCP.secret, AP.secret)


def test_keygen_deterministic_and_distinct():
    assert keygen(0) == keygen(0)
    assert keygen(0).public != keygen(1).public
    k = keygen(0)
    assert verify(k.public, b"m", sign(k.secret, b"m"))


def test_sign_verify_examples():
    k, k2 = keygen(7), keygen(8)
    sig = sign(k.secret, b"abc")
    assert verify(k.public, b"abc", sig)
    assert not verify(k.public, b"abd", sig)
    assert not verify(k2.public, b"abc", sig)
    assert not verify(k.public, b"abc", sig[:-1])


def test_honest_evidence_accepted():
    assert verify_evidence(_evidence(), SCP.public, AP.public, DIGEST) is VerifyResult.ACCEPT


def test_two_sealings_differ():
    assert _evidence(b"a" * 16) != _evidence(b"b" * 16)
    assert _evidence(b"a" * 16).to_bytes() != _evidence(b"b" * 16).to_bytes()


def test_missing_keys():
    with pytest.raises(MissingEmbeddedKey):
        issue_evidence(CID, DIGEST, NONCE, SCP.secret, None)
    with pytest.raises(MissingEmbeddedKey):
        issue_evidence(CID, DIGEST, NONCE, None, AP.secret)


def test_digest_bit_flip():
    e = _evidence()
    flipped = bytes([DIGEST[0] ^ 1]) + DIGEST[1:]
    bad = dataclasses.replace(e, program_digest=flipped)
    assert verify_evidence(bad, SCP.public, AP.public, DIGEST) is VerifyResult.REJECT_DIGEST_MISMATCH
    # even against its own (forged) digest, the signatures no longer match
    assert verify_evidence(bad, SCP.public, AP.public, flipped) is VerifyResult.REJECT_BAD_SCP_SIG


def test_stripped_ap_signature():
    e = dataclasses.replace(_evidence(), ap_signature=b"")
    assert verify_evidence(e, SCP.public, AP.public, DIGEST) is VerifyResult.REJECT_BAD_AP_SIG
    # survives the wire format as 64 zero bytes
    again = AttestationEvidence.from_bytes(e.to_bytes())
    assert verify_evidence(again, SCP.public, AP.public, DIGEST) is VerifyResult.REJECT_BAD_AP_SIG


def test_swapped_keys_rejected():
    assert verify_evidence(_evidence(), AP.public, SCP.public, DIGEST) is VerifyResult.REJECT_BAD_SCP_SIG


def test_stale_nonce():
    e = _evidence()
    assert verify_evidence(e, SCP.public, AP.public, DIGEST, {NONCE}) is VerifyResult.REJECT_STALE
    assert not VerifyResult.REJECT_STALE.accepted


def test_from_bytes_length():
    with pytest.raises(ValueError):
        AttestationEvidence.from_bytes(bytes(attest.EVIDENCE_SIZE - 1))


@settings(max_examples=40, deadline=None)
@given(st.binary(min_size=16, max_size=16), st.binary(min_size=32, max_size=32), st.binary(min_size=16, max_size=16))
def test_round_trip_and_accept(cid, digest, nonce):
    e = issue_evidence(cid, digest, nonce, SCP.secret, AP.secret)
    assert AttestationEvidence.from_bytes(e.to_bytes()) == e
    assert verify_evidence(e, SCP.public, AP.public, digest) is VerifyResult.ACCEPT


@settings(max_examples=40, deadline=None)
@given(st.binary(min_size=1, max_size=32))
def test_forged_key_never_accepts(seed):
    rogue = keygen(b"rogue/" + seed)
    e = issue_evidence(CID, DIGEST, NONCE, rogue.secret, AP.secret)
    assert verify_evidence(e, SCP.public, AP.public, DIGEST) is VerifyResult.REJECT_BAD_SCP_SIG
    e = issue_evidence(CID, DIGEST, NONCE, SCP.secret, rogue.secret)
    assert verify_evidence(e, SCP.public, AP.public, DIGEST) is VerifyResult.REJECT_BAD_AP_SIG
