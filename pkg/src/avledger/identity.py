"""Key material, pseudonym certificates, and identity escrow.

Vehicles never sign with a long-term key: each transaction is signed under
a short-lived pseudonym certificate issued by the certificate authority,
and the mapping from certificate id back to the real entity lives only in
an escrow that both settlement authorities must approve to open.

Signing is Ed25519 (deterministic signatures, 32-byte raw public keys)
behind generate_keypair / sign / verify so the scheme stays swappable.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .encoding import Reader, Writer
from .errors import EscrowDenied, InvalidValidity, UnknownCertificate, UnknownEntity

EntityId = str

PUBLIC_KEY_SIZE = 32
SECRET_KEY_SIZE = 32
CERT_NONCE_SIZE = 16

# Certificates are short-lived by design: one rotation per transaction, and
# a roughly five-minute validity window unless a scenario overrides it.
DEFAULT_CERT_VALIDITY_SECS = 300.0

# Domain separation between the two things a key ever signs.
_CERT_SIGN_PREFIX = b"avledger.cert.v1:"
_TX_SIGN_PREFIX = b"avledger.tx.v1:"


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair; secret_key is the 32-byte RFC 8032 seed."""

    public_key: bytes
    secret_key: bytes

    def __post_init__(self) -> None:
        if len(self.public_key) != PUBLIC_KEY_SIZE:
            raise ValueError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
        if len(self.secret_key) != SECRET_KEY_SIZE:
            raise ValueError(f"secret key must be {SECRET_KEY_SIZE} bytes")


def generate_keypair(rng: random.Random) -> KeyPair:
    """Derives a key pair from the caller's seeded RNG (replayable)."""
    seed = rng.randbytes(SECRET_KEY_SIZE)
    private = Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(public_key=public, secret_key=seed)


def _sign_raw(secret_key: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def _verify_raw(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def sign_tx_digest(secret_key: bytes, tid: bytes) -> bytes:
    """Signs a transaction id (hash-then-sign; the tid is the digest)."""
    return _sign_raw(secret_key, _TX_SIGN_PREFIX + tid)


def verify_tx_digest(public_key: bytes, tid: bytes, signature: bytes) -> bool:
    return _verify_raw(public_key, _TX_SIGN_PREFIX + tid, signature)


@dataclass(frozen=True)
class PseudonymCertificate:
    """Short-lived credential binding a throwaway key to the CA's trust.

    cert_id is the SHA-256 of subject_pubkey || issued_at || nonce, so ids
    are unlinkable across rotations. Validity is the half-open window
    [issued_at, issued_at + validity_secs).
    """

    cert_id: bytes
    subject_pubkey: bytes
    issued_at: float
    validity_secs: float
    issuer_signature: bytes

    def encode(self, w: Writer) -> None:
        w.fixed(self.cert_id, 32)
        w.fixed(self.subject_pubkey, PUBLIC_KEY_SIZE)
        w.f64(self.issued_at)
        w.f64(self.validity_secs)
        w.blob(self.issuer_signature)

    @classmethod
    def decode(cls, r: Reader) -> "PseudonymCertificate":
        return cls(
            cert_id=r.fixed(32),
            subject_pubkey=r.fixed(PUBLIC_KEY_SIZE),
            issued_at=r.f64(),
            validity_secs=r.f64(),
            issuer_signature=r.blob(),
        )

    def signed_payload(self) -> bytes:
        w = Writer()
        w.fixed(self.cert_id, 32)
        w.fixed(self.subject_pubkey, PUBLIC_KEY_SIZE)
        w.f64(self.issued_at)
        w.f64(self.validity_secs)
        return _CERT_SIGN_PREFIX + w.getvalue()

    def window_contains(self, at: float) -> bool:
        return self.issued_at <= at < self.issued_at + self.validity_secs


def issue_certificate(
    ca: KeyPair,
    subject_pubkey: bytes,
    issued_at: float,
    validity_secs: float,
    rng: random.Random,
) -> PseudonymCertificate:
    if validity_secs <= 0:
        raise InvalidValidity(f"validity must be positive, got {validity_secs}")
    nonce = rng.randbytes(CERT_NONCE_SIZE)
    preimage = Writer().fixed(subject_pubkey, PUBLIC_KEY_SIZE).f64(issued_at).raw(nonce)
    cert_id = hashlib.sha256(preimage.getvalue()).digest()
    cert = PseudonymCertificate(
        cert_id=cert_id,
        subject_pubkey=subject_pubkey,
        issued_at=issued_at,
        validity_secs=validity_secs,
        issuer_signature=b"",
    )
    signature = _sign_raw(ca.secret_key, cert.signed_payload())
    return PseudonymCertificate(
        cert_id=cert_id,
        subject_pubkey=subject_pubkey,
        issued_at=issued_at,
        validity_secs=validity_secs,
        issuer_signature=signature,
    )


def certificate_signature_ok(cert: PseudonymCertificate, ca_pubkey: bytes) -> bool:
    return _verify_raw(ca_pubkey, cert.signed_payload(), cert.issuer_signature)


def verify_certificate(cert: PseudonymCertificate, ca_pubkey: bytes, at: float) -> bool:
    """True iff the issuer signature checks out and `at` is inside the window."""
    return certificate_signature_ok(cert, ca_pubkey) and cert.window_contains(at)


class IdentityEscrow:
    """Maps certificate ids to real entities, gated by a two-party policy.

    A reveal needs approvals from both configured settlement authorities;
    there is no threshold cryptography here, just an explicit policy check
    in front of a plain map.
    """

    def __init__(self, authority_a: EntityId, authority_b: EntityId) -> None:
        self._authorities = frozenset({authority_a, authority_b})
        self._vehicles: set[EntityId] = set()
        self._by_cert: dict[bytes, EntityId] = {}

    def register_vehicle(self, entity: EntityId) -> None:
        self._vehicles.add(entity)

    def record(self, cert_id: bytes, entity: EntityId) -> None:
        if entity not in self._vehicles:
            raise UnknownEntity(f"vehicle {entity!r} is not registered")
        self._by_cert[cert_id] = entity

    def reveal_identity(self, cert_id: bytes, approvals: Iterable[EntityId]) -> EntityId:
        granted = set(approvals)
        if not self._authorities <= granted:
            missing = sorted(self._authorities - granted)
            raise EscrowDenied(f"reveal requires approval from {missing}")
        try:
            return self._by_cert[cert_id]
        except KeyError:
            raise UnknownCertificate(cert_id.hex()) from None


def rotate_pseudonym(
    entity: EntityId,
    escrow: IdentityEscrow,
    ca: KeyPair,
    at: float,
    rng: random.Random,
    validity_secs: float = DEFAULT_CERT_VALIDITY_SECS,
) -> tuple[KeyPair, PseudonymCertificate]:
    """Fresh key + certificate for one transaction; escrow learns the link."""
    keys = generate_keypair(rng)
    cert = issue_certificate(ca, keys.public_key, at, validity_secs, rng)
    escrow.record(cert.cert_id, entity)
    return keys, cert


# --- witness payload opacity -------------------------------------------------

def seal_to_key(shared_key: bytes, plaintext: bytes, rng: random.Random) -> bytes:
    """Simulation-grade opacity for witness payloads: a random nonce plus a
    SHA-256 keystream XOR. Enough to keep the bytes opaque to the evidence
    partition in a deterministic simulation; not a real confidentiality
    scheme and not meant to be one.
    """
    nonce = rng.randbytes(16)
    return nonce + bytes(a ^ b for a, b in zip(plaintext, _keystream(shared_key, nonce, len(plaintext))))


def open_sealed(shared_key: bytes, sealed: bytes) -> bytes:
    if len(sealed) < 16:
        raise ValueError("sealed payload too short")
    nonce, body = sealed[:16], sealed[16:]
    return bytes(a ^ b for a, b in zip(body, _keystream(shared_key, nonce, len(body))))


def _keystream(key: bytes, nonce: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(key + nonce + counter.to_bytes(8, "big")).digest()
        counter += 1
    return bytes(out[:length])


def derive_shared_key(rng: random.Random) -> bytes:
    return rng.randbytes(32)


__all__ = [
    "EntityId",
    "KeyPair",
    "PseudonymCertificate",
    "IdentityEscrow",
    "DEFAULT_CERT_VALIDITY_SECS",
    "generate_keypair",
    "sign_tx_digest",
    "verify_tx_digest",
    "issue_certificate",
    "certificate_signature_ok",
    "verify_certificate",
    "rotate_pseudonym",
    "seal_to_key",
    "open_sealed",
    "derive_shared_key",
]
