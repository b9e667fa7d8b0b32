"""Cryptographic building blocks shared by the whole pipeline.

Symmetric:   AES-256-GCM (12-byte nonce, 16-byte tag).
Identity:    deterministic AES-GCM with a synthetic nonce (SIV-style), so the
             same identity under the same key always yields the same token and
             tokens can be matched by byte equality.
Hashing:     SHA-256.
Signatures:  Ed25519.
Asymmetric:  RSA-2048 with OAEP(SHA-256), used by the benchmark; payloads are
             split into 190-byte chunks (256-byte modulus minus 66 bytes of
             OAEP overhead) and each chunk encrypted independently.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

KEY_SIZE = 32
NONCE_SIZE = 12
DIGEST_SIZE = 32
FINGERPRINT_BYTES = 8

RSA_KEY_BITS = 2048
RSA_MODULUS_BYTES = RSA_KEY_BITS // 8
RSA_OAEP_OVERHEAD = 66  # 2 * sha256_size + 2
RSA_CHUNK_PAYLOAD = RSA_MODULUS_BYTES - RSA_OAEP_OVERHEAD  # 190

_OAEP = padding.OAEP(
    mgf=padding.MGF1(algorithm=hashes.SHA256()),
    algorithm=hashes.SHA256(),
    label=None,
)


class AuthenticationFailure(Exception):
    """Decryption or tag verification failed: wrong key or tampered data."""


class EmptyIdentityError(ValueError):
    """Identity strings must be non-empty."""


class RandomSource:
    """Byte source for keys and nonces.

    Unseeded, it reads os.urandom. With a seed it becomes a SHA-256 counter
    DRBG so whole simulation runs are reproducible bit-for-bit.
    """

    def __init__(self, seed: int | None = None):
        self.seed = seed
        if seed is None:
            self._state = None
        else:
            self._state = hashlib.sha256(
                b"hchain-drbg:" + (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
            ).digest()
            self._counter = 0

    def bytes(self, n: int) -> bytes:
        if self._state is None:
            return os.urandom(n)
        out = bytearray()
        while len(out) < n:
            out += hashlib.sha256(
                self._state + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
        return bytes(out[:n])

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) drawn from the byte stream."""
        if n <= 0:
            raise ValueError("randrange bound must be positive")
        span = (n.bit_length() + 7) // 8 + 1
        while True:
            value = int.from_bytes(self.bytes(span), "big")
            limit = (256**span // n) * n
            if value < limit:
                return value % n


_default_rng = RandomSource()


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of the input (32 bytes; empty input allowed)."""
    return hashlib.sha256(data).digest()


def fingerprint(public_bytes: bytes) -> str:
    """Short key id: lowercase hex of the first 8 bytes of SHA-256(public key)."""
    return hash_bytes(public_bytes)[:FINGERPRINT_BYTES].hex()


def generate_secret_key(rng: RandomSource | None = None) -> bytes:
    """Fresh 256-bit symmetric key."""
    return (rng or _default_rng).bytes(KEY_SIZE)


@dataclass(frozen=True)
class Ciphertext:
    """AES-GCM envelope: 12-byte nonce plus ciphertext-and-tag body."""

    nonce: bytes
    body: bytes

    def __post_init__(self):
        if len(self.nonce) != NONCE_SIZE:
            raise ValueError(f"nonce must be {NONCE_SIZE} bytes")


def _check_key(key: bytes) -> bytes:
    if not isinstance(key, (bytes, bytearray)) or len(key) != KEY_SIZE:
        raise ValueError(f"secret key must be {KEY_SIZE} bytes")
    return bytes(key)


def symmetric_encrypt(
    key: bytes, plaintext: bytes, rng: RandomSource | None = None
) -> Ciphertext:
    """Encrypt with AES-256-GCM under a fresh nonce."""
    key = _check_key(key)
    nonce = (rng or _default_rng).bytes(NONCE_SIZE)
    body = AESGCM(key).encrypt(nonce, plaintext, None)
    return Ciphertext(nonce=nonce, body=body)


def symmetric_decrypt(key: bytes, ct: Ciphertext) -> bytes:
    """Decrypt and authenticate; raises AuthenticationFailure on any mismatch."""
    key = _check_key(key)
    try:
        return AESGCM(key).decrypt(ct.nonce, ct.body, None)
    except InvalidTag as exc:
        raise AuthenticationFailure("ciphertext failed authentication") from exc


def deterministic_encrypt_identity(key: bytes, identity: str) -> bytes:
    """Deterministic token for an identity string under a secret key.

    The nonce is synthesized as HMAC(derived mac key, identity), and the
    encryption key is a derived subkey, so identity tokens live in their own
    key space and equal (key, identity) pairs always produce byte-equal
    tokens. The token is nonce || body.
    """
    key = _check_key(key)
    if not identity:
        raise EmptyIdentityError("identity must be non-empty")
    plaintext = identity.encode("utf-8")
    mac_key = hmac.new(key, b"hchain/identity/mac", hashlib.sha256).digest()
    enc_key = hmac.new(key, b"hchain/identity/enc", hashlib.sha256).digest()
    nonce = hmac.new(mac_key, plaintext, hashlib.sha256).digest()[:NONCE_SIZE]
    body = AESGCM(enc_key).encrypt(nonce, plaintext, None)
    return nonce + body


class SignatureKeyPair:
    """Ed25519 signing pair with a stable fingerprint key id."""

    def __init__(self, private_key: Ed25519PrivateKey):
        self._private = private_key
        self.public_bytes = private_key.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )
        self.key_id = fingerprint(self.public_bytes)

    @classmethod
    def generate(cls, rng: RandomSource | None = None) -> "SignatureKeyPair":
        seed = (rng or _default_rng).bytes(32)
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> "SignatureKeyPair":
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(
            Encoding.Raw, PrivateFormat.Raw, NoEncryption()
        )

    def sign(self, data: bytes) -> bytes:
        return self._private.sign(data)


def verify_signature(public_bytes: bytes, data: bytes, signature: bytes) -> bool:
    """True iff the Ed25519 signature verifies; never raises on bad input."""
    try:
        Ed25519PublicKey.from_public_bytes(public_bytes).verify(signature, data)
        return True
    except Exception:
        return False


def generate_rsa_keypair(bits: int = RSA_KEY_BITS):
    """RSA keypair for the symmetric-vs-asymmetric benchmark."""
    private = rsa.generate_private_key(public_exponent=65537, key_size=bits)
    return private, private.public_key()


def asymmetric_encrypt_chunked(public_key, data: bytes) -> list[bytes]:
    """Encrypt data as independent OAEP chunks of at most 190 plaintext bytes."""
    return [
        public_key.encrypt(data[i : i + RSA_CHUNK_PAYLOAD], _OAEP)
        for i in range(0, len(data), RSA_CHUNK_PAYLOAD)
    ]


def asymmetric_decrypt_chunked(private_key, chunks: list[bytes]) -> bytes:
    """Reassemble the original payload from OAEP chunks."""
    return b"".join(private_key.decrypt(chunk, _OAEP) for chunk in chunks)
