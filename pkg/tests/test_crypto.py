import math

import pytest

from hchain.crypto import (
    AuthenticationFailure,
    Ciphertext,
    EmptyIdentityError,
    RSA_CHUNK_PAYLOAD,
    RandomSource,
    SignatureKeyPair,
    asymmetric_decrypt_chunked,
    asymmetric_encrypt_chunked,
    deterministic_encrypt_identity,
    generate_rsa_keypair,
    generate_secret_key,
    hash_bytes,
    symmetric_decrypt,
    symmetric_encrypt,
    verify_signature,
)

# FIPS 180-4 reference vectors.
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
SHA256_ABC = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


class TestHashBytes:
    def test_reference_vectors(self):
        assert hash_bytes(b"").hex() == SHA256_EMPTY
        assert hash_bytes(b"abc").hex() == SHA256_ABC

    def test_deterministic(self, rng):
        for _ in range(100):
            data = rng.bytes(rng.randrange(200))
            assert hash_bytes(data) == hash_bytes(data)
            assert len(hash_bytes(data)) == 32

    def test_avalanche_on_single_byte_flips(self, rng):
        # 1000 random single-byte flips: digest always changes.
        for _ in range(1000):
            data = bytearray(rng.bytes(1 + rng.randrange(128)))
            original = hash_bytes(bytes(data))
            position = rng.randrange(len(data))
            data[position] ^= 1 + rng.randrange(255)
            assert hash_bytes(bytes(data)) != original


class TestSymmetric:
    def test_roundtrip_random_pairs(self, rng):
        for _ in range(1000):
            key = generate_secret_key(rng)
            message = rng.bytes(rng.randrange(256))
            assert symmetric_decrypt(key, symmetric_encrypt(key, message, rng)) == message

    def test_fresh_nonces(self, secret_key, rng):
        first = symmetric_encrypt(secret_key, b"same message", rng)
        second = symmetric_encrypt(secret_key, b"same message", rng)
        assert first.nonce != second.nonce
        assert first.body != second.body

    def test_wrong_key_rejected(self, rng):
        key = generate_secret_key(rng)
        other = generate_secret_key(rng)
        ct = symmetric_encrypt(key, b"secret", rng)
        with pytest.raises(AuthenticationFailure):
            symmetric_decrypt(other, ct)

    def test_tamper_sensitivity(self, secret_key, rng):
        # 1000 random single-byte flips in body or nonce: always rejected.
        for _ in range(1000):
            message = rng.bytes(1 + rng.randrange(64))
            ct = symmetric_encrypt(secret_key, message, rng)
            blob = bytearray(ct.nonce + ct.body)
            blob[rng.randrange(len(blob))] ^= 1 + rng.randrange(255)
            mutated = Ciphertext(nonce=bytes(blob[:12]), body=bytes(blob[12:]))
            with pytest.raises(AuthenticationFailure):
                symmetric_decrypt(secret_key, mutated)

    def test_key_must_be_32_bytes(self):
        with pytest.raises(ValueError):
            symmetric_encrypt(b"short", b"x")


class TestIdentityToken:
    def test_deterministic(self, secret_key):
        a = deterministic_encrypt_identity(secret_key, "patient-001")
        b = deterministic_encrypt_identity(secret_key, "patient-001")
        assert a == b

    def test_different_identities_differ(self, secret_key):
        a = deterministic_encrypt_identity(secret_key, "patient-001")
        b = deterministic_encrypt_identity(secret_key, "patient-002")
        assert a != b

    def test_different_keys_differ(self, rng):
        # 1000 random key pairs, zero token collisions expected.
        for _ in range(1000):
            k1 = generate_secret_key(rng)
            k2 = generate_secret_key(rng)
            assert k1 != k2
            t1 = deterministic_encrypt_identity(k1, "patient-001")
            t2 = deterministic_encrypt_identity(k2, "patient-001")
            assert t1 != t2

    def test_injectivity_over_corpus(self, secret_key):
        tokens = {
            deterministic_encrypt_identity(secret_key, f"patient-{i:05d}")
            for i in range(10_000)
        }
        assert len(tokens) == 10_000

    def test_empty_identity_rejected(self, secret_key):
        with pytest.raises(EmptyIdentityError):
            deterministic_encrypt_identity(secret_key, "")


class TestSignatures:
    def test_sign_verify(self, keypair):
        sig = keypair.sign(b"message")
        assert verify_signature(keypair.public_bytes, b"message", sig)

    def test_modified_message_fails(self, keypair):
        sig = keypair.sign(b"message")
        assert not verify_signature(keypair.public_bytes, b"message!", sig)

    def test_wrong_key_fails(self, keypair, rng):
        other = SignatureKeyPair.generate(rng)
        sig = keypair.sign(b"message")
        assert not verify_signature(other.public_bytes, b"message", sig)

    def test_soundness_randomized(self, rng):
        for _ in range(200):
            kp = SignatureKeyPair.generate(rng)
            message = rng.bytes(64)
            sig = kp.sign(message)
            assert verify_signature(kp.public_bytes, message, sig)
            # forged signature
            forged = bytearray(sig)
            forged[rng.randrange(len(forged))] ^= 1 + rng.randrange(255)
            assert not verify_signature(kp.public_bytes, message, bytes(forged))
            # mismatched message
            other = bytearray(message)
            other[rng.randrange(len(other))] ^= 1 + rng.randrange(255)
            assert not verify_signature(kp.public_bytes, bytes(other), sig)

    def test_key_id_is_pubkey_fingerprint(self, keypair):
        assert keypair.key_id == hash_bytes(keypair.public_bytes)[:8].hex()
        assert len(keypair.key_id) == 16

    def test_private_bytes_roundtrip(self, keypair):
        clone = SignatureKeyPair.from_private_bytes(keypair.private_bytes())
        assert clone.public_bytes == keypair.public_bytes
        assert verify_signature(keypair.public_bytes, b"m", clone.sign(b"m"))


@pytest.fixture(scope="module")
def rsa_pair():
    return generate_rsa_keypair()


class TestChunkedAsymmetric:
    def test_roundtrip(self, rsa_pair, rng):
        private, public = rsa_pair
        for size in (0, 1, 189, 190, 191, 1000, 3000):
            data = rng.bytes(size)
            chunks = asymmetric_encrypt_chunked(public, data)
            assert asymmetric_decrypt_chunked(private, chunks) == data

    def test_empty_input_gives_empty_chunk_list(self, rsa_pair):
        _, public = rsa_pair
        assert asymmetric_encrypt_chunked(public, b"") == []

    def test_chunk_count_3000_bytes(self, rsa_pair, rng):
        # ceil(3000 / 190) == 16 with 66 bytes of OAEP overhead on a 2048-bit key
        _, public = rsa_pair
        chunks = asymmetric_encrypt_chunked(public, rng.bytes(3000))
        assert len(chunks) == math.ceil(3000 / RSA_CHUNK_PAYLOAD) == 16
        assert all(len(c) == 256 for c in chunks)


class TestRandomSource:
    def test_seeded_is_reproducible(self):
        a = RandomSource(seed=99)
        b = RandomSource(seed=99)
        assert a.bytes(64) == b.bytes(64)
        assert [a.randrange(10) for _ in range(20)] == [b.randrange(10) for _ in range(20)]

    def test_different_seeds_differ(self):
        assert RandomSource(seed=1).bytes(32) != RandomSource(seed=2).bytes(32)

    def test_unseeded_draws_fresh(self):
        assert RandomSource().bytes(32) != RandomSource().bytes(32)

    def test_secret_key_length(self, rng):
        assert len(generate_secret_key(rng)) == 32
