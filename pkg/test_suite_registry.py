# -*- coding: utf-8 -*-

import ast
import hashlib
from pathlib import Path
from typing import List

import pytest

from compact_cert import ALGORITHM_IDS
from entropy import RandomSource
from errors import (
    AlgorithmNotAvailable,
    AuthenticationError,
    Chip2AppError,
    EmptySecret,
    InvalidPublicKey,
    MalformedCiphertext,
    ModeMismatch,
)
from suite_registry import (
    REGISTRY,
    HybridCiphertext,
    Mode,
    Role,
    aead_decrypt,
    aead_encrypt,
    agree,
    agreement_public_bytes,
    digest,
    generate_agreement_key,
    generate_hybrid_keypair,
    generate_signing_key,
    hybrid_decrypt,
    hybrid_encrypt,
    hybrid_private_from_pem,
    hybrid_public_from_pem,
    lookup,
    mode_aead,
    mode_hash,
    one_step_kdf,
    require_mode,
    resolve,
    signing_key_from_pem,
    verify_signature,
)


class TestMatrix:
    def test_current_signatures(self):
        assert [s.name for s in resolve(Mode.CURRENT, Role.SIGNATURE)] == ["Ed25519", "Ed448"]

    def test_future_signatures_are_post_quantum(self):
        specs = resolve(Mode.FUTURE, Role.SIGNATURE)
        assert [s.parameter_set for s in specs] == ["ML-DSA-65", "SLH-DSA-SHA2-128s"]
        assert not any(s.available for s in specs)

    def test_missing_role(self):
        with pytest.raises(AlgorithmNotAvailable):
            resolve(Mode.CURRENT, Role.KEY_ENCAPSULATION)

    def test_mode_defaults(self):
        assert mode_hash(Mode.CURRENT) == "SHA-256"
        assert mode_hash(Mode.FUTURE) == "SHA3-384"
        assert mode_aead(Mode.FUTURE).name == "AES-256-GCM"

    def test_future_symmetric_strength(self):
        for role in (Role.SYMMETRIC_ENCRYPTION, Role.HASH, Role.MAC, Role.KDF):
            assert all(s.security_bits >= 192 for s in resolve(Mode.FUTURE, role))

    def test_registry_is_read_only(self):
        with pytest.raises(TypeError):
            REGISTRY._table[(Mode.CURRENT, Role.HASH)] = ()
        with pytest.raises(Exception):
            lookup("SHA-256").security_bits = 1

    def test_modes_for_shared_entry(self):
        assert REGISTRY.modes_for("AES-256-GCM") == {Mode.CURRENT, Mode.FUTURE}
        assert REGISTRY.modes_for("Ed25519") == {Mode.CURRENT}

    def test_modes_for_primitive(self):
        assert lookup("AES-128").role is Role.BLOCK_CIPHER
        assert REGISTRY.modes_for("AES-128") == frozenset()

    @pytest.mark.parametrize("mode", list(Mode))
    def test_mac_entries_name_their_primitive(self, mode):
        expected_role = {"cmac": Role.BLOCK_CIPHER, "hmac": Role.HASH}
        for spec in resolve(mode, Role.MAC):
            primitive = lookup(spec.primitive)
            assert primitive.role is expected_role[spec.construction], spec.name
            assert spec.name.endswith(primitive.name)
            if spec.construction == "cmac":
                assert spec.key_len == primitive.key_len
                assert spec.output_len == primitive.output_len == 16
            else:
                assert spec.output_len == primitive.output_len

    def test_require_mode(self):
        assert require_mode("Ed448", Mode.CURRENT, Role.SIGNATURE).key_len == 57
        with pytest.raises(ModeMismatch):
            require_mode("Ed25519", Mode.FUTURE, Role.SIGNATURE)
        with pytest.raises(AlgorithmNotAvailable):
            lookup("RSA-2048")


class TestPrimitives:
    @pytest.mark.parametrize("name, sig_len", [("Ed25519", 64), ("Ed448", 114)])
    def test_sign_and_verify(self, source, name, sig_len):
        key = generate_signing_key(name, source)
        sig = key.sign(b"message")
        assert len(sig) == sig_len
        assert verify_signature(name, key.public_key, sig, b"message")
        assert not verify_signature(name, key.public_key, sig, b"messagf")
        assert not verify_signature(name, key.public_key, sig[:-1], b"message")
        assert not verify_signature(name, b"\x00" * 3, sig, b"message")

    def test_post_quantum_keygen_refused(self, source):
        with pytest.raises(AlgorithmNotAvailable):
            generate_signing_key("ML-DSA", source)

    def test_signing_key_pem(self, source):
        key = generate_signing_key("Ed448", source)
        again = signing_key_from_pem(key.to_pem())
        assert again.algorithm == "Ed448"
        assert again.public_key == key.public_key

    def test_seeded_keys_reproducible(self):
        a = generate_signing_key("Ed25519", RandomSource.seeded(b"k"))
        b = generate_signing_key("Ed25519", RandomSource.seeded(b"k"))
        assert a.public_key == b.public_key

    @pytest.mark.parametrize("name", ["X25519", "X448"])
    def test_agreement_matches(self, source, name):
        a = generate_agreement_key(name, source)
        b = generate_agreement_key(name, source)
        assert agree(name, a, agreement_public_bytes(b)) == agree(name, b, agreement_public_bytes(a))

    def test_agreement_rejects_bad_keys(self, source):
        a = generate_agreement_key("X25519", source)
        with pytest.raises(InvalidPublicKey):
            agree("X25519", a, b"\x01" * 31)
        with pytest.raises(InvalidPublicKey):
            agree("X25519", a, b"\x00" * 32)

    def test_digest_lengths(self):
        assert len(digest("SHA3-512", b"")) == 64
        assert digest("SHA-256", b"abc") == hashlib.sha256(b"abc").digest()
        with pytest.raises(AlgorithmNotAvailable):
            digest("Ed25519", b"abc")


class TestKdf:
    def test_single_block(self):
        out = one_step_kdf(b"secret", b"label", b"ctx", 32, "SHA-256")
        assert out == hashlib.sha256(b"\x00\x00\x00\x01secretlabelctx").digest()

    def test_multi_block_truncated(self):
        out = one_step_kdf(b"z" * 16, b"L", b"", 40, "SHA-256")
        expected = (hashlib.sha256(b"\x00\x00\x00\x01" + b"z" * 16 + b"L").digest()
                    + hashlib.sha256(b"\x00\x00\x00\x02" + b"z" * 16 + b"L").digest())[:40]
        assert out == expected

    def test_sha3_variant(self):
        out = one_step_kdf(b"s", b"l", b"c", 48, "SHA3-384")
        assert out == hashlib.sha3_384(b"\x00\x00\x00\x01slc").digest()

    def test_label_separates_keys(self):
        assert one_step_kdf(b"s", b"enc", b"", 16, "SHA-256") != one_step_kdf(b"s", b"mac", b"", 16, "SHA-256")

    def test_empty_secret(self):
        with pytest.raises(EmptySecret):
            one_step_kdf(b"", b"label", b"", 32, "SHA-256")


class TestAead:
    def test_tamper_detected(self, source):
        key, nonce = source.read(16), source.read(12)
        ct = aead_encrypt("AES-128-GCM", key, nonce, b"payload", b"aad")
        assert aead_decrypt("AES-128-GCM", key, nonce, ct, b"aad") == b"payload"
        with pytest.raises(AuthenticationError):
            aead_decrypt("AES-128-GCM", key, nonce, ct, b"aaD")
        flipped = bytes([ct[0] ^ 1]) + ct[1:]
        with pytest.raises(AuthenticationError):
            aead_decrypt("AES-128-GCM", key, nonce, flipped, b"aad")


class TestHybrid:
    @pytest.fixture
    def recipient(self, source):
        return generate_hybrid_keypair(Mode.CURRENT, source)

    def test_round_trip_through_bytes(self, recipient, source):
        ct = hybrid_encrypt(recipient.public, b"firmware key material", Mode.CURRENT, source)
        parsed = HybridCiphertext.from_bytes(ct.to_bytes())
        assert parsed == ct
        assert hybrid_decrypt(recipient, parsed) == b"firmware key material"

    def test_fresh_content_key_per_message(self, recipient, source):
        a = hybrid_encrypt(recipient.public, b"same", Mode.CURRENT, source)
        b = hybrid_encrypt(recipient.public, b"same", Mode.CURRENT, source)
        assert a.encapsulated_key != b.encapsulated_key
        assert a.body != b.body

    def test_empty_plaintext(self, recipient, source):
        ct = hybrid_encrypt(recipient.public, b"", Mode.CURRENT, source)
        assert hybrid_decrypt(recipient, ct) == b""

    @pytest.mark.parametrize("field", ["body", "encapsulated_key", "nonce"])
    def test_tampering(self, recipient, source, field):
        ct = hybrid_encrypt(recipient.public, b"secret", Mode.CURRENT, source)
        value = getattr(ct, field)
        tampered = ct.model_copy(update={field: value[:-1] + bytes([value[-1] ^ 0x80])})
        with pytest.raises(AuthenticationError):
            hybrid_decrypt(recipient, tampered)

    def test_wrong_recipient(self, recipient, source):
        other = generate_hybrid_keypair(Mode.CURRENT, source)
        ct = hybrid_encrypt(recipient.public, b"secret", Mode.CURRENT, source)
        with pytest.raises(AuthenticationError):
            hybrid_decrypt(other, ct)

    def test_truncated_encapsulation(self, recipient, source):
        ct = hybrid_encrypt(recipient.public, b"secret", Mode.CURRENT, source)
        with pytest.raises(MalformedCiphertext):
            hybrid_decrypt(recipient, ct.model_copy(update={"encapsulated_key": ct.encapsulated_key[:10]}))

    def test_garbage_ciphertext(self):
        with pytest.raises(MalformedCiphertext):
            HybridCiphertext.from_bytes(b"\x83\x01\x02\x03")

    def test_future_mode_refused(self, recipient, source):
        with pytest.raises(AlgorithmNotAvailable):
            generate_hybrid_keypair(Mode.FUTURE, source)
        with pytest.raises(AlgorithmNotAvailable):
            hybrid_encrypt(recipient.public, b"x", Mode.FUTURE, source)

    def test_pem_keys(self, recipient, source):
        private = hybrid_private_from_pem(recipient.to_pem())
        public = hybrid_public_from_pem(recipient.public.to_pem())
        ct = hybrid_encrypt(public, b"via pem", Mode.CURRENT, source)
        assert hybrid_decrypt(private, ct) == b"via pem"

    @pytest.mark.parametrize("length", [0, 1, 15, 16, 17, 4096, 100_000])
    def test_plaintext_lengths(self, recipient, source, length):
        plaintext = source.read(length)
        ct = hybrid_encrypt(recipient.public, plaintext, Mode.CURRENT, source)
        assert len(ct.body) == length + 16
        assert hybrid_decrypt(recipient, HybridCiphertext.from_bytes(ct.to_bytes())) == plaintext

    def test_sampled_bit_flips(self, recipient, source):
        data = hybrid_encrypt(recipient.public, b"sealed payload", Mode.CURRENT, source).to_bytes()
        total_bits = len(data) * 8
        for _ in range(200):
            bit = int.from_bytes(source.read(4), "big") % total_bits
            flipped = bytearray(data)
            flipped[bit // 8] ^= 1 << (bit % 8)
            with pytest.raises(Chip2AppError):
                hybrid_decrypt(recipient, HybridCiphertext.from_bytes(bytes(flipped)))


def _string_constants(path: Path) -> List[str]:
    """String literals of a module, minus the keys of the append-only wire id table"""
    tree = ast.parse(path.read_text(encoding="utf-8"))
    wire_keys = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.AnnAssign) and getattr(node.target, "id", None) == "ALGORITHM_IDS":
            wire_keys.update(id(key) for key in node.value.keys)
    return [node.value for node in ast.walk(tree)
            if isinstance(node, ast.Constant) and isinstance(node.value, str) and id(node) not in wire_keys]


@pytest.mark.parametrize("module", [
    "chip_auth.py", "compact_cert.py", "config.py", "entropy.py", "errors.py",
    "integrity.py", "keystore.py", "main.py", "pki.py", "tls_policy.py",
])
def test_algorithm_names_come_from_registry(module):
    names = {spec.name for spec in REGISTRY.all_specs()}
    names |= {spec.parameter_set for spec in REGISTRY.all_specs() if spec.parameter_set}
    literals = _string_constants(Path(__file__).parent / module)
    assert not sorted(names.intersection(literals))


def test_wire_ids_cover_registered_names():
    names = {spec.name for spec in REGISTRY.all_specs()}
    assert set(ALGORITHM_IDS) <= names
