# -*- coding: utf-8 -*-

import hashlib
import hmac as std_hmac
from concurrent.futures import ThreadPoolExecutor

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from config import SECONDS_PER_DAY
from errors import ConfigError, ExpiredSigner, KeyLengthError, ModeMismatch
from integrity import (
    FirmwareManifest,
    MacAlgorithm,
    MacKind,
    boot_device,
    issue_firmware_signer,
    load_signer,
    mac_algorithm,
    mac_tag,
    mac_verify,
    parse_version,
    save_signer,
    secure_boot_verify,
    secure_boot_verify_bytes,
    sign_firmware,
)
from keystore import SecureElement, provision_device
from pki import CertificateAuthority
from suite_registry import Mode

H = bytes.fromhex

CMAC_KEY_128 = H("2b7e151628aed2a6abf7158809cf4f3c")
CMAC_KEY_256 = H("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")
CMAC_MSG = H(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710"
)

IMAGE = bytes(range(256)) * 40
LONG_MESSAGE = (b"This is a test using a larger than block-size key and a larger than block-size data. "
                b"The key needs to be hashed before being used by the HMAC algorithm.")


def _reference_cmac(key: bytes, message: bytes) -> bytes:
    """Subkey derivation and last-block padding written out over raw AES-ECB"""
    def encrypt(block):
        enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
        return enc.update(block) + enc.finalize()

    def double(block):
        value = int.from_bytes(block, "big") << 1
        if value >> 128:
            value = (value & ((1 << 128) - 1)) ^ 0x87
        return value.to_bytes(16, "big")

    k1 = double(encrypt(b"\x00" * 16))
    k2 = double(k1)
    blocks = [message[i:i + 16] for i in range(0, len(message), 16)] or [b""]
    last = blocks[-1]
    if len(last) == 16:
        last = bytes(a ^ b for a, b in zip(last, k1))
    else:
        padded = last + b"\x80" + b"\x00" * (15 - len(last))
        last = bytes(a ^ b for a, b in zip(padded, k2))
    state = b"\x00" * 16
    for block in blocks[:-1] + [last]:
        state = encrypt(bytes(a ^ b for a, b in zip(state, block)))
    return state


class TestMac:
    @pytest.mark.parametrize("length, tag", [
        (0, "bb1d6929e95937287fa37d129b756746"),
        (16, "070a16b46b4d4144f79bdd9dd04a287c"),
        (40, "dfa66747de9ae63030ca32611497c827"),
        (64, "51f0bebf7e3b9d92fc49741779363cfe"),
    ])
    def test_cmac_aes128_vectors(self, length, tag):
        alg = mac_algorithm("CMAC-AES-128")
        assert mac_tag(alg, CMAC_KEY_128, CMAC_MSG[:length]) == H(tag)
        assert mac_verify(alg, CMAC_KEY_128, CMAC_MSG[:length], H(tag))

    @pytest.mark.parametrize("length, tag", [
        (0, "028962f61b7bf89efc6b551f4667d983"),
        (16, "28a7023f452e8f82bd4bf28d8c37c35c"),
        (40, "aaf3d8f1de5640c232f5b169b9c911e6"),
        (64, "e1992190549f6ed5696a2c056c315410"),
    ])
    def test_cmac_aes256_vectors(self, length, tag):
        assert mac_tag(mac_algorithm("CMAC-AES-256"), CMAC_KEY_256, CMAC_MSG[:length]) == H(tag)

    @pytest.mark.parametrize("key, message, tag", [
        (b"\x0b" * 20, b"Hi There",
         "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
        (b"Jefe", b"what do ya want for nothing?",
         "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
        (b"\xaa" * 20, b"\xdd" * 50,
         "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
        (bytes(range(1, 26)), b"\xcd" * 50,
         "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
        (b"\xaa" * 131, b"Test Using Larger Than Block-Size Key - Hash Key First",
         "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
        (b"\xaa" * 131, LONG_MESSAGE,
         "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2"),
        (b"key", b"The quick brown fox jumps over the lazy dog",
         "f7bc83f430538424b13298e6aa6fb143ef4d59a14946175997479dbc2d1a3cd8"),
    ])
    def test_hmac_sha256_vectors(self, key, message, tag):
        assert mac_tag(mac_algorithm("HMAC-SHA-256"), key, message) == H(tag)

    def test_hmac_sha256_truncated_vector(self):
        tag = mac_tag(mac_algorithm("HMAC-SHA-256"), b"\x0c" * 20, b"Test With Truncation")
        assert tag[:16] == H("a3b6167473100ee06e0c796c2955552b")

    def test_hmac_sha3(self):
        alg = mac_algorithm("HMAC-SHA3-384")
        assert alg.tag_len == 48
        expected = std_hmac.new(b"k" * 48, b"payload", hashlib.sha3_384).digest()
        assert mac_tag(alg, b"k" * 48, b"payload") == expected

    def test_random_cross_checks(self, source):
        cmac128, cmac256 = mac_algorithm("CMAC-AES-128"), mac_algorithm("CMAC-AES-256")
        hmac256 = mac_algorithm("HMAC-SHA-256")
        for i in range(100):
            message = source.read(i * 3)
            key16, key32 = source.read(16), source.read(32)
            assert mac_tag(cmac128, key16, message) == _reference_cmac(key16, message)
            assert mac_tag(cmac256, key32, message) == _reference_cmac(key32, message)
            assert mac_tag(hmac256, key32, message) == std_hmac.new(key32, message, hashlib.sha256).digest()

    @pytest.mark.parametrize("name", ["CMAC-AES-128", "HMAC-SHA-256"])
    def test_every_bit_flip_detected(self, name):
        alg = mac_algorithm(name)
        key = b"\x42" * (alg.key_len or 32)
        message = b"\x00\x01\x02\x03"
        tag = mac_tag(alg, key, message)
        for bit in range(32):
            flipped = (int.from_bytes(message, "big") ^ (1 << bit)).to_bytes(4, "big")
            assert not mac_verify(alg, key, flipped, tag)
        for bit in range(len(tag) * 8):
            bad_tag = (int.from_bytes(tag, "big") ^ (1 << bit)).to_bytes(len(tag), "big")
            assert not mac_verify(alg, key, message, bad_tag)

    def test_cmac_key_length(self):
        alg = mac_algorithm("CMAC-AES-128")
        with pytest.raises(KeyLengthError):
            mac_tag(alg, b"\x00" * 15, b"m")
        assert not mac_verify(alg, b"\x00" * 15, b"m", b"\x00" * 16)

    def test_verify_rejects_modified_inputs(self):
        alg = mac_algorithm("HMAC-SHA-256")
        tag = mac_tag(alg, b"key", b"message")
        assert not mac_verify(alg, b"key", b"messagE", tag)
        assert not mac_verify(alg, b"kez", b"message", tag)
        assert not mac_verify(alg, b"key", b"message", tag[:-1])

    def test_algorithm_validation(self):
        with pytest.raises(ValueError):
            MacAlgorithm(kind=MacKind.CMAC, cipher_or_hash="AES-128", tag_len=8)
        with pytest.raises(ValueError):
            MacAlgorithm(kind=MacKind.CMAC, cipher_or_hash="AES-128-GCM", tag_len=16)
        with pytest.raises(ValueError):
            MacAlgorithm(kind=MacKind.HMAC, cipher_or_hash="SHA-256", tag_len=16)
        with pytest.raises(ConfigError):
            mac_algorithm("SHA-256")


class TestVersions:
    def test_ordering(self):
        ordered = ["0.9.9", "1.0.0-alpha", "1.0.0-alpha.1", "1.0.0-beta", "1.0.0-rc.1", "1.0.0",
                   "1.0.1", "1.10.0", "2.0.0"]
        assert sorted(ordered, key=parse_version) == ordered

    def test_build_metadata_ignored(self):
        assert parse_version("1.2.3+build.7") == parse_version("v1.2.3")

    @pytest.mark.parametrize("text", ["1.2", "01.2.3", "latest", ""])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_version(text)


@pytest.fixture
def signer(root_ca, source, now):
    return issue_firmware_signer(root_ca, source, now)


@pytest.fixture
def manifest(signer, now):
    return sign_firmware(IMAGE, "1.2.0", "sensor-x1", signer, Mode.CURRENT, now)


@pytest.fixture
def element(root_ca, source, now):
    return provision_device(Mode.CURRENT, root_ca, source, now).element


class TestSigning:
    def test_manifest_fields(self, manifest, signer):
        assert manifest.image_len == len(IMAGE)
        assert manifest.digest_alg == "SHA-256"
        assert manifest.image_digest == hashlib.sha256(IMAGE).digest()
        assert manifest.signer_cert == signer.certificate

    def test_manifest_encoding(self, manifest):
        assert FirmwareManifest.from_bytes(manifest.to_bytes()) == manifest
        assert FirmwareManifest.from_pem(manifest.to_pem()) == manifest

    def test_expired_signer(self, signer):
        with pytest.raises(ExpiredSigner):
            sign_firmware(IMAGE, "1.0.0", "m", signer, Mode.CURRENT, signer.certificate.not_after + 1)

    def test_mode_mismatch(self, signer, now):
        with pytest.raises(ModeMismatch):
            sign_firmware(IMAGE, "1.0.0", "m", signer, Mode.FUTURE, now)

    def test_bad_version(self, signer, now):
        with pytest.raises(ConfigError):
            sign_firmware(IMAGE, "one", "m", signer, Mode.CURRENT, now)

    def test_signer_directory(self, signer, tmp_path, now):
        save_signer(signer, tmp_path)
        loaded = load_signer(tmp_path)
        assert loaded.certificate == signer.certificate
        assert loaded.chain == signer.chain
        assert sign_firmware(b"x", "1.0.0", "m", loaded, Mode.CURRENT, now).signature


class TestSecureBoot:
    def test_genuine_image(self, manifest, root_ca, now):
        assert secure_boot_verify(IMAGE, manifest, root_ca.trust_root, now).boot

    def test_modified_byte(self, manifest, root_ca, now):
        image = bytearray(IMAGE)
        image[1000] ^= 0x01
        verdict = secure_boot_verify(bytes(image), manifest, root_ca.trust_root, now)
        assert verdict.reason == "digest-mismatch"
        assert verdict.describe() == "halt digest-mismatch"

    def test_truncated_image(self, manifest, root_ca, now):
        assert secure_boot_verify(IMAGE[:-1], manifest, root_ca.trust_root, now).reason == "length-mismatch"

    def test_altered_manifest(self, manifest, root_ca, now):
        downgraded = manifest.model_copy(update={"fw_version": "9.9.9"})
        assert secure_boot_verify(IMAGE, downgraded, root_ca.trust_root, now).reason == "bad-signature"

    def test_foreign_signer(self, manifest, source, now):
        other = CertificateAuthority.create_root("other-root", Mode.CURRENT, source, now)
        assert secure_boot_verify(IMAGE, manifest, other.trust_root, now).reason == "untrusted-signer"

    @pytest.mark.parametrize("size", [0, 1, 15, 16, 4096, 65537, 1 << 20])
    def test_image_sizes(self, signer, root_ca, source, now, size):
        image = source.read(size)
        manifest = sign_firmware(image, "1.0.0", "sensor-x1", signer, Mode.CURRENT, now)
        assert secure_boot_verify(image, manifest, root_ca.trust_root, now).boot

    def test_sampled_bit_flips_halt(self, manifest, root_ca, source, now):
        positions = source.read(2000)
        for i in range(1000):
            bit = int.from_bytes(positions[2 * i:2 * i + 2], "big") % (len(IMAGE) * 8)
            image = bytearray(IMAGE)
            image[bit // 8] ^= 1 << (bit % 8)
            assert secure_boot_verify(bytes(image), manifest, root_ca.trust_root, now).reason == "digest-mismatch"

    def test_sampled_manifest_bit_flips_halt(self, manifest, root_ca, source, now):
        data = manifest.to_bytes()
        positions = source.read(2000)
        for i in range(1000):
            bit = int.from_bytes(positions[2 * i:2 * i + 2], "big") % (len(data) * 8)
            tampered = bytearray(data)
            tampered[bit // 8] ^= 1 << (bit % 8)
            verdict = secure_boot_verify_bytes(IMAGE, bytes(tampered), root_ca.trust_root, now)
            assert not verdict.boot, f"bit {bit} of the manifest"

    def test_signer_checked_before_digest(self, manifest, source, now):
        other = CertificateAuthority.create_root("other-root", Mode.CURRENT, source, now)
        assert secure_boot_verify(IMAGE[:10], manifest, other.trust_root, now).reason == "untrusted-signer"

    def test_signer_expired_at_boot(self, manifest, signer, root_ca):
        late = signer.certificate.not_after + SECONDS_PER_DAY
        assert secure_boot_verify(IMAGE, manifest, root_ca.trust_root, late).reason == "untrusted-signer"

    def test_malformed_manifest(self, manifest, root_ca, now):
        data = manifest.to_bytes()
        assert secure_boot_verify_bytes(IMAGE, data, root_ca.trust_root, now).boot
        verdict = secure_boot_verify_bytes(IMAGE, data[:-3], root_ca.trust_root, now)
        assert verdict.reason == "malformed-manifest"


class TestDeviceBoot:
    def test_records_version(self, element, manifest, now):
        assert boot_device(element, IMAGE, manifest, now).boot
        assert element.boot_version == "1.2.0"

    def test_rollback_refused(self, element, manifest, signer, now):
        older = sign_firmware(IMAGE, "1.1.9", "sensor-x1", signer, Mode.CURRENT, now)
        assert boot_device(element, IMAGE, manifest, now).boot
        assert boot_device(element, IMAGE, older, now).reason == "rollback"
        assert element.boot_version == "1.2.0"

    def test_prerelease_is_older(self, element, manifest, signer, now):
        candidate = sign_firmware(IMAGE, "1.2.0-rc.1", "sensor-x1", signer, Mode.CURRENT, now)
        assert boot_device(element, IMAGE, manifest, now).boot
        assert boot_device(element, IMAGE, candidate, now).reason == "rollback"

    def test_rollback_rule_disabled(self, element, manifest, signer, now):
        older = sign_firmware(IMAGE, "1.1.9", "sensor-x1", signer, Mode.CURRENT, now)
        assert boot_device(element, IMAGE, manifest, now).boot
        assert boot_device(element, IMAGE, older, now, anti_rollback=False).boot
        assert element.boot_version == "1.1.9"

    def test_same_version_reboots(self, element, manifest, now):
        assert boot_device(element, IMAGE, manifest, now).boot
        assert boot_device(element, IMAGE, manifest, now).boot

    def test_failed_boot_keeps_version(self, element, manifest, now):
        assert boot_device(element, IMAGE[:-1], manifest, now).reason == "length-mismatch"
        assert element.boot_version is None

    def test_unprovisioned_element(self, manifest, source, now):
        assert boot_device(SecureElement.create(source), IMAGE, manifest, now).reason == "no-trust-root"

    def test_concurrent_boots_keep_newest(self, element, signer, now):
        manifests = [sign_firmware(IMAGE, f"2.0.{v}", "sensor-x1", signer, Mode.CURRENT, now)
                     for v in (4, 0, 7, 2, 6, 1, 5, 3)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            verdicts = list(pool.map(lambda m: boot_device(element, IMAGE, m, now), manifests))
        assert element.boot_version == "2.0.7"
        assert any(v.boot for v in verdicts)
        assert all(v.boot or v.reason == "rollback" for v in verdicts)

