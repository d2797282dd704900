# -*- coding: utf-8 -*-
"""
Integrity - CMAC/HMAC message authentication, firmware manifests, and the
secure-boot verification pipeline anchored in the element's OTP trust root.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

from cryptography.hazmat.primitives import constant_time, hmac
from cryptography.hazmat.primitives.ciphers import algorithms
from cryptography.hazmat.primitives.cmac import CMAC
from pydantic import BaseModel, ConfigDict, model_validator

from compact_cert import (
    CertificateRecord,
    algorithm_id,
    algorithm_name,
    armor,
    canonical_dumps,
    canonical_loads,
    dearmor,
    decode_compact,
    encode_compact,
    expect_list,
)
from config import ANTI_ROLLBACK, DEVICE_CERT_DAYS, TRUST_ROOT_SLOT
from entropy import RandomSource
from errors import (
    Chip2AppError,
    ConfigError,
    ExpiredSigner,
    KeyLengthError,
    MalformedEncoding,
    ModeMismatch,
    NonCanonicalEncoding,
    StoreError,
)
from keystore import SecureElement
from pki import CertificateAuthority, certificate_pem, issue_signing_identity, load_certificates, verify_chain
from suite_registry import (
    Mode,
    Role,
    SigningKey,
    digest,
    hash_algorithm,
    lookup,
    mode_hash,
    resolve,
    signing_key_from_pem,
    verify_signature,
)

logger = logging.getLogger(__name__)


# ---------- MAC ----------

class MacKind(str, Enum):
    CMAC = "cmac"
    HMAC = "hmac"


class MacAlgorithm(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: MacKind
    cipher_or_hash: str
    tag_len: int

    @model_validator(mode="after")
    def _check_tag_len(self):
        spec = lookup(self.cipher_or_hash)
        if self.kind is MacKind.CMAC:
            if spec.role is not Role.BLOCK_CIPHER or spec.output_len != 16 or self.tag_len != 16:
                raise ValueError("CMAC needs a 128-bit block cipher and a 16-byte tag")
        elif spec.role is not Role.HASH or self.tag_len != spec.output_len:
            raise ValueError("HMAC tag length must equal the digest length")
        return self

    @property
    def key_len(self) -> Optional[int]:
        """Required key length (CMAC) or None (HMAC takes any length)"""
        if self.kind is MacKind.CMAC:
            return lookup(self.cipher_or_hash).key_len
        return None


def mac_algorithm(name: str) -> MacAlgorithm:
    """MacAlgorithm for a registry MAC entry such as CMAC-AES-128 or HMAC-SHA-256"""
    spec = lookup(name)
    if spec.role is not Role.MAC:
        raise ConfigError(f"{name} is not a MAC algorithm")
    return MacAlgorithm(kind=MacKind(spec.construction), cipher_or_hash=spec.primitive, tag_len=spec.output_len)


def mac_tag(alg: MacAlgorithm, key: bytes, message: bytes) -> bytes:
    if alg.kind is MacKind.CMAC:
        if len(key) != alg.key_len:
            raise KeyLengthError(f"CMAC with {alg.cipher_or_hash} needs a {alg.key_len}-byte key, got {len(key)}")
        c = CMAC(algorithms.AES(bytes(key)))
        c.update(bytes(message))
        return c.finalize()
    h = hmac.HMAC(bytes(key), hash_algorithm(alg.cipher_or_hash))
    h.update(bytes(message))
    return h.finalize()


def mac_verify(alg: MacAlgorithm, key: bytes, message: bytes, tag: bytes) -> bool:
    """Constant-time comparison; a bad key length is simply a failed check"""
    try:
        expected = mac_tag(alg, key, message)
    except KeyLengthError:
        return False
    return constant_time.bytes_eq(expected, bytes(tag))


# ---------- semantic versions ----------

_SEMVER_RE = re.compile(
    r"^v?(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)"
    r"(?:-([0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*))?"
    r"(?:\+[0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*)?$"
)


def parse_version(text: str) -> Tuple:
    """Sort key for a semantic version; build metadata is ignored"""
    m = _SEMVER_RE.match(text)
    if not m:
        raise ConfigError(f"{text!r} is not a semantic version (MAJOR.MINOR.PATCH)")
    major, minor, patch, pre = m.groups()
    if pre is None:
        return int(major), int(minor), int(patch), 1, ()
    ids = tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in pre.split("."))
    return int(major), int(minor), int(patch), 0, ids


# ---------- firmware manifests ----------

class FirmwareManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_digest: bytes
    digest_alg: str
    image_len: int
    fw_version: str
    device_model: str
    mode: Mode
    signer_cert: CertificateRecord
    signer_chain: List[CertificateRecord] = []
    signature: bytes = b""

    @model_validator(mode="after")
    def _check_digest_len(self):
        if len(self.image_digest) != lookup(self.digest_alg).output_len:
            raise ValueError("image_digest length does not match digest_alg")
        return self

    def _body_fields(self) -> list:
        return [self.image_digest, algorithm_id(self.digest_alg), self.image_len, self.fw_version,
                self.device_model, self.mode.value, encode_compact(self.signer_cert),
                [encode_compact(c) for c in self.signer_chain]]

    def body_bytes(self) -> bytes:
        return canonical_dumps(self._body_fields())

    def to_bytes(self) -> bytes:
        return canonical_dumps(self._body_fields() + [self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "FirmwareManifest":
        fields = expect_list(canonical_loads(data), 9, "manifest")
        image_digest, alg, image_len, version, model, mode, cert, chain, signature = fields
        if (type(image_digest) is not bytes or type(image_len) is not int or image_len < 0
                or type(version) is not str or type(model) is not str or type(cert) is not bytes
                or type(chain) is not list or type(signature) is not bytes
                or any(type(c) is not bytes for c in chain)):
            raise MalformedEncoding("manifest fields have wrong types", offset=0)
        try:
            return cls(image_digest=image_digest, digest_alg=algorithm_name(alg), image_len=image_len,
                       fw_version=version, device_model=model, mode=Mode(mode),
                       signer_cert=decode_compact(cert), signer_chain=[decode_compact(c) for c in chain],
                       signature=signature)
        except ValueError as e:
            raise MalformedEncoding(f"invalid manifest: {str(e)[:80]}", offset=0)

    def to_pem(self) -> str:
        return armor("FIRMWARE MANIFEST", self.to_bytes())

    @classmethod
    def from_pem(cls, text: str) -> "FirmwareManifest":
        return cls.from_bytes(dearmor("FIRMWARE MANIFEST", text))


class FirmwareSigner:
    """Firmware signing key with its certificate and the chain above it"""

    def __init__(self, key: SigningKey, certificate: CertificateRecord, chain: Optional[List[CertificateRecord]] = None):
        self.key = key
        self.certificate = certificate
        self.chain = list(chain or [])


def issue_firmware_signer(ca: CertificateAuthority, source: RandomSource, now: int,
                          name: str = "firmware-signer", validity_days: int = DEVICE_CERT_DAYS) -> FirmwareSigner:
    key, certificate = issue_signing_identity(ca, source, now, name, validity_days)
    return FirmwareSigner(key, certificate, ca.leaf_chain)


def save_signer(signer: FirmwareSigner, directory: Union[str, Path]):
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / "signer.key").write_bytes(signer.key.to_pem())
    (path / "signer.cert").write_text(certificate_pem([signer.certificate] + signer.chain))


def load_signer(directory: Union[str, Path]) -> FirmwareSigner:
    path = Path(directory)
    try:
        key = signing_key_from_pem((path / "signer.key").read_bytes())
        certs = load_certificates((path / "signer.cert").read_text())
    except (OSError, ValueError, MalformedEncoding, NonCanonicalEncoding) as e:
        raise StoreError(f"cannot load firmware signer from {path}: {e}")
    return FirmwareSigner(key, certs[0], certs[1:])


def sign_firmware(image: bytes, version: str, device_model: str, signer: FirmwareSigner,
                  mode: Mode, now: int) -> FirmwareManifest:
    mode = Mode(mode)
    cert = signer.certificate
    if not cert.not_before <= now <= cert.not_after:
        raise ExpiredSigner(f"signer certificate {cert.subject_id} is not valid at {now}")
    if signer.key.algorithm not in {s.name for s in resolve(mode, Role.SIGNATURE)}:
        raise ModeMismatch(f"{signer.key.algorithm} signer cannot sign {mode.value}-mode firmware")
    parse_version(version)

    digest_alg = mode_hash(mode)
    draft = FirmwareManifest(image_digest=digest(digest_alg, image), digest_alg=digest_alg,
                             image_len=len(image), fw_version=version, device_model=device_model,
                             mode=mode, signer_cert=cert, signer_chain=signer.chain)
    logger.info(f"[FIRMWARE] Signed {device_model} {version} ({len(image)} bytes)")
    return draft.model_copy(update={"signature": signer.key.sign(draft.body_bytes())})


# ---------- secure boot ----------

class BootVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    boot: bool
    reason: Optional[str] = None

    @classmethod
    def halt(cls, reason: str) -> "BootVerdict":
        logger.warning(f"[BOOT] Halt: {reason}")
        return cls(boot=False, reason=reason)

    def describe(self) -> str:
        return "boot" if self.boot else f"halt {self.reason}"


def secure_boot_verify(image: bytes, manifest: FirmwareManifest, trust_root: CertificateRecord,
                       now: int) -> BootVerdict:
    """Fixed check order: signer chain, signature, length, digest"""
    chain_verdict = verify_chain(manifest.signer_cert, manifest.signer_chain, trust_root, now)
    if not chain_verdict.accepted:
        return BootVerdict.halt("untrusted-signer")
    cert = manifest.signer_cert
    if not verify_signature(cert.public_key_alg, cert.public_key, manifest.signature, manifest.body_bytes()):
        return BootVerdict.halt("bad-signature")
    if len(image) != manifest.image_len:
        return BootVerdict.halt("length-mismatch")
    if not constant_time.bytes_eq(digest(manifest.digest_alg, image), manifest.image_digest):
        return BootVerdict.halt("digest-mismatch")
    return BootVerdict(boot=True)


def secure_boot_verify_bytes(image: bytes, manifest_bytes: bytes, trust_root: CertificateRecord,
                             now: int) -> BootVerdict:
    """As secure_boot_verify, halting with malformed-manifest when the manifest does not decode"""
    try:
        manifest = FirmwareManifest.from_bytes(manifest_bytes)
    except Chip2AppError:
        return BootVerdict.halt("malformed-manifest")
    return secure_boot_verify(image, manifest, trust_root, now)


def _is_older(candidate: str, recorded: str) -> bool:
    return parse_version(candidate) < parse_version(recorded)


def boot_device(element: SecureElement, image: bytes, manifest: FirmwareManifest, now: int,
                anti_rollback: bool = ANTI_ROLLBACK) -> BootVerdict:
    """
    Secure boot against the trust root burnt into OTP, then the rollback
    rule; a successful boot records the version in the element.
    """
    root_bytes = element.otp_read(TRUST_ROOT_SLOT)
    if root_bytes is None:
        return BootVerdict.halt("no-trust-root")
    verdict = secure_boot_verify(image, manifest, decode_compact(root_bytes), now)
    if not verdict.boot:
        return verdict

    if not anti_rollback:
        element.record_boot_version(manifest.fw_version)
    elif not element.advance_boot_version(manifest.fw_version, _is_older):
        return BootVerdict.halt("rollback")
    logger.info(f"[BOOT] {element.device_uuid} booted {manifest.device_model} {manifest.fw_version}")
    return verdict
