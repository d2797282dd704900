# -*- coding: utf-8 -*-
"""
Keystore - simulated secure element with one-time-programmable slots, the
root-key provisioning pipeline, and encrypted-at-rest persistence.

Private keys never leave a SecureElement: callers hold handles and public keys.
"""

import logging
import os
import threading
import uuid
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from pydantic import BaseModel, ConfigDict, Field

from compact_cert import (
    CertificateRecord,
    algorithm_id,
    algorithm_name,
    canonical_dumps,
    canonical_loads,
    decode_compact,
    encode_compact,
)
from config import (
    AEAD_NONCE_BYTES,
    CA_CHAIN_SLOT,
    DEVICE_CERT_DAYS,
    DEVICE_CERT_SLOT,
    HEALTH_SAMPLE_BYTES,
    KEYGEN_ALPHA,
    OTP_SLOT_COUNT,
    OTP_SLOT_SIZE,
    STORE_KDF_LABEL,
    STORE_MAGIC,
    STORE_PASSPHRASE,
    TRUST_ROOT_SLOT,
)
from entropy import RandomSource, checked_random_bytes, health_gate
from errors import (
    CaRefusal,
    Chip2AppError,
    HealthGateError,
    LengthError,
    OtpRangeError,
    OtpSlotUnavailable,
    OtpWriteOnceError,
    StoreError,
    UnknownHandle,
)
from pki import CertificateAuthority, Rejection, ca_issue, first_available, generate_csr, ra_review
from suite_registry import (
    REGISTRY,
    Mode,
    Role,
    SigningKey,
    agree,
    agreement_private_bytes,
    agreement_public_bytes,
    generate_agreement_key,
    generate_signing_key,
    load_agreement_private,
    load_signing_key,
    lookup,
    one_step_kdf,
)

logger = logging.getLogger(__name__)

_SALT_BYTES = 16
_STORE_KEY_BYTES = 32


class SlotState(str, Enum):
    BLANK = "blank"
    PROGRAMMED = "programmed"


class OtpSlot(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    state: SlotState = SlotState.BLANK
    data: Optional[bytes] = None


class ElementSigner:
    """Sign-only view of one element key, usable wherever a Signer is expected"""

    def __init__(self, element: "SecureElement", handle: str):
        self._element = element
        self.handle = handle
        self.algorithm = element.algorithm_of(handle)

    @property
    def public_key(self) -> bytes:
        return self._element.public_key(self.handle)

    def sign(self, message: bytes) -> bytes:
        return self._element.sign(self.handle, message)


class SecureElement:
    """
    Software secure element: fixed OTP slot array plus a private key table.
    Mutations are serialized; reads and signing need no lock.
    """

    def __init__(self, device_uuid: str, slot_count: int = OTP_SLOT_COUNT):
        self.device_uuid = device_uuid
        self.mode: Optional[Mode] = None
        self.root_handle: Optional[str] = None
        self.boot_version: Optional[str] = None
        self._slots: List[OtpSlot] = [OtpSlot(index=i) for i in range(slot_count)]
        self._keys: Dict[str, Tuple[str, object]] = {}
        self._counter = 0
        self._lock = threading.RLock()

    @classmethod
    def create(cls, source: RandomSource, slot_count: int = OTP_SLOT_COUNT) -> "SecureElement":
        raw = checked_random_bytes(source, 16)
        return cls(str(uuid.UUID(bytes=raw, version=4)), slot_count)

    @property
    def slots(self) -> Tuple[OtpSlot, ...]:
        return tuple(self._slots)

    @property
    def handles(self) -> Tuple[str, ...]:
        return tuple(self._keys)

    # ---------- keys ----------

    def generate_key(self, algorithm: str, source: RandomSource) -> str:
        spec = lookup(algorithm)
        if spec.role is Role.SIGNATURE:
            key = generate_signing_key(algorithm, source)
        elif spec.role is Role.KEY_AGREEMENT:
            key = generate_agreement_key(algorithm, source)
        else:
            raise UnknownHandle(f"{algorithm} keys cannot live in the element")
        with self._lock:
            handle = f"key-{self._counter}"
            self._counter += 1
            self._keys[handle] = (algorithm, key)
        logger.info(f"[KEYSTORE] Generated {algorithm} key {handle} in element {self.device_uuid}")
        return handle

    def _entry(self, handle: str) -> Tuple[str, object]:
        try:
            return self._keys[handle]
        except KeyError:
            raise UnknownHandle(f"no key with handle {handle!r}")

    def algorithm_of(self, handle: str) -> str:
        return self._entry(handle)[0]

    def public_key(self, handle: str) -> bytes:
        algorithm, key = self._entry(handle)
        if isinstance(key, SigningKey):
            return key.public_key
        return agreement_public_bytes(key)

    def sign(self, handle: str, message: bytes) -> bytes:
        algorithm, key = self._entry(handle)
        if not isinstance(key, SigningKey):
            raise UnknownHandle(f"{handle} is a {algorithm} key, not a signing key")
        return key.sign(message)

    def agree(self, handle: str, peer_public: bytes) -> bytes:
        """Raw shared secret between an element-held agreement key and a peer"""
        algorithm, key = self._entry(handle)
        if isinstance(key, SigningKey):
            raise UnknownHandle(f"{handle} is a {algorithm} key, not a key-agreement key")
        return agree(algorithm, key, peer_public)

    def signer(self, handle: str) -> ElementSigner:
        return ElementSigner(self, handle)

    # ---------- OTP ----------

    def _check_index(self, index: int):
        if not 0 <= index < len(self._slots):
            raise OtpRangeError(f"slot {index} outside 0..{len(self._slots) - 1}")

    def otp_write(self, index: int, data: bytes):
        self._check_index(index)
        data = bytes(data)
        if len(data) > OTP_SLOT_SIZE:
            raise LengthError(f"{len(data)} bytes exceeds the {OTP_SLOT_SIZE}-byte slot")
        with self._lock:
            if self._slots[index].state is SlotState.PROGRAMMED:
                raise OtpWriteOnceError(f"slot {index} is already programmed")
            self._slots[index] = OtpSlot(index=index, state=SlotState.PROGRAMMED, data=data)
        logger.info(f"[KEYSTORE] Programmed OTP slot {index} ({len(data)} bytes)")

    def otp_read(self, index: int) -> Optional[bytes]:
        self._check_index(index)
        return self._slots[index].data

    def record_boot_version(self, version: str):
        with self._lock:
            self.boot_version = version

    def advance_boot_version(self, version: str, is_older: Callable[[str, str], bool]) -> bool:
        """
        Record version unless is_older(version, recorded) holds. The check and
        the write happen under one lock; returns False when refused.
        """
        with self._lock:
            if self.boot_version is not None and is_older(version, self.boot_version):
                return False
            self.boot_version = version
            return True

    # ---------- persistence ----------

    def _state(self) -> dict:
        keys = []
        for handle, (algorithm, key) in self._keys.items():
            raw = key.private_bytes() if isinstance(key, SigningKey) else agreement_private_bytes(key)
            keys.append([handle, algorithm_id(algorithm), raw])
        return {
            "uuid": self.device_uuid,
            "mode": self.mode.value if self.mode else None,
            "root_handle": self.root_handle,
            "boot_version": self.boot_version,
            "counter": self._counter,
            "slots": [[s.state.value, s.data] for s in self._slots],
            "keys": keys,
        }

    @classmethod
    def _from_state(cls, state: dict) -> "SecureElement":
        element = cls(state["uuid"], len(state["slots"]))
        element.mode = Mode(state["mode"]) if state["mode"] else None
        element.root_handle = state["root_handle"]
        element.boot_version = state["boot_version"]
        element._counter = state["counter"]
        element._slots = [OtpSlot(index=i, state=SlotState(st), data=data)
                          for i, (st, data) in enumerate(state["slots"])]
        for handle, alg_id, raw in state["keys"]:
            algorithm = algorithm_name(alg_id)
            if lookup(algorithm).role is Role.SIGNATURE:
                element._keys[handle] = (algorithm, load_signing_key(algorithm, raw))
            else:
                element._keys[handle] = (algorithm, load_agreement_private(algorithm, raw))
        return element


def otp_write(se: SecureElement, index: int, data: bytes):
    se.otp_write(index, data)


def otp_read(se: SecureElement, index: int) -> Optional[bytes]:
    return se.otp_read(index)


# ---------- device identity ----------

class DeviceIdentity(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    device_uuid: str
    mode: Mode
    root_public_key: bytes
    root_key_handle: str
    device_certificate: CertificateRecord
    ca_chain: List[CertificateRecord] = []
    trust_root: CertificateRecord
    element: SecureElement = Field(exclude=True, repr=False)

    def to_bytes(self) -> bytes:
        return canonical_dumps([self.device_uuid, self.mode.value, self.root_public_key, self.root_key_handle,
                                encode_compact(self.device_certificate),
                                [encode_compact(c) for c in self.ca_chain],
                                encode_compact(self.trust_root)])


def _encode_chain(chain: List[CertificateRecord]) -> bytes:
    return canonical_dumps([encode_compact(c) for c in chain])


def _decode_chain(data: bytes) -> List[CertificateRecord]:
    return [decode_compact(item) for item in canonical_loads(data)]


def provision_device(mode: Mode, ca: CertificateAuthority, source: RandomSource, now: int,
                     element: Optional[SecureElement] = None, subject_id: Optional[str] = None,
                     validity_days: int = DEVICE_CERT_DAYS) -> DeviceIdentity:
    """
    Root-key provisioning: gate entropy, generate the key pair inside the
    element, derive the public key, have the CA certify it, burn certificate
    and trust anchors into OTP, keep the private key internal.
    """
    mode = Mode(mode)
    report = health_gate(source.read(HEALTH_SAMPLE_BYTES), KEYGEN_ALPHA)
    if not report.overall_pass:
        logger.warning("[KEYSTORE] Provisioning refused: entropy health gate failed")
        raise HealthGateError("provisioning refused: entropy health gate failed", report=report)

    element = element or SecureElement.create(source)
    for index in (DEVICE_CERT_SLOT, TRUST_ROOT_SLOT, CA_CHAIN_SLOT):
        if index >= len(element.slots) or element.slots[index].state is SlotState.PROGRAMMED:
            raise OtpSlotUnavailable(f"OTP slot {index} is not available for provisioning")

    # 1. key pair generation, 2. public-key derivation
    algorithm = first_available(mode, Role.SIGNATURE)
    handle = element.generate_key(algorithm, source)
    root_public_key = element.public_key(handle)

    # 3. CA signs the device certificate
    csr = generate_csr(subject_id or f"device-{element.device_uuid}", element.signer(handle))
    approval = ra_review(csr, ca.ra.policy, ca.ra, now)
    if isinstance(approval, Rejection):
        raise CaRefusal(f"registration rejected: {approval.reason}", code=approval.reason)
    certificate = ca_issue(approval, ca, validity_days, now)

    # 4. certificate and anchors into OTP, 5. private key stays behind the handle
    element.otp_write(DEVICE_CERT_SLOT, encode_compact(certificate))
    element.otp_write(TRUST_ROOT_SLOT, encode_compact(ca.trust_root))
    element.otp_write(CA_CHAIN_SLOT, _encode_chain(ca.leaf_chain))
    element.mode = mode
    element.root_handle = handle

    logger.info(f"[KEYSTORE] Provisioned {element.device_uuid} root={root_public_key[:4].hex()}...")
    return DeviceIdentity(device_uuid=element.device_uuid, mode=mode, root_public_key=root_public_key,
                          root_key_handle=handle, device_certificate=certificate,
                          ca_chain=list(ca.leaf_chain), trust_root=ca.trust_root, element=element)


def identity_from_element(element: SecureElement) -> DeviceIdentity:
    """Rebuild the identity of a provisioned element from its OTP contents"""
    cert_bytes = element.otp_read(DEVICE_CERT_SLOT)
    if cert_bytes is None or element.root_handle is None:
        raise StoreError(f"element {element.device_uuid} is not provisioned")
    return DeviceIdentity(
        device_uuid=element.device_uuid,
        mode=element.mode,
        root_public_key=element.public_key(element.root_handle),
        root_key_handle=element.root_handle,
        device_certificate=decode_compact(cert_bytes),
        ca_chain=_decode_chain(element.otp_read(CA_CHAIN_SLOT)),
        trust_root=decode_compact(element.otp_read(TRUST_ROOT_SLOT)),
        element=element,
    )


def sign_with_root(identity: DeviceIdentity, message: bytes) -> bytes:
    return identity.element.sign(identity.root_key_handle, message)


def export_public(identity: DeviceIdentity) -> Tuple[bytes, CertificateRecord]:
    return identity.root_public_key, identity.device_certificate


# ---------- encrypted store ----------

def _store_key(passphrase: str, salt: bytes) -> bytes:
    # The store format is mode-independent: always the current-mode KDF
    kdf_hash = REGISTRY.preferred(Mode.CURRENT, Role.KDF).primitive
    return one_step_kdf(passphrase.encode("utf-8"), STORE_KDF_LABEL, salt, _STORE_KEY_BYTES, kdf_hash)


def save_element(element: SecureElement, path: Union[str, Path], source: RandomSource,
                 passphrase: str = STORE_PASSPHRASE):
    """magic || salt || nonce || AES-256-GCM(canonical CBOR state), magic as AAD"""
    salt = checked_random_bytes(source, _SALT_BYTES)
    nonce = checked_random_bytes(source, AEAD_NONCE_BYTES)
    payload = AESGCM(_store_key(passphrase, salt)).encrypt(nonce, canonical_dumps(element._state()), STORE_MAGIC)

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(STORE_MAGIC + salt + nonce + payload)
    os.replace(tmp, path)
    logger.debug(f"[KEYSTORE] Saved element {element.device_uuid} to {path}")


def load_element(path: Union[str, Path], passphrase: str = STORE_PASSPHRASE) -> SecureElement:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise StoreError(f"cannot read store {path}: {e}")
    header = len(STORE_MAGIC) + _SALT_BYTES + AEAD_NONCE_BYTES
    if not blob.startswith(STORE_MAGIC) or len(blob) <= header:
        raise StoreError(f"{path} is not a secure element store")

    salt = blob[len(STORE_MAGIC):len(STORE_MAGIC) + _SALT_BYTES]
    nonce = blob[len(STORE_MAGIC) + _SALT_BYTES:header]
    try:
        plaintext = AESGCM(_store_key(passphrase, salt)).decrypt(nonce, blob[header:], STORE_MAGIC)
    except InvalidTag:
        raise StoreError("store does not decrypt: wrong passphrase or corrupted file")
    try:
        return SecureElement._from_state(canonical_loads(plaintext))
    except (Chip2AppError, KeyError, TypeError, ValueError) as e:
        raise StoreError(f"store contents are invalid: {e}")
