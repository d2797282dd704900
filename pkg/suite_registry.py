# -*- coding: utf-8 -*-
"""
Suite Registry - the Current/Future algorithm matrices and the primitives
behind them. Every algorithm name used elsewhere is resolved here.
"""

import logging
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterable, Optional, Tuple

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed448, ed25519, x448, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.concatkdf import ConcatKDFHash
from pydantic import BaseModel, ConfigDict

from compact_cert import algorithm_id, algorithm_name, canonical_dumps, canonical_loads, expect_list
from config import AEAD_NONCE_BYTES
from entropy import RandomSource, checked_random_bytes
from errors import (
    AlgorithmNotAvailable,
    AuthenticationError,
    EmptySecret,
    InvalidPublicKey,
    MalformedCiphertext,
    MalformedEncoding,
    ModeMismatch,
    NonCanonicalEncoding,
)

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    CURRENT = "current"
    FUTURE = "future"


class Role(str, Enum):
    SYMMETRIC_ENCRYPTION = "symmetric-encryption"
    SIGNATURE = "signature"
    KEY_AGREEMENT = "key-agreement"
    KEY_ENCAPSULATION = "key-encapsulation"
    HASH = "hash"
    MAC = "mac"
    KDF = "kdf"
    BLOCK_CIPHER = "block-cipher"


class AlgorithmSpec(BaseModel):
    """
    key_len is the secret key length for symmetric/MAC entries and the public
    key length for asymmetric ones; output_len is the signature, tag, digest,
    shared-secret or ciphertext length.
    """

    model_config = ConfigDict(frozen=True)

    role: Role
    name: str
    security_bits: int
    key_len: int
    output_len: int
    parameter_set: Optional[str] = None
    primitive: Optional[str] = None  # underlying hash or block cipher entry for MAC/KDF
    construction: Optional[str] = None  # "cmac" or "hmac" on MAC entries
    available: bool = True


def _spec(role, name, bits, key_len, output_len, **kw) -> AlgorithmSpec:
    return AlgorithmSpec(role=role, name=name, security_bits=bits, key_len=key_len,
                         output_len=output_len, **kw)


_AES128 = _spec(Role.SYMMETRIC_ENCRYPTION, "AES-128-GCM", 128, 16, 16)
_AES256 = _spec(Role.SYMMETRIC_ENCRYPTION, "AES-256-GCM", 256, 32, 16)
_SHA256 = _spec(Role.HASH, "SHA-256", 128, 0, 32)
_SHA3_384 = _spec(Role.HASH, "SHA3-384", 192, 0, 48)
_SHA3_512 = _spec(Role.HASH, "SHA3-512", 256, 0, 64)

# Block ciphers under the CMAC entries; resolvable by name, not part of either matrix
_PRIMITIVES = (
    _spec(Role.BLOCK_CIPHER, "AES-128", 128, 16, 16),
    _spec(Role.BLOCK_CIPHER, "AES-256", 256, 32, 16),
)

# No vetted post-quantum implementation in the stack: entries resolve, operations refuse
_TABLE: Dict[Tuple[Mode, Role], Tuple[AlgorithmSpec, ...]] = {
    (Mode.CURRENT, Role.SYMMETRIC_ENCRYPTION): (_AES128, _AES256),
    (Mode.CURRENT, Role.SIGNATURE): (
        _spec(Role.SIGNATURE, "Ed25519", 128, 32, 64),
        _spec(Role.SIGNATURE, "Ed448", 224, 57, 114),
    ),
    (Mode.CURRENT, Role.KEY_AGREEMENT): (
        _spec(Role.KEY_AGREEMENT, "X25519", 128, 32, 32),
        _spec(Role.KEY_AGREEMENT, "X448", 224, 56, 56),
    ),
    (Mode.CURRENT, Role.HASH): (_SHA256,),
    (Mode.CURRENT, Role.MAC): (
        _spec(Role.MAC, "CMAC-AES-128", 128, 16, 16, primitive="AES-128", construction="cmac"),
        _spec(Role.MAC, "HMAC-SHA-256", 128, 32, 32, primitive="SHA-256", construction="hmac"),
    ),
    (Mode.CURRENT, Role.KDF): (
        _spec(Role.KDF, "KDF-SHA-256", 128, 0, 32, primitive="SHA-256"),
    ),
    (Mode.FUTURE, Role.SYMMETRIC_ENCRYPTION): (_AES256,),
    (Mode.FUTURE, Role.KEY_ENCAPSULATION): (
        _spec(Role.KEY_ENCAPSULATION, "ML-KEM", 192, 1184, 1088,
              parameter_set="ML-KEM-768", available=False),
    ),
    (Mode.FUTURE, Role.SIGNATURE): (
        _spec(Role.SIGNATURE, "ML-DSA", 192, 1952, 3309,
              parameter_set="ML-DSA-65", available=False),
        _spec(Role.SIGNATURE, "SLH-DSA", 128, 32, 7856,
              parameter_set="SLH-DSA-SHA2-128s", available=False),
    ),
    (Mode.FUTURE, Role.HASH): (_SHA3_384, _SHA3_512),
    (Mode.FUTURE, Role.MAC): (
        _spec(Role.MAC, "CMAC-AES-256", 256, 32, 16, primitive="AES-256", construction="cmac"),
        _spec(Role.MAC, "HMAC-SHA3-384", 192, 48, 48, primitive="SHA3-384", construction="hmac"),
    ),
    (Mode.FUTURE, Role.KDF): (
        _spec(Role.KDF, "KDF-SHA3-384", 192, 0, 48, primitive="SHA3-384"),
    ),
}

_HASHES = {
    "SHA-256": hashes.SHA256,
    "SHA3-384": hashes.SHA3_384,
    "SHA3-512": hashes.SHA3_512,
}


class SuiteRegistry:
    """Immutable (mode, role) -> ordered algorithm matrix"""

    def __init__(self, table: Dict[Tuple[Mode, Role], Tuple[AlgorithmSpec, ...]],
                 primitives: Iterable[AlgorithmSpec] = ()):
        self._table = MappingProxyType(dict(table))
        by_name: Dict[str, AlgorithmSpec] = {spec.name: spec for spec in primitives}
        modes: Dict[str, set] = {}
        for (mode, _), specs in self._table.items():
            for spec in specs:
                by_name[spec.name] = spec
                modes.setdefault(spec.name, set()).add(mode)
        self._by_name = MappingProxyType(by_name)
        self._modes = MappingProxyType({k: frozenset(v) for k, v in modes.items()})

    def resolve(self, mode: Mode, role: Role) -> Tuple[AlgorithmSpec, ...]:
        try:
            return self._table[(Mode(mode), Role(role))]
        except KeyError:
            raise AlgorithmNotAvailable(f"no {Role(role).value} algorithm in {Mode(mode).value} mode")

    def preferred(self, mode: Mode, role: Role) -> AlgorithmSpec:
        return self.resolve(mode, role)[0]

    def lookup(self, name: str) -> AlgorithmSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise AlgorithmNotAvailable(f"algorithm {name!r} is not registered")

    def modes_for(self, name: str) -> frozenset:
        self.lookup(name)
        return self._modes.get(name, frozenset())

    def all_specs(self) -> Iterable[AlgorithmSpec]:
        return self._by_name.values()

    def entries(self) -> Iterable[Tuple[Mode, Role, Tuple[AlgorithmSpec, ...]]]:
        for (mode, role), specs in self._table.items():
            yield mode, role, specs


REGISTRY = SuiteRegistry(_TABLE, _PRIMITIVES)


def resolve(mode: Mode, role: Role) -> Tuple[AlgorithmSpec, ...]:
    """Ordered matrix entries for (mode, role); AlgorithmNotAvailable if absent"""
    return REGISTRY.resolve(mode, role)


def lookup(name: str) -> AlgorithmSpec:
    return REGISTRY.lookup(name)


def require_available(spec: AlgorithmSpec) -> AlgorithmSpec:
    if not spec.available:
        raise AlgorithmNotAvailable(f"{spec.parameter_set or spec.name} has no implementation in this build")
    return spec


def require_mode(name: str, mode: Mode, role: Role) -> AlgorithmSpec:
    """Spec for name, provided it is registered for (mode, role)"""
    spec = lookup(name)
    if spec not in resolve(mode, role):
        raise ModeMismatch(f"{name} is not a {Role(role).value} algorithm of {Mode(mode).value} mode")
    return spec


def mode_hash(mode: Mode) -> str:
    return REGISTRY.preferred(mode, Role.HASH).name


def mode_aead(mode: Mode) -> AlgorithmSpec:
    return REGISTRY.preferred(mode, Role.SYMMETRIC_ENCRYPTION)


# ---------- hashing ----------

def hash_algorithm(name: str) -> hashes.HashAlgorithm:
    spec = lookup(name)
    if spec.role is not Role.HASH:
        raise AlgorithmNotAvailable(f"{name} is not a hash")
    return _HASHES[name]()


def digest(name: str, data: bytes) -> bytes:
    h = hashes.Hash(hash_algorithm(name))
    h.update(data)
    return h.finalize()


# ---------- signatures ----------

_SIGNERS = {
    "Ed25519": (ed25519.Ed25519PrivateKey, ed25519.Ed25519PublicKey),
    "Ed448": (ed448.Ed448PrivateKey, ed448.Ed448PublicKey),
}
_SEED_LEN = {"Ed25519": 32, "Ed448": 57}


def _signature_classes(name: str):
    spec = lookup(name)
    if spec.role is not Role.SIGNATURE:
        raise AlgorithmNotAvailable(f"{name} is not a signature algorithm")
    require_available(spec)
    return _SIGNERS[name]


class SigningKey:
    """Signing key held outside a secure element (CA, RA, Document Signer, firmware signer)"""

    def __init__(self, algorithm: str, private):
        self.algorithm = algorithm
        self._private = private

    @property
    def public_key(self) -> bytes:
        return self._private.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(
            serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
            serialization.NoEncryption())

    def to_pem(self) -> bytes:
        return self._private.private_bytes(
            serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption())


def generate_signing_key(name: str, source: RandomSource) -> SigningKey:
    private_cls, _ = _signature_classes(name)
    seed = checked_random_bytes(source, _SEED_LEN[name])
    return SigningKey(name, private_cls.from_private_bytes(seed))


def load_signing_key(name: str, raw: bytes) -> SigningKey:
    private_cls, _ = _signature_classes(name)
    try:
        return SigningKey(name, private_cls.from_private_bytes(raw))
    except ValueError as e:
        raise InvalidPublicKey(f"bad {name} private key: {e}")


def signing_key_from_pem(pem: bytes) -> SigningKey:
    private = serialization.load_pem_private_key(pem, password=None)
    for name, (private_cls, _) in _SIGNERS.items():
        if isinstance(private, private_cls):
            return SigningKey(name, private)
    raise AlgorithmNotAvailable(f"unsupported signing key type {type(private).__name__}")


def verify_signature(name: str, public_key: bytes, signature: bytes, message: bytes) -> bool:
    """True iff signature verifies; malformed keys or signatures are simply False"""
    _, public_cls = _signature_classes(name)
    try:
        public_cls.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# ---------- key agreement ----------

_AGREEMENT = {
    "X25519": (x25519.X25519PrivateKey, x25519.X25519PublicKey),
    "X448": (x448.X448PrivateKey, x448.X448PublicKey),
}


def _agreement_classes(name: str):
    spec = lookup(name)
    if spec.role is not Role.KEY_AGREEMENT:
        raise AlgorithmNotAvailable(f"{name} is not a key-agreement algorithm")
    return _AGREEMENT[name]


def generate_agreement_key(name: str, source: RandomSource):
    private_cls, _ = _agreement_classes(name)
    return private_cls.from_private_bytes(checked_random_bytes(source, lookup(name).key_len))


def load_agreement_private(name: str, raw: bytes):
    private_cls, _ = _agreement_classes(name)
    try:
        return private_cls.from_private_bytes(raw)
    except ValueError as e:
        raise InvalidPublicKey(f"bad {name} private key: {e}")


def agreement_public_bytes(private) -> bytes:
    return private.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def agreement_private_bytes(private) -> bytes:
    return private.private_bytes(serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
                                 serialization.NoEncryption())


def agree(name: str, private, peer_public: bytes) -> bytes:
    """Raw shared secret; InvalidPublicKey for wrong-length or degenerate peer keys"""
    _, public_cls = _agreement_classes(name)
    if len(peer_public) != lookup(name).key_len:
        raise InvalidPublicKey(f"{name} public key must be {lookup(name).key_len} bytes, got {len(peer_public)}")
    try:
        return private.exchange(public_cls.from_public_bytes(peer_public))
    except ValueError as e:
        raise InvalidPublicKey(f"key agreement failed: {e}")


# ---------- key derivation ----------

def one_step_kdf(secret: bytes, label: bytes, context: bytes, length: int, hash_name: str) -> bytes:
    """
    One-step KDF: K = H(counter_be32 || secret || label || context), counter
    from 1, concatenated and truncated to length.
    """
    if not secret:
        raise EmptySecret("shared secret is empty")
    kdf = ConcatKDFHash(algorithm=hash_algorithm(hash_name), length=length,
                        otherinfo=bytes(label) + bytes(context))
    return kdf.derive(bytes(secret))


# ---------- AEAD ----------

def aead_encrypt(name: str, key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> bytes:
    if lookup(name).role is not Role.SYMMETRIC_ENCRYPTION:
        raise AlgorithmNotAvailable(f"{name} is not an AEAD")
    return AESGCM(key).encrypt(nonce, plaintext, aad)


def aead_decrypt(name: str, key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, aad)
    except InvalidTag:
        raise AuthenticationError(f"{name} authentication failed")


# ---------- hybrid encryption ----------

_WRAP_LABEL = b"c2a-hybrid-wrap-v1"


class HybridPublicKey(BaseModel):
    model_config = ConfigDict(frozen=True)

    algorithm: str
    key: bytes

    def to_pem(self) -> bytes:
        _, public_cls = _agreement_classes(self.algorithm)
        return public_cls.from_public_bytes(self.key).public_bytes(
            serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo)


class HybridPrivateKey:
    def __init__(self, algorithm: str, private):
        self.algorithm = algorithm
        self._private = private

    @property
    def public(self) -> HybridPublicKey:
        return HybridPublicKey(algorithm=self.algorithm, key=agreement_public_bytes(self._private))

    def to_pem(self) -> bytes:
        return self._private.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
                                           serialization.NoEncryption())


def _agreement_name_for(private_or_public) -> str:
    for name, (private_cls, public_cls) in _AGREEMENT.items():
        if isinstance(private_or_public, (private_cls, public_cls)):
            return name
    raise AlgorithmNotAvailable(f"unsupported key type {type(private_or_public).__name__}")


def hybrid_private_from_pem(pem: bytes) -> HybridPrivateKey:
    private = serialization.load_pem_private_key(pem, password=None)
    return HybridPrivateKey(_agreement_name_for(private), private)


def hybrid_public_from_pem(pem: bytes) -> HybridPublicKey:
    public = serialization.load_pem_public_key(pem)
    name = _agreement_name_for(public)
    return HybridPublicKey(algorithm=name, key=public.public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw))


def _transport_spec(mode: Mode) -> AlgorithmSpec:
    if Mode(mode) is Mode.FUTURE:
        return require_available(REGISTRY.preferred(mode, Role.KEY_ENCAPSULATION))
    return REGISTRY.preferred(mode, Role.KEY_AGREEMENT)


def generate_hybrid_keypair(mode: Mode, source: RandomSource) -> HybridPrivateKey:
    spec = _transport_spec(mode)
    return HybridPrivateKey(spec.name, generate_agreement_key(spec.name, source))


class HybridCiphertext(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Mode
    transport_alg: str
    aead_alg: str
    encapsulated_key: bytes
    nonce: bytes
    body: bytes

    def header(self) -> bytes:
        return canonical_dumps([self.mode.value, algorithm_id(self.transport_alg),
                                algorithm_id(self.aead_alg), self.encapsulated_key])

    def to_bytes(self) -> bytes:
        return canonical_dumps([self.mode.value, algorithm_id(self.transport_alg),
                                algorithm_id(self.aead_alg), self.encapsulated_key,
                                self.nonce, self.body])

    @classmethod
    def from_bytes(cls, data: bytes) -> "HybridCiphertext":
        try:
            fields = expect_list(canonical_loads(data), 6, "hybrid ciphertext")
            mode, transport_id, aead_id, encapsulated_key, nonce, body = fields
            return cls(mode=Mode(mode), transport_alg=algorithm_name(transport_id),
                       aead_alg=algorithm_name(aead_id), encapsulated_key=encapsulated_key,
                       nonce=nonce, body=body)
        except (MalformedEncoding, NonCanonicalEncoding, ValueError) as e:
            raise MalformedCiphertext(f"unreadable ciphertext: {e}")


def _wrap_layout(transport: AlgorithmSpec, aead: AlgorithmSpec) -> Tuple[int, int, int]:
    # ephemeral public || wrap nonce || wrapped content key (key + tag)
    return transport.key_len, AEAD_NONCE_BYTES, aead.key_len + aead.output_len


def hybrid_encrypt(recipient_public: HybridPublicKey, plaintext: bytes, mode: Mode,
                   source: RandomSource) -> HybridCiphertext:
    """
    Fresh content key per message encrypts the payload; only that key is
    protected under the recipient's public key.
    """
    mode = Mode(mode)
    transport = _transport_spec(mode)
    if recipient_public.algorithm != transport.name:
        raise ModeMismatch(f"{recipient_public.algorithm} key cannot receive {mode.value}-mode ciphertext")
    aead = mode_aead(mode)
    kdf_hash = REGISTRY.preferred(mode, Role.KDF).primitive

    content_key = checked_random_bytes(source, aead.key_len)
    nonce = checked_random_bytes(source, AEAD_NONCE_BYTES)

    ephemeral = generate_agreement_key(transport.name, source)
    ephemeral_public = agreement_public_bytes(ephemeral)
    shared = agree(transport.name, ephemeral, recipient_public.key)
    wrap_key = one_step_kdf(shared, _WRAP_LABEL, ephemeral_public + recipient_public.key,
                            aead.key_len, kdf_hash)
    wrap_nonce = checked_random_bytes(source, AEAD_NONCE_BYTES)
    wrapped = aead_encrypt(aead.name, wrap_key, wrap_nonce, content_key, ephemeral_public)

    draft = HybridCiphertext(mode=mode, transport_alg=transport.name, aead_alg=aead.name,
                             encapsulated_key=ephemeral_public + wrap_nonce + wrapped,
                             nonce=nonce, body=b"")
    body = aead_encrypt(aead.name, content_key, nonce, plaintext, draft.header())
    return draft.model_copy(update={"body": body})


def hybrid_decrypt(recipient_private: HybridPrivateKey, ct: HybridCiphertext) -> bytes:
    mode = Mode(ct.mode)
    transport = _transport_spec(mode)
    if recipient_private.algorithm != transport.name or ct.transport_alg != transport.name:
        raise ModeMismatch(f"{recipient_private.algorithm} key cannot open {mode.value}-mode ciphertext")
    aead = mode_aead(mode)
    if ct.aead_alg != aead.name:
        raise ModeMismatch(f"{ct.aead_alg} is not the {mode.value}-mode AEAD")
    kdf_hash = REGISTRY.preferred(mode, Role.KDF).primitive

    pub_len, nonce_len, wrapped_len = _wrap_layout(transport, aead)
    if len(ct.encapsulated_key) != pub_len + nonce_len + wrapped_len:
        raise MalformedCiphertext(f"encapsulated key must be {pub_len + nonce_len + wrapped_len} bytes")
    if len(ct.nonce) != AEAD_NONCE_BYTES or len(ct.body) < aead.output_len:
        raise MalformedCiphertext("nonce or body too short")

    ephemeral_public = ct.encapsulated_key[:pub_len]
    wrap_nonce = ct.encapsulated_key[pub_len:pub_len + nonce_len]
    wrapped = ct.encapsulated_key[pub_len + nonce_len:]

    try:
        shared = agree(transport.name, recipient_private._private, ephemeral_public)
    except InvalidPublicKey:
        raise AuthenticationError("encapsulated key does not decode to a valid ephemeral key")
    own_public = agreement_public_bytes(recipient_private._private)
    wrap_key = one_step_kdf(shared, _WRAP_LABEL, ephemeral_public + own_public, aead.key_len, kdf_hash)
    content_key = aead_decrypt(aead.name, wrap_key, wrap_nonce, wrapped, ephemeral_public)
    return aead_decrypt(aead.name, content_key, ct.nonce, ct.body, ct.header())
