# -*- coding: utf-8 -*-
"""
Chip Auth - chip authentication state machine: chip static key + nonce,
reader ephemeral key, shared-secret agreement, one-step key derivation,
key confirmation, and clone detection through Passive Authentication.

Sessions are immutable; every transition returns a new SessionContext.
"""

import logging
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from compact_cert import CertificateRecord, canonical_dumps, canonical_loads, expect_list
from config import CHIP_KEY_GROUP, CHIP_NAME_GROUP, NONCE_BYTES
from entropy import RandomSource, checked_random_bytes
from errors import ConfigError, InvalidPublicKey, MalformedEncoding, StateError
from integrity import MacAlgorithm, MacKind, mac_tag, mac_verify
from keystore import SecureElement
from pki import CertificateAuthority, SignedDataBundle, build_signed_bundle, issue_signing_identity, passive_authenticate
from suite_registry import (
    Mode,
    Role,
    REGISTRY,
    SigningKey,
    agree,
    agreement_public_bytes,
    generate_agreement_key,
    mode_aead,
    mode_hash,
    one_step_kdf,
    require_available,
)

logger = logging.getLogger(__name__)

ENC_LABEL = b"c2a-enc-v1"
MAC_LABEL = b"c2a-mac-v1"
CONFIRM_LABEL = b"c2a-confirm-v1"


class SessionRole(str, Enum):
    CHIP = "chip"
    READER = "reader"


class SessionState(str, Enum):
    INIT = "init"
    HELLO_SENT = "hello-sent"
    SECRET_DERIVED = "secret-derived"
    AUTHENTICATED = "authenticated"
    FAILED = "failed"


class ChipHello(BaseModel):
    model_config = ConfigDict(frozen=True)

    chip_public_key: bytes
    nonce: bytes

    def to_bytes(self) -> bytes:
        return canonical_dumps(["hello", self.chip_public_key, self.nonce])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChipHello":
        tag, key, nonce = expect_list(canonical_loads(data), 3, "hello")
        if tag != "hello" or type(key) is not bytes or type(nonce) is not bytes:
            raise MalformedEncoding("not a chip hello", offset=0)
        return cls(chip_public_key=key, nonce=nonce)


class ReaderResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    reader_ephemeral_public: bytes

    def to_bytes(self) -> bytes:
        return canonical_dumps(["response", self.reader_ephemeral_public])


class SessionContext(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_bytes="base64")

    role: SessionRole
    mode: Mode = Mode.CURRENT
    state: SessionState = SessionState.INIT
    transcript: List[bytes] = []
    nonce: Optional[bytes] = None
    peer_public: Optional[bytes] = None
    shared_secret: Optional[bytes] = None
    enc_key: Optional[bytes] = None
    mac_key: Optional[bytes] = None
    failure_reason: Optional[str] = None

    def transcript_bytes(self) -> bytes:
        """Messages in send order, each prefixed with its 4-byte big-endian length"""
        return b"".join(len(m).to_bytes(4, "big") + m for m in self.transcript)

    def advance(self, state: SessionState, **changes) -> "SessionContext":
        logger.debug(f"[CHIPAUTH] {self.role.value}: {self.state.value} -> {state.value}")
        return self.model_copy(update={"state": state, **changes})

    def fail(self, reason: str) -> "SessionContext":
        logger.warning(f"[CHIPAUTH] {self.role.value} session failed: {reason}")
        return self.model_copy(update={"state": SessionState.FAILED, "failure_reason": reason})


def new_session(role: SessionRole, mode: Mode = Mode.CURRENT) -> SessionContext:
    return SessionContext(role=SessionRole(role), mode=Mode(mode))


def _require(session: SessionContext, role: SessionRole, state: SessionState, operation: str):
    if session.role is not role or session.state is not state:
        raise StateError(f"{operation} needs a {role.value} session in {state.value}, "
                         f"got {session.role.value} in {session.state.value}")


def _agreement_spec(mode: Mode):
    # Future mode would encapsulate to the chip's ML-KEM key instead
    if Mode(mode) is Mode.FUTURE:
        return require_available(REGISTRY.preferred(mode, Role.KEY_ENCAPSULATION))
    return REGISTRY.preferred(mode, Role.KEY_AGREEMENT)


# ---------- chip side ----------

class ChipProfile:
    """Chip static agreement key (inside a SecureElement) plus its signed data groups"""

    def __init__(self, element: SecureElement, handle: str, bundle: SignedDataBundle, mode: Mode = Mode.CURRENT):
        self.element = element
        self.handle = handle
        self.bundle = bundle
        self.mode = Mode(mode)
        carriers = [i for i, dg in bundle.data_groups.items() if dg == self.public_key]
        if len(carriers) != 1:
            raise ConfigError("chip public key must appear in exactly one data group")

    @property
    def public_key(self) -> bytes:
        return self.element.public_key(self.handle)


class DocumentSigner:
    def __init__(self, key: SigningKey, certificate: CertificateRecord):
        self.key = key
        self.certificate = certificate


def issue_document_signer(csca: CertificateAuthority, source: RandomSource, now: int,
                          name: str = "document-signer") -> DocumentSigner:
    return DocumentSigner(*issue_signing_identity(csca, source, now, name))


def personalize_chip(ds: DocumentSigner, csca_certificate: CertificateRecord, source: RandomSource,
                     mode: Mode = Mode.CURRENT, holder: str = "SPECIMEN",
                     element: Optional[SecureElement] = None) -> ChipProfile:
    """Generate the chip key in its element and sign the data groups carrying it"""
    spec = _agreement_spec(mode)
    element = element or SecureElement.create(source)
    handle = element.generate_key(spec.name, source)
    groups = {CHIP_NAME_GROUP: holder.encode("utf-8"), CHIP_KEY_GROUP: element.public_key(handle)}
    bundle = build_signed_bundle(groups, ds.key, ds.certificate, csca_certificate, mode)
    return ChipProfile(element, handle, bundle, mode)


def chip_hello(chip: ChipProfile, source: RandomSource,
               session: Optional[SessionContext] = None) -> Tuple[ChipHello, SessionContext]:
    session = session or new_session(SessionRole.CHIP, chip.mode)
    _require(session, SessionRole.CHIP, SessionState.INIT, "chip_hello")
    nonce = checked_random_bytes(source, NONCE_BYTES)
    hello = ChipHello(chip_public_key=chip.public_key, nonce=nonce)
    return hello, session.advance(SessionState.HELLO_SENT, nonce=nonce,
                                  transcript=session.transcript + [hello.to_bytes()])


def chip_complete(chip_session: SessionContext, reader_msg: ReaderResponse, chip: ChipProfile) -> SessionContext:
    """Chip-side agreement, computed inside the element boundary"""
    _require(chip_session, SessionRole.CHIP, SessionState.HELLO_SENT, "chip_complete")
    try:
        shared = chip.element.agree(chip.handle, reader_msg.reader_ephemeral_public)
    except InvalidPublicKey as e:
        raise InvalidPublicKey(str(e), session=chip_session.fail("invalid-public-key"))

    transcript = chip_session.transcript + [reader_msg.to_bytes()]
    draft = chip_session.model_copy(update={"transcript": transcript})
    enc_key, mac_key = derive_session_keys(shared, draft.transcript_bytes(), chip_session.mode)
    return draft.advance(SessionState.SECRET_DERIVED, peer_public=reader_msg.reader_ephemeral_public,
                         shared_secret=shared, enc_key=enc_key, mac_key=mac_key)


def _confirmation_alg(mode: Mode) -> MacAlgorithm:
    hash_name = mode_hash(mode)
    return MacAlgorithm(kind=MacKind.HMAC, cipher_or_hash=hash_name,
                        tag_len=REGISTRY.lookup(hash_name).output_len)


def chip_confirmation_tag(chip_session: SessionContext) -> bytes:
    """MAC over the transcript under mac_key; proves the chip derived the same secret"""
    _require(chip_session, SessionRole.CHIP, SessionState.SECRET_DERIVED, "chip_confirmation_tag")
    return mac_tag(_confirmation_alg(chip_session.mode), chip_session.mac_key,
                   CONFIRM_LABEL + chip_session.transcript_bytes())


# ---------- reader side ----------

def reader_respond(hello: ChipHello, source: RandomSource, mode: Mode = Mode.CURRENT,
                   session: Optional[SessionContext] = None) -> Tuple[ReaderResponse, SessionContext]:
    """
    Fresh ephemeral key, agreement against the chip's static key, session
    keys over the transcript. The ephemeral private key does not outlive
    this call.
    """
    session = session or new_session(SessionRole.READER, mode)
    _require(session, SessionRole.READER, SessionState.INIT, "reader_respond")
    spec = _agreement_spec(session.mode)

    if len(hello.nonce) != NONCE_BYTES:
        failed = session.fail("malformed-hello")
        raise InvalidPublicKey(f"hello nonce must be {NONCE_BYTES} bytes", session=failed)
    session = session.advance(SessionState.HELLO_SENT, nonce=hello.nonce,
                              transcript=session.transcript + [hello.to_bytes()])
    if len(hello.chip_public_key) != spec.key_len:
        failed = session.fail("invalid-public-key")
        raise InvalidPublicKey(f"chip public key must be {spec.key_len} bytes, got "
                               f"{len(hello.chip_public_key)}", session=failed)

    ephemeral = generate_agreement_key(spec.name, source)
    try:
        shared = agree(spec.name, ephemeral, hello.chip_public_key)
    except InvalidPublicKey as e:
        raise InvalidPublicKey(str(e), session=session.fail("invalid-public-key"))
    response = ReaderResponse(reader_ephemeral_public=agreement_public_bytes(ephemeral))
    del ephemeral

    draft = session.model_copy(update={"transcript": session.transcript + [response.to_bytes()]})
    enc_key, mac_key = derive_session_keys(shared, draft.transcript_bytes(), session.mode)
    return response, draft.advance(SessionState.SECRET_DERIVED, peer_public=hello.chip_public_key,
                                   shared_secret=shared, enc_key=enc_key, mac_key=mac_key)


def derive_session_keys(shared_secret: bytes, context: bytes, mode: Mode = Mode.CURRENT) -> Tuple[bytes, bytes]:
    """(enc_key, mac_key): one-step KDF under distinct labels, mode's hash and key length"""
    hash_name = REGISTRY.preferred(mode, Role.KDF).primitive
    length = mode_aead(mode).key_len
    enc_key = one_step_kdf(shared_secret, ENC_LABEL, context, length, hash_name)
    mac_key = one_step_kdf(shared_secret, MAC_LABEL, context, length, hash_name)
    return enc_key, mac_key


def authenticate_chip(reader_session: SessionContext, chip_bundle: SignedDataBundle,
                      trusted_csca: CertificateRecord, confirmation_tag: bytes, now: int) -> SessionContext:
    """Passive Authentication, then handshake key == bundle key, then key confirmation"""
    _require(reader_session, SessionRole.READER, SessionState.SECRET_DERIVED, "authenticate_chip")

    verdict = passive_authenticate(chip_bundle, trusted_csca, now)
    if not verdict.accepted:
        return reader_session.fail(verdict.reason)

    if chip_bundle.data_groups.get(CHIP_KEY_GROUP) != reader_session.peer_public:
        return reader_session.fail("key-mismatch")

    expected_input = CONFIRM_LABEL + reader_session.transcript_bytes()
    if not mac_verify(_confirmation_alg(reader_session.mode), reader_session.mac_key,
                      expected_input, confirmation_tag):
        return reader_session.fail("key-confirmation")

    logger.info("[CHIPAUTH] Chip authenticated")
    return reader_session.advance(SessionState.AUTHENTICATED)


def session_json(session: SessionContext) -> str:
    return session.model_dump_json(indent=2)


# ---------- demo ----------

class DemoResult(BaseModel):
    mode: Mode
    adversary: Optional[str] = None
    transcript: List[str]
    state: SessionState
    failure_reason: Optional[str] = None

    @property
    def authenticated(self) -> bool:
        return self.state is SessionState.AUTHENTICATED


class _ReplayingChip(ChipProfile):
    """Adversary chip: replays a genuine public key and bundle but holds a different private key"""

    def __init__(self, element: SecureElement, handle: str, replayed: ChipProfile):
        self._replayed_key = replayed.public_key
        super().__init__(element, handle, replayed.bundle, replayed.mode)

    @property
    def public_key(self) -> bytes:
        return self._replayed_key


def run_demo(mode: Mode, source: RandomSource, now: int, adversary: Optional[str] = None) -> DemoResult:
    """
    Full in-process exchange against a freshly built CSCA. adversary:
    None (honest chip), "clone" (own key, bundle signed by a self-made
    Document Signer) or "replay" (genuine key and bundle, no private key).
    """
    mode = Mode(mode)
    csca = CertificateAuthority.create_root("csca", mode, source, now)
    ds = issue_document_signer(csca, source, now)
    genuine = personalize_chip(ds, csca.trust_root, source, mode)

    if adversary is None:
        chip = genuine
    elif adversary == "clone":
        impostor_ca = CertificateAuthority.create_root(ds.certificate.subject_id, mode, source, now)
        impostor_ds = DocumentSigner(impostor_ca.key, impostor_ca.certificate)
        chip = personalize_chip(impostor_ds, csca.trust_root, source, mode)
    elif adversary == "replay":
        element = SecureElement.create(source)
        handle = element.generate_key(_agreement_spec(mode).name, source)
        chip = _ReplayingChip(element, handle, genuine)
    else:
        raise ConfigError(f"unknown adversary {adversary!r} (expected clone or replay)")

    hello, chip_session = chip_hello(chip, source)
    response, reader_session = reader_respond(hello, source, mode)
    chip_session = chip_complete(chip_session, response, chip)
    tag = chip_confirmation_tag(chip_session)
    reader_session = authenticate_chip(reader_session, chip.bundle, csca.trust_root, tag, now)

    return DemoResult(mode=mode, adversary=adversary,
                      transcript=[m.hex() for m in reader_session.transcript],
                      state=reader_session.state, failure_reason=reader_session.failure_reason)
