# -*- coding: utf-8 -*-
"""
PKI - CSR -> RA review -> CA issuance -> chain verification, revocation lists,
and Passive Authentication over signed data groups.

Every operation takes the clock as an explicit `now` (epoch seconds).
"""

import json
import logging
import re
import threading
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from compact_cert import (
    CertificateRecord,
    algorithm_id,
    algorithm_name,
    armor,
    canonical_dumps,
    canonical_loads,
    dearmor,
    dearmor_all,
    decode_compact,
    encode_compact,
    expect_list,
    expect_text_map,
    tbs_bytes,
)
from config import (
    APPROVAL_TTL_SECONDS,
    CA_CERT_DAYS,
    MAX_CHAIN_DEPTH,
    MAX_END_ENTITY_DAYS,
    SECONDS_PER_DAY,
    SERIAL_BYTES,
)
from entropy import RandomSource, checked_random_bytes
from errors import (
    AlgorithmNotAvailable,
    CaRefusal,
    ConfigError,
    IssuerMismatch,
    MalformedEncoding,
    NonCanonicalEncoding,
    StoreError,
)
from suite_registry import (
    Mode,
    Role,
    SigningKey,
    digest,
    generate_signing_key,
    hash_algorithm,
    lookup,
    mode_hash,
    require_available,
    resolve,
    signing_key_from_pem,
    verify_signature,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CertificateRecord", "Csr", "Verdict", "IssuancePolicy", "RegistrationAuthority",
    "ApprovalToken", "Rejection", "CertificateAuthority", "RevocationList",
    "SignedDataBundle", "generate_csr", "ra_review", "ca_issue", "verify_chain",
    "new_crl", "revoke", "build_signed_bundle", "passive_authenticate",
]

CA_EXTENSION = "ca"


class Signer(Protocol):
    algorithm: str

    @property
    def public_key(self) -> bytes: ...

    def sign(self, message: bytes) -> bytes: ...


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    accepted: bool
    reason: Optional[str] = None
    group: Optional[int] = None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(accepted=True)

    @classmethod
    def reject(cls, reason: str, group: Optional[int] = None) -> "Verdict":
        return cls(accepted=False, reason=reason, group=group)

    def describe(self) -> str:
        if self.accepted:
            return "accept"
        if self.group is not None:
            return f"reject {self.reason} group={self.group}"
        return f"reject {self.reason}"


def first_available(mode: Mode, role: Role) -> str:
    specs = resolve(mode, role)
    for spec in specs:
        if spec.available:
            return spec.name
    return require_available(specs[0]).name


# ---------- CSR ----------

class Csr(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject_id: str
    public_key_alg: str
    public_key: bytes
    requested_extensions: Dict[str, bytes] = {}
    proof_of_possession: bytes = b""

    def body_bytes(self) -> bytes:
        return canonical_dumps([self.subject_id, algorithm_id(self.public_key_alg),
                                self.public_key, dict(self.requested_extensions)])

    def to_bytes(self) -> bytes:
        return canonical_dumps([self.subject_id, algorithm_id(self.public_key_alg), self.public_key,
                                dict(self.requested_extensions), self.proof_of_possession])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Csr":
        subject_id, alg, public_key, extensions, pop = expect_list(canonical_loads(data), 5, "csr")
        if type(subject_id) is not str or type(public_key) is not bytes or type(pop) is not bytes:
            raise MalformedEncoding("csr fields have wrong types", offset=0)
        return cls(subject_id=subject_id, public_key_alg=algorithm_name(alg), public_key=public_key,
                   requested_extensions=expect_text_map(extensions, "requested_extensions"),
                   proof_of_possession=pop)

    def to_pem(self) -> str:
        return armor("CSR", self.to_bytes())

    @classmethod
    def from_pem(cls, text: str) -> "Csr":
        return cls.from_bytes(dearmor("CSR", text))


def generate_csr(subject_id: str, key: Signer, extensions: Optional[Dict[str, bytes]] = None) -> Csr:
    """CSR carrying the subject's public key, self-signed as proof of possession"""
    spec = lookup(key.algorithm)
    if spec.role is not Role.SIGNATURE:
        raise AlgorithmNotAvailable(f"{key.algorithm} is not a signature algorithm")
    require_available(spec)
    draft = Csr(subject_id=subject_id, public_key_alg=key.algorithm, public_key=key.public_key,
                requested_extensions=dict(extensions or {}))
    return draft.model_copy(update={"proof_of_possession": key.sign(draft.body_bytes())})


def csr_pop_valid(csr: Csr) -> bool:
    spec = lookup(csr.public_key_alg)
    if spec.role is not Role.SIGNATURE or not spec.available:
        return False
    return verify_signature(csr.public_key_alg, csr.public_key, csr.proof_of_possession, csr.body_bytes())


# ---------- Registration Authority ----------

class IssuancePolicy(BaseModel):
    name_pattern: str = ".*"
    mode: Mode = Mode.CURRENT
    max_validity_days: int = Field(default=MAX_END_ENTITY_DAYS, ge=1, le=MAX_END_ENTITY_DAYS)

    def permits_name(self, subject_id: str) -> bool:
        return re.fullmatch(self.name_pattern, subject_id) is not None

    def permits_algorithm(self, name: str) -> bool:
        return any(spec.name == name for spec in resolve(self.mode, Role.SIGNATURE))


class RegistrationAuthority:
    def __init__(self, name: str, key: SigningKey, policy: Optional[IssuancePolicy] = None):
        self.name = name
        self.key = key
        self.policy = policy or IssuancePolicy()


class ApprovalToken(BaseModel):
    """RA statement that a CSR passed review; valid until expires_at"""

    model_config = ConfigDict(frozen=True)

    csr: Csr
    ra_id: str
    issued_at: int
    expires_at: int
    signature_alg: str
    signature: bytes = b""

    def body_bytes(self) -> bytes:
        return canonical_dumps([self.csr.to_bytes(), self.ra_id, self.issued_at, self.expires_at,
                                algorithm_id(self.signature_alg)])


class Rejection(BaseModel):
    model_config = ConfigDict(frozen=True)

    reason: str
    detail: str = ""


def ra_review(csr: Csr, policy: IssuancePolicy, ra: RegistrationAuthority,
              now: int) -> Union[ApprovalToken, Rejection]:
    """Approve iff algorithm, proof of possession and subject name all pass policy"""
    if not policy.permits_algorithm(csr.public_key_alg):
        logger.warning(f"[RA] Rejected {csr.subject_id}: {csr.public_key_alg} not in {policy.mode.value} mode")
        return Rejection(reason="alg-not-permitted", detail=csr.public_key_alg)
    if not csr_pop_valid(csr):
        logger.warning(f"[RA] Rejected {csr.subject_id}: proof of possession does not verify")
        return Rejection(reason="pop-invalid")
    if not policy.permits_name(csr.subject_id):
        logger.warning(f"[RA] Rejected {csr.subject_id}: name outside {policy.name_pattern!r}")
        return Rejection(reason="name-not-permitted", detail=csr.subject_id)

    draft = ApprovalToken(csr=csr, ra_id=ra.name, issued_at=now, expires_at=now + APPROVAL_TTL_SECONDS,
                          signature_alg=ra.key.algorithm)
    logger.info(f"[RA] Approved {csr.subject_id}")
    return draft.model_copy(update={"signature": ra.key.sign(draft.body_bytes())})


# ---------- Certificate Authority ----------

def sign_certificate(issuer_key: SigningKey, issuer_id: str, subject_id: str, public_key_alg: str,
                     public_key: bytes, not_before: int, not_after: int, serial: bytes,
                     extensions: Optional[Dict[str, bytes]] = None) -> CertificateRecord:
    draft = CertificateRecord(serial=serial, issuer_id=issuer_id, subject_id=subject_id,
                              public_key_alg=public_key_alg, public_key=public_key,
                              not_before=not_before, not_after=not_after,
                              extensions=dict(extensions or {}), signature_alg=issuer_key.algorithm)
    return draft.model_copy(update={"signature": issuer_key.sign(tbs_bytes(draft))})


class CertificateAuthority:
    """
    CA context: signing key, own certificate, the issuer chain above it and
    the RA whose approvals it honours. Issuance is serialized per CA so
    serials stay unique.

    issuer_chain runs from this CA's certificate up to and including the root.
    """

    def __init__(self, name: str, key: SigningKey, issuer_chain: List[CertificateRecord],
                 ra: RegistrationAuthority, source: RandomSource, mode: Mode = Mode.CURRENT,
                 issued_serials: Optional[Set[bytes]] = None):
        if not issuer_chain or issuer_chain[0].public_key != key.public_key:
            raise ConfigError("CA certificate does not match the CA key")
        self.name = name
        self.key = key
        self.issuer_chain = list(issuer_chain)
        self.ra = ra
        self.source = source
        self.mode = Mode(mode)
        self.issued_serials: Set[bytes] = set(issued_serials or ())
        self.crl: Optional["RevocationList"] = None
        self._lock = threading.Lock()

    @property
    def certificate(self) -> CertificateRecord:
        return self.issuer_chain[0]

    @property
    def trust_root(self) -> CertificateRecord:
        return self.issuer_chain[-1]

    @property
    def leaf_chain(self) -> List[CertificateRecord]:
        """Chain handed out with leaves: issuing CA up to, not including, the root"""
        return self.issuer_chain[:-1]

    @property
    def depth(self) -> int:
        return len(self.issuer_chain)

    def next_serial(self) -> bytes:
        while True:
            serial = checked_random_bytes(self.source, SERIAL_BYTES)
            if serial not in self.issued_serials:
                self.issued_serials.add(serial)
                return serial

    @classmethod
    def create_root(cls, name: str, mode: Mode, source: RandomSource, now: int,
                    algorithm: Optional[str] = None, days: int = CA_CERT_DAYS,
                    policy: Optional[IssuancePolicy] = None) -> "CertificateAuthority":
        algorithm = algorithm or first_available(mode, Role.SIGNATURE)
        key = generate_signing_key(algorithm, source)
        serial = checked_random_bytes(source, SERIAL_BYTES)
        cert = sign_certificate(key, name, name, algorithm, key.public_key, now,
                                now + days * SECONDS_PER_DAY, serial, {CA_EXTENSION: b"\x01"})
        ra = RegistrationAuthority(f"{name}-ra", generate_signing_key(algorithm, source),
                                   policy or IssuancePolicy(mode=mode))
        logger.info(f"[PKI] Created root CA {name} ({algorithm})")
        return cls(name, key, [cert], ra, source, mode, {serial})

    def create_subordinate(self, name: str, now: int, algorithm: Optional[str] = None,
                           days: int = CA_CERT_DAYS,
                           policy: Optional[IssuancePolicy] = None) -> "CertificateAuthority":
        if self.depth + 1 > MAX_CHAIN_DEPTH:
            raise CaRefusal(f"CA hierarchy limited to {MAX_CHAIN_DEPTH} levels", code="depth-exceeded")
        algorithm = algorithm or self.key.algorithm
        key = generate_signing_key(algorithm, self.source)
        with self._lock:
            serial = self.next_serial()
            not_after = min(now + days * SECONDS_PER_DAY, self.certificate.not_after)
            cert = sign_certificate(self.key, self.name, name, algorithm, key.public_key, now,
                                    not_after, serial, {CA_EXTENSION: b"\x01"})
        ra = RegistrationAuthority(f"{name}-ra", generate_signing_key(algorithm, self.source),
                                   policy or IssuancePolicy(mode=self.mode))
        logger.info(f"[PKI] Created subordinate CA {name} under {self.name}")
        return CertificateAuthority(name, key, [cert] + self.issuer_chain, ra, self.source, self.mode)


def ca_issue(approval: ApprovalToken, ca: CertificateAuthority, validity_days: int,
             now: int) -> CertificateRecord:
    """End-entity certificate for an approved CSR, signed with the CA key"""
    if validity_days > MAX_END_ENTITY_DAYS:
        raise CaRefusal(f"validity {validity_days} days exceeds {MAX_END_ENTITY_DAYS}",
                        code="validity-exceeds-max")
    if validity_days < 1:
        raise CaRefusal("validity must be at least one day", code="invalid-validity")
    if not isinstance(approval, ApprovalToken):
        raise CaRefusal("no approval token", code="invalid-token")
    if (approval.ra_id != ca.ra.name or approval.signature_alg != ca.ra.key.algorithm
            or not verify_signature(approval.signature_alg, ca.ra.key.public_key,
                                    approval.signature, approval.body_bytes())):
        raise CaRefusal("approval token does not verify under this CA's RA", code="invalid-token")
    if now > approval.expires_at or now < approval.issued_at:
        raise CaRefusal("approval token expired", code="token-expired")

    csr = approval.csr
    extensions = {k: v for k, v in csr.requested_extensions.items() if k != CA_EXTENSION}
    with ca._lock:
        serial = ca.next_serial()
        not_after = min(now + validity_days * SECONDS_PER_DAY, ca.certificate.not_after)
        cert = sign_certificate(ca.key, ca.name, csr.subject_id, csr.public_key_alg, csr.public_key,
                                now, not_after, serial, extensions)
    logger.info(f"[PKI] {ca.name} issued {csr.subject_id} serial={serial.hex()}")
    return cert


def issue_signing_identity(ca: CertificateAuthority, source: RandomSource, now: int, name: str,
                           validity_days: int = MAX_END_ENTITY_DAYS) -> Tuple[SigningKey, CertificateRecord]:
    """Fresh signing key certified by ca through the full CSR -> RA -> CA path"""
    key = generate_signing_key(first_available(ca.mode, Role.SIGNATURE), source)
    approval = ra_review(generate_csr(name, key), ca.ra.policy, ca.ra, now)
    if isinstance(approval, Rejection):
        raise CaRefusal(f"registration rejected: {approval.reason}", code=approval.reason)
    return key, ca_issue(approval, ca, validity_days, now)


# ---------- revocation ----------

class RevocationList(BaseModel):
    model_config = ConfigDict(frozen=True)

    issuer_id: str
    issued_at: int
    revoked_serials: Tuple[bytes, ...] = ()
    signature_alg: str
    signature: bytes = b""

    def body_bytes(self) -> bytes:
        return canonical_dumps([self.issuer_id, self.issued_at, list(self.revoked_serials),
                                algorithm_id(self.signature_alg)])

    def to_bytes(self) -> bytes:
        return canonical_dumps([self.issuer_id, self.issued_at, list(self.revoked_serials),
                                algorithm_id(self.signature_alg), self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "RevocationList":
        issuer_id, issued_at, serials, alg, signature = expect_list(canonical_loads(data), 5, "crl")
        if (type(issuer_id) is not str or type(issued_at) is not int or type(serials) is not list
                or type(signature) is not bytes or any(type(s) is not bytes for s in serials)):
            raise MalformedEncoding("crl fields have wrong types", offset=0)
        return cls(issuer_id=issuer_id, issued_at=issued_at, revoked_serials=tuple(serials),
                   signature_alg=algorithm_name(alg), signature=signature)

    def to_pem(self) -> str:
        return armor("CRL", self.to_bytes())

    @classmethod
    def from_pem(cls, text: str) -> "RevocationList":
        return cls.from_bytes(dearmor("CRL", text))

    def verify(self, issuer_certificate: CertificateRecord) -> bool:
        return (issuer_certificate.subject_id == self.issuer_id
                and issuer_certificate.public_key_alg == self.signature_alg
                and verify_signature(self.signature_alg, issuer_certificate.public_key,
                                     self.signature, self.body_bytes()))


def _signed_crl(issuer: CertificateAuthority, issued_at: int, serials) -> RevocationList:
    draft = RevocationList(issuer_id=issuer.name, issued_at=issued_at,
                           revoked_serials=tuple(sorted(set(serials))), signature_alg=issuer.key.algorithm)
    return draft.model_copy(update={"signature": issuer.key.sign(draft.body_bytes())})


def new_crl(issuer: CertificateAuthority, now: int) -> RevocationList:
    return _signed_crl(issuer, now, ())


def revoke(serial: bytes, crl: RevocationList, issuer: CertificateAuthority, now: int) -> RevocationList:
    """Fresh list with serial added and issued_at strictly later than crl's"""
    if crl.issuer_id != issuer.name:
        raise IssuerMismatch(f"list belongs to {crl.issuer_id}, not {issuer.name}")
    updated = _signed_crl(issuer, max(now, crl.issued_at + 1), set(crl.revoked_serials) | {bytes(serial)})
    logger.info(f"[PKI] {issuer.name} revoked serial={bytes(serial).hex()} "
                f"({len(updated.revoked_serials)} total)")
    return updated


# ---------- chain verification ----------

def verify_chain(leaf: CertificateRecord, chain: Sequence[CertificateRecord], trust_root: CertificateRecord,
                 now: int, crl: Optional[RevocationList] = None) -> Verdict:
    """
    Accept iff every signature verifies from leaf up to trust_root, all
    certificates share one signature algorithm, each is valid at now
    (bounds inclusive), and no serial is on the CRL.

    chain is ordered leaf-adjacent first; a trailing copy of trust_root is
    tolerated.
    """
    chain = list(chain)
    if chain and chain[-1] == trust_root:
        chain.pop()
    if len(chain) + 1 > MAX_CHAIN_DEPTH:
        return Verdict.reject("chain-too-long")

    path = [leaf] + chain
    issuers = chain + [trust_root]
    everything = path + [trust_root]

    if len({cert.signature_alg for cert in everything}) != 1:
        return Verdict.reject("alg-mismatch")

    for cert, issuer in zip(path, issuers):
        if (cert.issuer_id != issuer.subject_id or issuer.public_key_alg != cert.signature_alg
                or not verify_signature(cert.signature_alg, issuer.public_key, cert.signature,
                                        tbs_bytes(cert))):
            return Verdict.reject("untrusted-chain")
        if not issuer.is_ca:
            return Verdict.reject("not-a-ca")

    for cert in everything:
        if now < cert.not_before:
            return Verdict.reject("not-yet-valid")
        if now > cert.not_after:
            return Verdict.reject("expired")

    if crl is not None:
        crl_issuer = next((c for c in issuers if c.subject_id == crl.issuer_id), None)
        if crl_issuer is None or not crl.verify(crl_issuer):
            return Verdict.reject("crl-invalid")
        revoked = set(crl.revoked_serials)
        for cert in path:
            if cert.issuer_id == crl.issuer_id and cert.serial in revoked:
                return Verdict.reject("revoked")

    return Verdict.accept()


def certificate_pem(certs: Sequence[CertificateRecord]) -> str:
    return "".join(armor("CERTIFICATE", encode_compact(c)) for c in certs)


def load_certificates(text: str) -> List[CertificateRecord]:
    return [decode_compact(block) for block in dearmor_all("CERTIFICATE", text)]


# ---------- Passive Authentication ----------

class SignedDataBundle(BaseModel):
    """Data groups plus a Document Signer signature over their digest table"""

    model_config = ConfigDict(frozen=True)

    data_groups: Dict[int, bytes]
    digest_alg: str
    digests: Dict[int, bytes]
    signature: bytes = b""
    ds_certificate: CertificateRecord
    csca_certificate: CertificateRecord

    def signed_bytes(self) -> bytes:
        return canonical_dumps([algorithm_id(self.digest_alg), dict(self.digests)])

    def to_bytes(self) -> bytes:
        return canonical_dumps([dict(self.data_groups), algorithm_id(self.digest_alg), dict(self.digests),
                                self.signature, encode_compact(self.ds_certificate),
                                encode_compact(self.csca_certificate)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedDataBundle":
        groups, alg, digests, signature, ds, csca = expect_list(canonical_loads(data), 6, "bundle")
        for table in (groups, digests):
            if type(table) is not dict or any(type(k) is not int or type(v) is not bytes
                                              for k, v in table.items()):
                raise MalformedEncoding("bundle tables must map integers to bytes", offset=0)
        if type(signature) is not bytes or type(ds) is not bytes or type(csca) is not bytes:
            raise MalformedEncoding("bundle fields have wrong types", offset=0)
        return cls(data_groups=groups, digest_alg=algorithm_name(alg), digests=digests, signature=signature,
                   ds_certificate=decode_compact(ds), csca_certificate=decode_compact(csca))

    def to_pem(self) -> str:
        return armor("BUNDLE", self.to_bytes())

    @classmethod
    def from_pem(cls, text: str) -> "SignedDataBundle":
        return cls.from_bytes(dearmor("BUNDLE", text))


def build_signed_bundle(data_groups: Dict[int, bytes], ds_key: Signer, ds_certificate: CertificateRecord,
                        csca_certificate: CertificateRecord, mode: Mode) -> SignedDataBundle:
    digest_alg = mode_hash(mode)
    draft = SignedDataBundle(
        data_groups=dict(data_groups),
        digest_alg=digest_alg,
        digests={i: digest(digest_alg, dg) for i, dg in data_groups.items()},
        ds_certificate=ds_certificate,
        csca_certificate=csca_certificate,
    )
    return draft.model_copy(update={"signature": ds_key.sign(draft.signed_bytes())})


def passive_authenticate(bundle: SignedDataBundle, trusted_csca: CertificateRecord, now: int) -> Verdict:
    """DS certificate chains to the CSCA, DS signature holds, every digest matches"""
    hash_algorithm(bundle.digest_alg)

    verdict = verify_chain(bundle.ds_certificate, [], trusted_csca, now)
    if not verdict.accepted:
        logger.warning(f"[PA] Document Signer rejected: {verdict.reason}")
        return verdict

    ds = bundle.ds_certificate
    if not verify_signature(ds.public_key_alg, ds.public_key, bundle.signature, bundle.signed_bytes()):
        logger.warning("[PA] Digest table signature does not verify")
        return Verdict.reject("bad-signature")

    for index in sorted(bundle.data_groups):
        expected = bundle.digests.get(index)
        if expected is None or digest(bundle.digest_alg, bundle.data_groups[index]) != expected:
            logger.warning(f"[PA] Data group {index} digest mismatch")
            return Verdict.reject("digest-mismatch", group=index)
    return Verdict.accept()


# ---------- CA directory ----------

_CA_KEY = "ca.key"
_CA_CERT = "ca.cert"
_RA_KEY = "ra.key"
_CA_CRL = "ca.crl"
_CA_STATE = "ca.json"


def save_ca(ca: CertificateAuthority, directory: Union[str, Path]):
    """Write key, chain, RA key, CRL and issuance state into directory"""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / _CA_KEY).write_bytes(ca.key.to_pem())
    (path / _RA_KEY).write_bytes(ca.ra.key.to_pem())
    (path / _CA_CERT).write_text(certificate_pem(ca.issuer_chain))
    if ca.crl is not None:
        (path / _CA_CRL).write_text(ca.crl.to_pem())
    state = {
        "name": ca.name,
        "mode": ca.mode.value,
        "ra_name": ca.ra.name,
        "policy": ca.ra.policy.model_dump(mode="json"),
        "issued_serials": sorted(s.hex() for s in ca.issued_serials),
    }
    (path / _CA_STATE).write_text(json.dumps(state, indent=2))
    logger.debug(f"[PKI] Saved CA {ca.name} to {path}")


def load_ca(directory: Union[str, Path], source: RandomSource) -> CertificateAuthority:
    path = Path(directory)
    try:
        state = json.loads((path / _CA_STATE).read_text())
        key = signing_key_from_pem((path / _CA_KEY).read_bytes())
        ra_key = signing_key_from_pem((path / _RA_KEY).read_bytes())
        chain = load_certificates((path / _CA_CERT).read_text())
        crl_file = path / _CA_CRL
        crl = RevocationList.from_pem(crl_file.read_text()) if crl_file.exists() else None
    except (OSError, ValueError, KeyError, MalformedEncoding, NonCanonicalEncoding) as e:
        raise StoreError(f"cannot load CA from {path}: {e}")

    ra = RegistrationAuthority(state["ra_name"], ra_key, IssuancePolicy(**state["policy"]))
    ca = CertificateAuthority(state["name"], key, chain, ra, source, Mode(state["mode"]),
                              {bytes.fromhex(s) for s in state.get("issued_serials", [])})
    ca.crl = crl
    return ca


def open_or_create(directory: Union[str, Path], source: RandomSource, now: int,
                   mode: Mode = Mode.CURRENT, name: str = "chip2app-root") -> CertificateAuthority:
    """Load the CA in directory, or create a root CA there"""
    path = Path(directory)
    if (path / _CA_STATE).exists():
        return load_ca(path, source)
    ca = CertificateAuthority.create_root(name, mode, source, now)
    ca.crl = new_crl(ca, now)
    save_ca(ca, path)
    return ca
