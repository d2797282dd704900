# -*- coding: utf-8 -*-
"""
TLS Policy - device-class cipher-suite profiles, server-preference
negotiation, and a static compliance audit of server configurations.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Callable, FrozenSet, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict

from compact_cert import CertificateRecord
from config import MAX_END_ENTITY_DAYS, SECONDS_PER_DAY
from errors import ConfigError, MalformedEncoding, NonCanonicalEncoding
from pki import RevocationList, load_certificates
from suite_registry import Mode, Role, resolve

logger = logging.getLogger(__name__)


class SuiteId(str, Enum):
    TLS_AES_128_GCM_SHA256 = "TLS_AES_128_GCM_SHA256"
    TLS_AES_256_GCM_SHA384 = "TLS_AES_256_GCM_SHA384"
    TLS_CHACHA20_POLY1305_SHA256 = "TLS_CHACHA20_POLY1305_SHA256"


# The only approvable TLS 1.3 suites; anything else in an offer is a legacy identifier
APPROVED_SUITES: FrozenSet[str] = frozenset(s.value for s in SuiteId)

STANDARD_PREFERENCE: Tuple[str, ...] = (
    SuiteId.TLS_AES_256_GCM_SHA384.value,
    SuiteId.TLS_CHACHA20_POLY1305_SHA256.value,
    SuiteId.TLS_AES_128_GCM_SHA256.value,
)
CONSTRAINED_PREFERENCE: Tuple[str, ...] = (SuiteId.TLS_AES_128_GCM_SHA256.value,)


class DeviceClass(str, Enum):
    STANDARD = "standard"
    CONSTRAINED = "constrained"


class KeyExchange(str, Enum):
    EPHEMERAL = "ephemeral"
    STATIC = "static"


class Severity(str, Enum):
    FAIL = "fail"
    WARN = "warn"
    PASS = "pass"


class CipherSuitePolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    device_class: DeviceClass
    mode: Mode = Mode.CURRENT
    preference: Tuple[str, ...]
    min_version: str = "1.3"
    allow_tls12_fallback: bool = False
    require_ephemeral: bool = True
    forbid_zero_rtt: bool = True
    require_client_cert_revocation_check: bool = True

    @property
    def future(self) -> bool:
        return self.mode is Mode.FUTURE


def build_profile(device_class: DeviceClass, mode: Mode = Mode.CURRENT) -> CipherSuitePolicy:
    """Suite lists are the same in both modes; future mode only tightens certificate checks"""
    device_class = DeviceClass(device_class)
    if device_class is DeviceClass.STANDARD:
        return CipherSuitePolicy(device_class=device_class, mode=Mode(mode), preference=STANDARD_PREFERENCE)
    return CipherSuitePolicy(device_class=device_class, mode=Mode(mode), preference=CONSTRAINED_PREFERENCE,
                             allow_tls12_fallback=True)


class Negotiation(BaseModel):
    model_config = ConfigDict(frozen=True)

    selected: Optional[str] = None

    @property
    def terminated(self) -> bool:
        return self.selected is None

    def describe(self) -> str:
        return self.selected or "TERMINATE"


def negotiate(client_offer: Sequence[str], policy: CipherSuitePolicy) -> Negotiation:
    """First suite of the server's preference present anywhere in the offer"""
    offered = set(client_offer)
    for suite in policy.preference:
        if suite in offered:
            return Negotiation(selected=suite)
    return Negotiation()


# ---------- server configuration ----------

class ServerConfigInput(BaseModel):
    tls_versions: FrozenSet[str]
    offered_suites: List[str]
    key_exchange: KeyExchange = KeyExchange.EPHEMERAL
    zero_rtt_enabled: bool = False
    client_auth: bool = False
    revocation_checking: bool = False
    certificate_file: Optional[Path] = None


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
_KEYS = {"tls_versions", "cipher_suites", "key_exchange", "zero_rtt", "client_auth",
         "revocation_checking", "certificate"}


def _normalize_version(text: str) -> str:
    text = text.strip()
    for prefix in ("TLSv", "TLS"):
        if text.upper().startswith(prefix.upper()):
            text = text[len(prefix):].strip()
    return text


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def parse_server_config_text(text: str, base_dir: Union[str, Path] = ".") -> ServerConfigInput:
    """
    `key = value` lines, `#` starts a comment. The certificate path is
    resolved relative to base_dir.
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _KEYS:
            raise ConfigError(f"line {number}: expected one of {sorted(_KEYS)} as `key = value`")
        values[key] = value.strip()

    if "tls_versions" not in values or "cipher_suites" not in values:
        raise ConfigError("config must set tls_versions and cipher_suites")
    try:
        key_exchange = KeyExchange(values.get("key_exchange", "ephemeral").lower())
    except ValueError:
        raise ConfigError(f"key_exchange must be ephemeral or static, got {values['key_exchange']!r}")

    certificate = values.get("certificate")
    return ServerConfigInput(
        tls_versions=frozenset(_normalize_version(v) for v in _split_list(values["tls_versions"])),
        offered_suites=_split_list(values["cipher_suites"]),
        key_exchange=key_exchange,
        zero_rtt_enabled=_parse_bool("zero_rtt", values.get("zero_rtt", "false")),
        client_auth=_parse_bool("client_auth", values.get("client_auth", "false")),
        revocation_checking=_parse_bool("revocation_checking", values.get("revocation_checking", "false")),
        certificate_file=(Path(base_dir) / certificate) if certificate else None,
    )


def parse_server_config(path: Union[str, Path]) -> ServerConfigInput:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_server_config_text(text, path.parent)


def load_certificate_file(path: Path) -> List[CertificateRecord]:
    """Leaf first, then its chain"""
    try:
        return load_certificates(Path(path).read_text())
    except (OSError, MalformedEncoding, NonCanonicalEncoding) as e:
        raise ConfigError(f"cannot read certificate {path}: {e}")


# ---------- audit ----------

class Finding(BaseModel):
    model_config = ConfigDict(frozen=True)

    rule_id: str
    severity: Severity
    message: str

    def line(self) -> str:
        return f"{self.rule_id} {self.severity.value.upper()} {self.message}"


class AuditReport(BaseModel):
    findings: List[Finding]

    @property
    def compliant(self) -> bool:
        return not any(f.severity is Severity.FAIL for f in self.findings)

    def lines(self) -> List[str]:
        return [f.line() for f in self.findings]


class AuditContext(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ServerConfigInput
    policy: CipherSuitePolicy
    now: int
    certificates: List[CertificateRecord] = []
    crl: Optional[RevocationList] = None


def _finding(rule_id: str, severity: Severity, message: str) -> List[Finding]:
    return [Finding(rule_id=rule_id, severity=severity, message=message)]


def _rule_versions(ctx: AuditContext) -> List[Finding]:
    versions = ctx.config.tls_versions
    if versions == {"1.3"}:
        return _finding("R1", Severity.PASS, "only TLS 1.3 enabled")
    if versions <= {"1.3", "1.2"} and "1.2" in versions and ctx.policy.allow_tls12_fallback:
        return _finding("R1", Severity.WARN, "TLS 1.2 enabled as constrained-device fallback")
    others = ", ".join(sorted(versions - {"1.3"})) or "none"
    return _finding("R1", Severity.FAIL, f"versions other than TLS 1.3 enabled: {others}")


def _rule_ephemeral(ctx: AuditContext) -> List[Finding]:
    if ctx.config.key_exchange is KeyExchange.EPHEMERAL:
        return _finding("R2", Severity.PASS, "ephemeral key exchange")
    return _finding("R2", Severity.FAIL, "static key exchange gives no forward secrecy")


def _rule_zero_rtt(ctx: AuditContext) -> List[Finding]:
    if ctx.config.zero_rtt_enabled:
        return _finding("R3", Severity.FAIL, "0-RTT early data enabled")
    return _finding("R3", Severity.PASS, "0-RTT disabled")


def _rule_suites(ctx: AuditContext) -> List[Finding]:
    if not ctx.config.offered_suites:
        return _finding("R4", Severity.FAIL, "no cipher suites offered")
    allowed = set(ctx.policy.preference)
    offending = [s for s in ctx.config.offered_suites if s not in allowed]
    if not offending:
        return _finding("R4", Severity.PASS, "all offered suites permitted")
    return [Finding(rule_id="R4", severity=Severity.FAIL,
                    message=f"{suite} not permitted for {ctx.policy.device_class.value} devices")
            for suite in offending]


def _rule_validity(ctx: AuditContext) -> List[Finding]:
    if not ctx.certificates:
        return _finding("R5", Severity.FAIL, "no certificate configured")
    leaf = ctx.certificates[0]
    if leaf.lifetime > MAX_END_ENTITY_DAYS * SECONDS_PER_DAY:
        return _finding("R5", Severity.FAIL, f"certificate lifetime exceeds {MAX_END_ENTITY_DAYS} days")
    if not leaf.not_before <= ctx.now <= leaf.not_after:
        return _finding("R5", Severity.FAIL, "certificate not valid now")
    crl = ctx.crl
    if crl is not None and crl.issuer_id == leaf.issuer_id:
        issuer = next((c for c in ctx.certificates[1:] if c.subject_id == crl.issuer_id), None)
        if issuer is None:
            return _finding("R5", Severity.WARN, "revocation list issuer not in chain, list not checked")
        if not crl.verify(issuer):
            return _finding("R5", Severity.FAIL, "revocation list signature does not verify")
        if leaf.serial in set(crl.revoked_serials):
            return _finding("R5", Severity.FAIL, "certificate revoked")
    return _finding("R5", Severity.PASS, "certificate lifetime and validity ok")


def _rule_algorithms(ctx: AuditContext) -> List[Finding]:
    if not ctx.certificates:
        return _finding("R6", Severity.FAIL, "no certificate configured")
    algorithms = sorted({c.signature_alg for c in ctx.certificates})
    if len(algorithms) != 1:
        return _finding("R6", Severity.FAIL, f"chain mixes signature algorithms: {', '.join(algorithms)}")
    if ctx.policy.future and algorithms[0] not in {s.name for s in resolve(Mode.FUTURE, Role.SIGNATURE)}:
        return _finding("R6", Severity.FAIL, f"{algorithms[0]} is not a future-mode signature algorithm")
    return _finding("R6", Severity.PASS, f"chain signed with {algorithms[0]} throughout")


def _rule_revocation(ctx: AuditContext) -> List[Finding]:
    if ctx.config.client_auth and not ctx.config.revocation_checking:
        return _finding("R7", Severity.FAIL, "client certificates accepted without revocation checking")
    return _finding("R7", Severity.PASS, "client certificate revocation handled")


RULES: List[Tuple[str, Callable[[AuditContext], List[Finding]]]] = [
    ("R1", _rule_versions),
    ("R2", _rule_ephemeral),
    ("R3", _rule_zero_rtt),
    ("R4", _rule_suites),
    ("R5", _rule_validity),
    ("R6", _rule_algorithms),
    ("R7", _rule_revocation),
]


def audit_config(cfg: ServerConfigInput, policy: CipherSuitePolicy, now: int,
                 crl: Optional[RevocationList] = None,
                 certificates: Optional[List[CertificateRecord]] = None) -> AuditReport:
    """Run every rule in catalog order; compliant iff no FAIL finding"""
    if certificates is None and cfg.certificate_file is not None:
        certificates = load_certificate_file(cfg.certificate_file)
    ctx = AuditContext(config=cfg, policy=policy, now=now, certificates=certificates or [], crl=crl)

    findings: List[Finding] = []
    for _, rule in RULES:
        findings.extend(rule(ctx))
    report = AuditReport(findings=findings)
    logger.info(f"[TLS] Audit {'compliant' if report.compliant else 'non-compliant'} "
                f"({sum(f.severity is Severity.FAIL for f in findings)} failures)")
    return report
