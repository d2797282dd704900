# -*- coding: utf-8 -*-
"""
Compact Cert - deterministic CBOR certificate profile, a verbose text baseline
for size comparison, and the canonical encode/decode helpers every signed
structure in chip2app is built on.

Compact layout (definite-length array, field order frozen):
    [version, serial, issuer_id, subject_id, public_key_alg, public_key,
     not_before, not_after, extensions, signature_alg, signature]
The to-be-signed bytes are the same array truncated before signature_alg.
"""

import base64
import io
import re
from typing import Any, Dict, List

import cbor2
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from config import MAX_DECODE_BYTES
from errors import AlgorithmNotAvailable, MalformedEncoding, NonCanonicalEncoding

# Append-only: ids are part of the wire format
ALGORITHM_IDS: Dict[str, int] = {
    "Ed25519": 0,
    "Ed448": 1,
    "ML-DSA": 2,
    "SLH-DSA": 3,
    "ML-KEM": 4,
    "AES-128-GCM": 5,
    "AES-256-GCM": 6,
    "SHA3-384": 7,
    "SHA3-512": 8,
    "X25519": 9,
    "X448": 10,
    "SHA-256": 11,
}
ALGORITHM_NAMES: Dict[int, str] = {v: k for k, v in ALGORITHM_IDS.items()}

BASELINE_HEADER = "C2A-CERTIFICATE-BASELINE"
_ARMOR_RE = r"-----BEGIN C2A {kind}-----\s*(.*?)\s*-----END C2A {kind}-----"


class CertificateRecord(BaseModel):
    """Algorithm-agnostic certificate; the signature covers tbs_bytes(record)"""

    model_config = ConfigDict(frozen=True)

    version: int = 1
    serial: bytes
    issuer_id: str
    subject_id: str
    public_key_alg: str
    public_key: bytes
    not_before: int
    not_after: int
    extensions: Dict[str, bytes] = {}
    signature_alg: str
    signature: bytes = b""

    @model_validator(mode="after")
    def _check_window(self):
        if self.not_before >= self.not_after:
            raise ValueError("not_before must precede not_after")
        if self.version < 0 or self.not_before < 0:
            raise ValueError("version and validity must be unsigned")
        return self

    @property
    def is_ca(self) -> bool:
        return self.extensions.get("ca") == b"\x01"

    @property
    def lifetime(self) -> int:
        return self.not_after - self.not_before


class SizeReport(BaseModel):
    compact_len: int
    baseline_len: int
    ratio: float


def algorithm_id(name: str) -> int:
    try:
        return ALGORITHM_IDS[name]
    except KeyError:
        raise AlgorithmNotAvailable(f"no compact id for algorithm {name!r}")


def algorithm_name(alg_id: Any) -> str:
    if type(alg_id) is not int or alg_id not in ALGORITHM_NAMES:
        raise MalformedEncoding(f"unknown algorithm id {alg_id!r}", offset=0)
    return ALGORITHM_NAMES[alg_id]


# ---------- canonical CBOR ----------

def canonical_dumps(obj: Any) -> bytes:
    """Definite lengths, sorted map keys, shortest-form integers"""
    return cbor2.dumps(obj, canonical=True)


def canonical_loads(data: bytes) -> Any:
    """
    Decode exactly one CBOR item and insist it is in canonical form.
    Raises MalformedEncoding (with byte offset) or NonCanonicalEncoding;
    never anything else.
    """
    data = bytes(data)
    if len(data) > MAX_DECODE_BYTES:
        raise MalformedEncoding(f"input exceeds {MAX_DECODE_BYTES} bytes", offset=MAX_DECODE_BYTES)

    fp = io.BytesIO(data)
    try:
        obj = cbor2.CBORDecoder(fp).decode()
    except (cbor2.CBORDecodeError, EOFError, ValueError, TypeError, OverflowError,
            MemoryError, RecursionError, IndexError, KeyError, re.error) as e:
        raise MalformedEncoding(f"undecodable CBOR: {str(e)[:80]}", offset=fp.tell())

    if fp.tell() != len(data):
        raise MalformedEncoding("trailing bytes after item", offset=fp.tell())

    try:
        reencoded = canonical_dumps(obj)
    except (cbor2.CBOREncodeError, TypeError, ValueError, RecursionError) as e:
        raise MalformedEncoding(f"unsupported CBOR content: {str(e)[:80]}", offset=0)
    if len(reencoded) < len(data) and data.startswith(reencoded):
        raise MalformedEncoding("trailing bytes after item", offset=len(reencoded))
    if reencoded != data:
        raise NonCanonicalEncoding("encoding is not in canonical form")
    return obj


def _expect(value: Any, kind: type, field: str) -> Any:
    # bool is an int subclass; CBOR true/false is never a valid uint here
    if type(value) is not kind:
        raise MalformedEncoding(f"field {field} has wrong type", offset=0)
    if kind is int and value < 0:
        raise MalformedEncoding(f"field {field} must be unsigned", offset=0)
    return value


def expect_list(obj: Any, length: int, what: str) -> List[Any]:
    if type(obj) is not list or len(obj) != length:
        raise MalformedEncoding(f"{what} must be an array of {length} items", offset=0)
    return obj


def expect_text_map(obj: Any, field: str) -> Dict[str, bytes]:
    if type(obj) is not dict:
        raise MalformedEncoding(f"field {field} must be a map", offset=0)
    for k, v in obj.items():
        if type(k) is not str or type(v) is not bytes:
            raise MalformedEncoding(f"field {field} must map text to bytes", offset=0)
    return obj


# ---------- certificate encoding ----------

def _tbs_fields(cert: CertificateRecord) -> List[Any]:
    return [
        cert.version,
        cert.serial,
        cert.issuer_id,
        cert.subject_id,
        algorithm_id(cert.public_key_alg),
        cert.public_key,
        cert.not_before,
        cert.not_after,
        dict(cert.extensions),
    ]


def tbs_bytes(cert: CertificateRecord) -> bytes:
    """Canonical to-be-signed bytes; stable across decode/encode cycles"""
    return canonical_dumps(_tbs_fields(cert))


def encode_compact(cert: CertificateRecord) -> bytes:
    return canonical_dumps(_tbs_fields(cert) + [algorithm_id(cert.signature_alg), cert.signature])


def record_from_fields(fields: Any) -> CertificateRecord:
    fields = expect_list(fields, 11, "certificate")
    (version, serial, issuer_id, subject_id, pk_alg, public_key,
     not_before, not_after, extensions, sig_alg, signature) = fields
    try:
        return CertificateRecord(
            version=_expect(version, int, "version"),
            serial=_expect(serial, bytes, "serial"),
            issuer_id=_expect(issuer_id, str, "issuer_id"),
            subject_id=_expect(subject_id, str, "subject_id"),
            public_key_alg=algorithm_name(pk_alg),
            public_key=_expect(public_key, bytes, "public_key"),
            not_before=_expect(not_before, int, "not_before"),
            not_after=_expect(not_after, int, "not_after"),
            extensions=expect_text_map(extensions, "extensions"),
            signature_alg=algorithm_name(sig_alg),
            signature=_expect(signature, bytes, "signature"),
        )
    except ValidationError as e:
        raise MalformedEncoding(f"invalid certificate fields: {e.errors()[0]['msg']}", offset=0)


def decode_compact(data: bytes) -> CertificateRecord:
    """Inverse of encode_compact; rejects every non-canonical form"""
    return record_from_fields(canonical_loads(data))


# ---------- verbose baseline ----------

def _b64(value: bytes) -> str:
    return base64.b64encode(value).decode("ascii")


def _unb64(value: str, field: str) -> bytes:
    try:
        return base64.b64decode(value.encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError):
        raise MalformedEncoding(f"field {field} is not base64", offset=0)


def encode_baseline(cert: CertificateRecord) -> bytes:
    """Self-describing text: full field names, base64 values, one field per line"""
    lines = [
        BASELINE_HEADER,
        f"version: {_b64(str(cert.version).encode())}",
        f"serial: {_b64(cert.serial)}",
        f"issuer_id: {_b64(cert.issuer_id.encode())}",
        f"subject_id: {_b64(cert.subject_id.encode())}",
        f"public_key_alg: {_b64(cert.public_key_alg.encode())}",
        f"public_key: {_b64(cert.public_key)}",
        f"not_before: {_b64(str(cert.not_before).encode())}",
        f"not_after: {_b64(str(cert.not_after).encode())}",
    ]
    for name in sorted(cert.extensions):
        lines.append(f"extension: {_b64(name.encode())} {_b64(cert.extensions[name])}")
    lines.append(f"signature_alg: {_b64(cert.signature_alg.encode())}")
    lines.append(f"signature: {_b64(cert.signature)}")
    return ("\n".join(lines) + "\n").encode("ascii")


def decode_baseline(data: bytes) -> CertificateRecord:
    try:
        lines = data.decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise MalformedEncoding("baseline must be ASCII text", offset=0)
    if not lines or lines[0] != BASELINE_HEADER:
        raise MalformedEncoding("missing baseline header", offset=0)

    fields: Dict[str, bytes] = {}
    extensions: Dict[str, bytes] = {}
    for line in lines[1:]:
        name, sep, value = line.partition(": ")
        if not sep:
            raise MalformedEncoding(f"bad baseline line {line[:40]!r}", offset=0)
        if name == "extension":
            ext_name, _, ext_value = value.partition(" ")
            extensions[_unb64(ext_name, name).decode()] = _unb64(ext_value, name)
        else:
            fields[name] = _unb64(value, name)

    try:
        return CertificateRecord(
            version=int(fields["version"]),
            serial=fields["serial"],
            issuer_id=fields["issuer_id"].decode(),
            subject_id=fields["subject_id"].decode(),
            public_key_alg=fields["public_key_alg"].decode(),
            public_key=fields["public_key"],
            not_before=int(fields["not_before"]),
            not_after=int(fields["not_after"]),
            extensions=extensions,
            signature_alg=fields["signature_alg"].decode(),
            signature=fields["signature"],
        )
    except (KeyError, ValueError, ValidationError) as e:
        raise MalformedEncoding(f"incomplete baseline: {str(e)[:80]}", offset=0)


def size_report(cert: CertificateRecord) -> SizeReport:
    compact_len = len(encode_compact(cert))
    baseline_len = len(encode_baseline(cert))
    return SizeReport(compact_len=compact_len, baseline_len=baseline_len,
                      ratio=compact_len / baseline_len)


# ---------- text envelopes ----------

def armor(kind: str, data: bytes) -> str:
    body = base64.b64encode(data).decode("ascii")
    wrapped = "\n".join(body[i:i + 64] for i in range(0, len(body), 64))
    return f"-----BEGIN C2A {kind}-----\n{wrapped}\n-----END C2A {kind}-----\n"


def dearmor_all(kind: str, text: str) -> List[bytes]:
    blocks = re.findall(_ARMOR_RE.format(kind=re.escape(kind)), text, flags=re.S)
    if not blocks:
        raise MalformedEncoding(f"no C2A {kind} envelope found", offset=0)
    return [_unb64("".join(block.split()), kind) for block in blocks]


def dearmor(kind: str, text: str) -> bytes:
    return dearmor_all(kind, text)[0]
