# -*- coding: utf-8 -*-
"""
Domain errors. Verification outcomes (verdicts, rejections, audit findings)
are values, not exceptions; everything here means the operation could not run.
"""

from typing import Optional


class Chip2AppError(Exception):
    """Base class for every chip2app failure"""

    code = "error"

    def __init__(self, message: str = "", code: Optional[str] = None):
        super().__init__(message or self.code)
        if code is not None:
            self.code = code


class LengthError(Chip2AppError):
    code = "length"


class HealthGateError(Chip2AppError):
    code = "health-gate"

    def __init__(self, message: str = "", report=None):
        super().__init__(message)
        self.report = report


class AlgorithmNotAvailable(Chip2AppError):
    code = "not-available"


class ModeMismatch(Chip2AppError):
    code = "mode-mismatch"


class AuthenticationError(Chip2AppError):
    code = "authentication"


class MalformedCiphertext(Chip2AppError):
    code = "malformed-ciphertext"


class MalformedEncoding(Chip2AppError):
    code = "malformed"

    def __init__(self, message: str = "", offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class NonCanonicalEncoding(Chip2AppError):
    code = "non-canonical"


class OtpWriteOnceError(Chip2AppError):
    code = "write-once"


class OtpRangeError(Chip2AppError):
    code = "range"


class OtpSlotUnavailable(Chip2AppError):
    code = "slot-unavailable"


class UnknownHandle(Chip2AppError):
    code = "unknown-handle"


class CaRefusal(Chip2AppError):
    code = "ca-refusal"


class IssuerMismatch(Chip2AppError):
    code = "issuer-mismatch"


class KeyLengthError(Chip2AppError):
    code = "key-length"


class ExpiredSigner(Chip2AppError):
    code = "expired-signer"


class StateError(Chip2AppError):
    code = "state"


class InvalidPublicKey(Chip2AppError):
    code = "invalid-public-key"

    def __init__(self, message: str = "", session=None):
        super().__init__(message)
        self.session = session


class EmptySecret(Chip2AppError):
    code = "empty-secret"


class ConfigError(Chip2AppError):
    code = "config"


class StoreError(Chip2AppError):
    code = "store"
