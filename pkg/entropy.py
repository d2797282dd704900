# -*- coding: utf-8 -*-
"""
Entropy - random-byte sources and the statistical health gate that every key,
nonce, serial and salt draw goes through.
"""

import hashlib
import logging
import os
from enum import Enum
from math import erfc, sqrt
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from pydantic import BaseModel, Field

from config import HEALTH_ALPHA, HEALTH_SAMPLE_BYTES, KEYGEN_ALPHA, MIN_HEALTH_BITS
from errors import ConfigError, HealthGateError, LengthError

logger = logging.getLogger(__name__)

BitsLike = Union[np.ndarray, bytes, str, Sequence[int]]


class SourceKind(str, Enum):
    SYSTEM = "system"
    SEEDED = "seeded-deterministic"


class RandomSource:
    """
    Byte source. `system` reads the platform CSPRNG (stand-in for a hardware
    TRNG); `seeded-deterministic` is the ChaCha20 keystream under
    SHA-256(seed), for reproducible tests only.

    Seeded sources are single-owner: do not draw from one concurrently.
    """

    def __init__(self, kind: SourceKind = SourceKind.SYSTEM, seed: Optional[bytes] = None):
        self.kind = SourceKind(kind)
        self.seed = seed
        self._stream = None

        if self.kind is SourceKind.SYSTEM:
            if seed is not None:
                raise ConfigError("system source does not accept a seed")
        else:
            if seed is None:
                raise ConfigError("seeded-deterministic source requires a seed")
            key = hashlib.sha256(seed).digest()
            self._stream = Cipher(algorithms.ChaCha20(key, b"\x00" * 16), mode=None).encryptor()

    @classmethod
    def system(cls) -> "RandomSource":
        return cls(SourceKind.SYSTEM)

    @classmethod
    def seeded(cls, seed: bytes) -> "RandomSource":
        return cls(SourceKind.SEEDED, seed)

    def read(self, n: int) -> bytes:
        if n < 0:
            raise LengthError(f"cannot draw {n} bytes")
        if n == 0:
            return b""
        if self._stream is None:
            return os.urandom(n)
        return self._stream.update(b"\x00" * n)

    def __repr__(self):
        return f"RandomSource(kind={self.kind.value})"


def random_bytes(source: RandomSource, n: int) -> bytes:
    """Next n bytes from the source"""
    return source.read(n)


class HealthCheckResult(BaseModel):
    test_name: str
    p_value: float = Field(ge=0.0, le=1.0)
    passed: bool
    flag: Optional[str] = None


class HealthReport(BaseModel):
    test_results: List[HealthCheckResult]
    alpha: float
    overall_pass: bool


def bits_from_bytes(data: bytes) -> np.ndarray:
    """Unpack bytes into a 0/1 array, most significant bit first"""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def _as_bits(bits: BitsLike) -> np.ndarray:
    if isinstance(bits, np.ndarray):
        arr = bits.astype(np.uint8, copy=False)
    elif isinstance(bits, (bytes, bytearray)):
        # Raw bytes are unpacked; use a str or int sequence for literal bits
        arr = bits_from_bytes(bits)
    elif isinstance(bits, str):
        arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(list(bits), dtype=np.uint8)
    if arr.ndim != 1 or np.any(arr > 1):
        raise ValueError("bitstring must be a flat sequence of 0/1 values")
    return arr


def _require_length(arr: np.ndarray):
    if arr.size < MIN_HEALTH_BITS:
        raise LengthError(f"need at least {MIN_HEALTH_BITS} bits, got {arr.size}")


def _clip(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


def _monobit(arr: np.ndarray) -> Tuple[float, Optional[str]]:
    n = arr.size
    ones = int(np.count_nonzero(arr))
    imbalance = abs(ones - (n - ones))
    return _clip(erfc(imbalance / sqrt(2 * n))), None


def _runs(arr: np.ndarray) -> Tuple[float, Optional[str]]:
    n = arr.size
    pi = np.count_nonzero(arr) / n
    if abs(pi - 0.5) >= 2 / sqrt(n):
        return 0.0, "prerequisite-failed"
    runs = int(np.count_nonzero(np.diff(arr))) + 1
    spread = pi * (1 - pi)
    p_value = erfc(abs(runs - 2 * n * spread) / (2 * sqrt(2 * n) * spread))
    return _clip(p_value), None


def monobit_test(bits: BitsLike) -> float:
    """Frequency test: p = erfc(|#ones - #zeros| / sqrt(2n))"""
    arr = _as_bits(bits)
    _require_length(arr)
    return _monobit(arr)[0]


def runs_test(bits: BitsLike) -> float:
    """
    Runs test. Returns 0.0 when the frequency prerequisite
    |pi - 1/2| < 2/sqrt(n) does not hold; health_gate reports the flag.
    """
    arr = _as_bits(bits)
    _require_length(arr)
    return _runs(arr)[0]


# Extensible: health_gate runs every entry in order
HEALTH_TESTS: List[Tuple[str, Callable[[np.ndarray], Tuple[float, Optional[str]]]]] = [
    ("monobit", _monobit),
    ("runs", _runs),
]


def health_gate(sample: BitsLike, alpha: float = HEALTH_ALPHA) -> HealthReport:
    """Run every registered health test; overall_pass iff each p >= alpha"""
    if not 0 < alpha <= 0.5:
        raise ConfigError(f"alpha must be in (0, 0.5], got {alpha}")
    arr = _as_bits(sample)
    _require_length(arr)

    results = []
    for name, test in HEALTH_TESTS:
        p_value, flag = test(arr)
        results.append(HealthCheckResult(test_name=name, p_value=p_value,
                                         passed=p_value >= alpha, flag=flag))
    return HealthReport(test_results=results, alpha=alpha,
                        overall_pass=all(r.passed for r in results))


def checked_random_bytes(source: RandomSource, n: int, alpha: float = KEYGEN_ALPHA) -> bytes:
    """
    Gate a fresh health sample from the source, then return the next n bytes.
    Raises HealthGateError instead of handing out bytes from a failing source.
    """
    sample = source.read(HEALTH_SAMPLE_BYTES)
    report = health_gate(sample, alpha)
    if not report.overall_pass:
        failed = [r.test_name for r in report.test_results if not r.passed]
        logger.warning(f"[ENTROPY] Health gate failed ({', '.join(failed)}), refusing draw")
        raise HealthGateError(f"entropy health gate failed: {', '.join(failed)}", report=report)
    return source.read(n)
