# -*- coding: utf-8 -*-
"""Shared fixtures: seeded sources, a fixed clock, a root CA with its RA"""

import pytest

from entropy import RandomSource, SourceKind
from pki import CertificateAuthority, IssuancePolicy, new_crl
from suite_registry import Mode

NOW = 1_700_000_000


class ConstantSource(RandomSource):
    """Returns one repeated byte; fails every health test"""

    def __init__(self, byte: int = 0):
        super().__init__(SourceKind.SEEDED, b"constant")
        self.byte = byte

    def read(self, n: int) -> bytes:
        return bytes([self.byte]) * n


@pytest.fixture
def now():
    return NOW


@pytest.fixture
def source():
    return RandomSource.seeded(b"chip2app-tests")


@pytest.fixture
def zero_source():
    return ConstantSource(0x00)


@pytest.fixture
def root_ca(source, now):
    ca = CertificateAuthority.create_root("test-root", Mode.CURRENT, source, now)
    ca.crl = new_crl(ca, now)
    return ca


@pytest.fixture
def permissive_policy():
    return IssuancePolicy(name_pattern=".*", mode=Mode.CURRENT)
