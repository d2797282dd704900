# -*- coding: utf-8 -*-

import logging
import os
import sys

# Load .env file if it exists (for persistent settings)
try:
    from dotenv import load_dotenv
    load_dotenv(override=False)
except ImportError:
    pass  # python-dotenv not installed, use environment variables only


# Logging
LOG_LEVEL = os.getenv("CHIP2APP_LOG_LEVEL", "WARNING").upper()

# Secure element store
DEFAULT_STORE = os.getenv("CHIP2APP_STORE", None)  # Default for --store
STORE_PASSPHRASE = os.getenv("CHIP2APP_STORE_PASSPHRASE", "chip2app-dev-passphrase")
STORE_MAGIC = b"C2A-SE01"
STORE_KDF_LABEL = b"se-store-v1"

# Entropy health gate
HEALTH_ALPHA = float(os.getenv("CHIP2APP_HEALTH_ALPHA", "0.01"))             # Default alpha for health_gate / rng-test
KEYGEN_ALPHA = float(os.getenv("CHIP2APP_KEYGEN_ALPHA", "1e-6"))             # Alpha for the gate in front of key generation
HEALTH_SAMPLE_BYTES = int(os.getenv("CHIP2APP_HEALTH_SAMPLE_BYTES", "32"))   # Fresh sample drawn before every gated draw
MIN_HEALTH_BITS = 100

# OTP layout
OTP_SLOT_COUNT = int(os.getenv("CHIP2APP_OTP_SLOTS", "8"))
OTP_SLOT_SIZE = 4096
DEVICE_CERT_SLOT = 0
TRUST_ROOT_SLOT = 1
CA_CHAIN_SLOT = 2

# Certificate lifecycle
MAX_END_ENTITY_DAYS = 398
MAX_CHAIN_DEPTH = 4
DEVICE_CERT_DAYS = int(os.getenv("CHIP2APP_DEVICE_CERT_DAYS", "398"))
CA_CERT_DAYS = int(os.getenv("CHIP2APP_CA_CERT_DAYS", "3650"))
APPROVAL_TTL_SECONDS = int(os.getenv("CHIP2APP_APPROVAL_TTL", "3600"))       # RA approval token lifetime
SERIAL_BYTES = 16
SECONDS_PER_DAY = 86400

# Chip authentication
NONCE_BYTES = 16
CHIP_KEY_GROUP = 14       # Data group carrying the chip public key
CHIP_NAME_GROUP = 1       # Data group carrying the chip holder name

# AEAD
AEAD_NONCE_BYTES = 12

# Secure boot
ANTI_ROLLBACK = os.getenv("CHIP2APP_ANTI_ROLLBACK", "true").lower() == "true"

# Compact certificate decoding
MAX_DECODE_BYTES = 64 * 1024


def configure_logging(level: str = None):
    """Send tagged log lines to stderr; stdout stays reserved for command output"""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(name)s] %(levelname)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel((level or LOG_LEVEL).upper())
