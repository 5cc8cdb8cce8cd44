"""Canonical JSON fingerprints.

A fingerprint is sha256 over canonical JSON (sorted keys, no spaces);
binary headers embed the raw 32 bytes, JSON records the hex form.
"""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def fingerprint_bytes(obj) -> bytes:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).digest()


def fingerprint_hex(obj) -> str:
    return fingerprint_bytes(obj).hex()


def seed_from(master_seed: int, label: str) -> int:
    """Stable derived integer seed for a named sub-experiment."""
    h = hashlib.sha256(f"{int(master_seed)}::{label}".encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")
