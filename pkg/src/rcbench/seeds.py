"""Deterministic seed fan-out for experiments and workers."""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from structured parts, via SHA-256 of 'a:b:c'."""
    key = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big")
