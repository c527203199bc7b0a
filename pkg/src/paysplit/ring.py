"""Arithmetic in the ring Z_{2^128}.

Every protocol value (masks, vector entries, aggregates, balances) lives in
this ring.  Words are plain ints in [0, 2^128); wrap-around is the point, not
an error.  Balances that are semantically signed are mapped back through
``signed()`` which centers the ring on zero.
"""

from __future__ import annotations

BITS = 128
MOD = 1 << BITS
MASK = MOD - 1
WORD_BYTES = 16

HALF = 1 << (BITS - 1)


def add(a: int, b: int) -> int:
    return (a + b) & MASK


def sub(a: int, b: int) -> int:
    return (a - b) & MASK


def mul(a: int, b: int) -> int:
    return (a * b) & MASK


def neg(a: int) -> int:
    return (-a) & MASK


def signed(a: int) -> int:
    """Centered representative: the unique x in [-2^127, 2^127) with x = a mod 2^128."""
    a &= MASK
    return a - MOD if a >= HALF else a


def to_bytes(a: int) -> bytes:
    return (a & MASK).to_bytes(WORD_BYTES, "big")


def from_bytes(raw: bytes) -> int:
    if len(raw) != WORD_BYTES:
        raise ValueError(f"ring word must be {WORD_BYTES} bytes, got {len(raw)}")
    return int.from_bytes(raw, "big")
