"""Slot codec: six 21-bit lanes inside one ring word.

Slot k occupies bits [21k, 21k + 21); the top two bits of the word stay
clear.  Packed rounds move up to six charge bits per round this way.  Lane
arithmetic on the aggregate is exact as long as each lane's running value
stays inside its headroom; the signed decoder recovers per-lane values after
subtractions by propagating borrows off the centered representative.
"""

from __future__ import annotations

from . import ring

SLOTS = 6
SLOT_BITS = 21
SLOT_MOD = 1 << SLOT_BITS
SLOT_MASK = SLOT_MOD - 1

# Signed decode is unambiguous while every lane stays in (-2^20, 2^20).
SIGNED_LANE_BOUND = 1 << (SLOT_BITS - 1)


class SlotOverflowError(ValueError):
    pass


def pack(values: tuple[int, ...] | list[int]) -> int:
    if len(values) != SLOTS:
        raise SlotOverflowError(f"expected {SLOTS} slot values, got {len(values)}")
    word = 0
    for k, v in enumerate(values):
        if not 0 <= v < SLOT_MOD:
            raise SlotOverflowError(f"slot {k} value {v} outside [0, 2^{SLOT_BITS})")
        word |= v << (SLOT_BITS * k)
    return word


def unpack(word: int) -> tuple[int, ...]:
    if not 0 <= word < (1 << (SLOT_BITS * SLOTS)):
        raise SlotOverflowError("word has bits above the top slot")
    return tuple((word >> (SLOT_BITS * k)) & SLOT_MASK for k in range(SLOTS))


def add_slotwise(a: int, b: int) -> int:
    """Lane-wise sum with per-lane wrap (no carry bleed between lanes)."""
    out = 0
    for k in range(SLOTS):
        shift = SLOT_BITS * k
        lane = (((a >> shift) + (b >> shift)) & SLOT_MASK) << shift
        out |= lane
    return out


def unpack_signed(word: int) -> tuple[int, ...]:
    """Decode a ring word as six signed lanes, borrowing across lanes.

    Works on aggregates built from packed additions and subtractions provided
    every true lane value lies in (-2^20, 2^20); outside that the decode is
    ambiguous and this raises.
    """
    x = ring.signed(word)
    lanes = []
    for _ in range(SLOTS):
        lane = x & SLOT_MASK
        if lane >= SIGNED_LANE_BOUND:
            lane -= SLOT_MOD
        lanes.append(lane)
        x = (x - lane) >> SLOT_BITS
    if x != 0:
        raise SlotOverflowError("residue above top slot; lane bound exceeded")
    return tuple(lanes)
