"""Pseudorandom masks shared by the group, opaque to the server.

All masks are single AES-128 blocks under the group key, interpreted as ring
words.  The PRF input block is a fixed 16-byte layout:

    tag(1) | round(8, BE) | i(3, BE) | j(3, BE) | zero pad(1)

Domain tags keep the round masks, the two malicious-mode constants, the
settle masks and the announcement masks disjoint.  Masks are deterministic:
any member can recompute any round's mask sheet on demand (catch-up, tracing,
audits) without extra state.

The module counts every PRF block it evaluates.  The aggregation server never
imports this module; tests pin that by snapshotting the counter around server
calls.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from . import ring

KEY_BYTES = 16
BLOCK_BYTES = 16

# Indices ride in 3 bytes; round numbers in 8.
INDEX_LIMIT = 1 << 24
ROUND_LIMIT = 1 << 64


class MaskDomain(IntEnum):
    S = 0x00         # malicious-mode tagging secret
    UNIT = 0x01      # malicious-mode masked one
    ROUND = 0x02     # per-round pairwise masks r_{m,i,j}
    SETTLE = 0x03    # settle claim masks
    ANNOUNCE = 0x04  # amount announcement masks


_prf_blocks = 0
_prf_lock = threading.Lock()


def prf_block_count() -> int:
    """Total AES blocks evaluated process-wide (crypto-free-server probes)."""
    return _prf_blocks


def _count_blocks(n: int) -> None:
    global _prf_blocks
    with _prf_lock:
        _prf_blocks += n


def encode_input(domain: MaskDomain, m: int, i: int, j: int) -> bytes:
    if not 0 <= m < ROUND_LIMIT:
        raise ValueError(f"round {m} out of range")
    if not (0 <= i < INDEX_LIMIT and 0 <= j < INDEX_LIMIT):
        raise ValueError(f"index pair ({i}, {j}) out of range")
    return (
        bytes((domain,))
        + m.to_bytes(8, "big")
        + i.to_bytes(3, "big")
        + j.to_bytes(3, "big")
        + b"\x00"
    )


@dataclass(frozen=True)
class RoundMaskSheet:
    """All pairwise masks of one round, with the sums the checks consume.

    rows[i][j] is r_{m,i,j}: what submitter i adds to the cell of member j.
    Only online members appear as rows; only active members as columns.
    """

    round_no: int
    submitters: tuple[int, ...]
    columns: tuple[int, ...]
    rows: dict[int, dict[int, int]]
    row_sums: dict[int, int]
    col_sums: dict[int, int]
    total: int

    def diag(self, i: int) -> int:
        return self.rows[i][i]


class GroupSecret:
    """The shared symmetric key plus the two derived malicious-mode constants."""

    __slots__ = ("key", "s", "u", "_algorithm")

    def __init__(self, key: bytes):
        if len(key) != KEY_BYTES:
            raise ValueError(f"group key must be {KEY_BYTES} bytes")
        self.key = key
        self._algorithm = algorithms.AES(key)
        self.s = self._block(encode_input(MaskDomain.S, 0, 0, 0))
        self.u = self._block(encode_input(MaskDomain.UNIT, 0, 0, 0))

    def _block(self, data: bytes) -> int:
        enc = Cipher(self._algorithm, modes.ECB()).encryptor()
        out = enc.update(data) + enc.finalize()
        _count_blocks(1)
        return ring.from_bytes(out)

    def _blocks(self, blobs: Sequence[bytes]) -> list[int]:
        if not blobs:
            return []
        enc = Cipher(self._algorithm, modes.ECB()).encryptor()
        out = enc.update(b"".join(blobs)) + enc.finalize()
        _count_blocks(len(blobs))
        return [
            int.from_bytes(out[k : k + BLOCK_BYTES], "big")
            for k in range(0, len(out), BLOCK_BYTES)
        ]

    def derive_mask(self, domain: MaskDomain, m: int, i: int, j: int) -> int:
        return self._block(encode_input(domain, m, i, j))

    def round_mask_row(self, m: int, i: int, columns: Sequence[int]) -> dict[int, int]:
        """Masks submitter i spreads over the active columns in round m."""
        blobs = [encode_input(MaskDomain.ROUND, m, i, j) for j in columns]
        return dict(zip(columns, self._blocks(blobs)))

    def round_mask_sheet(
        self, m: int, submitters: Iterable[int], columns: Iterable[int]
    ) -> RoundMaskSheet:
        subs = tuple(sorted(submitters))
        cols = tuple(sorted(columns))
        blobs = [
            encode_input(MaskDomain.ROUND, m, i, j) for i in subs for j in cols
        ]
        flat = self._blocks(blobs)
        rows: dict[int, dict[int, int]] = {}
        row_sums: dict[int, int] = {}
        col_acc = {j: 0 for j in cols}
        pos = 0
        for i in subs:
            row = {}
            acc = 0
            for j in cols:
                r = flat[pos]
                pos += 1
                row[j] = r
                acc += r
                col_acc[j] += r
            rows[i] = row
            row_sums[i] = acc & ring.MASK
        col_sums = {j: v & ring.MASK for j, v in col_acc.items()}
        total = sum(col_sums.values()) & ring.MASK
        return RoundMaskSheet(m, subs, cols, rows, row_sums, col_sums, total)

    def settle_mask(self, m: int, i: int) -> int:
        return self.derive_mask(MaskDomain.SETTLE, m, i, 0)

    def announce_mask(self, m: int, i: int) -> int:
        return self.derive_mask(MaskDomain.ANNOUNCE, m, i, 0)


def mask_value(v: int, r: int) -> int:
    return ring.add(v, r)


def unmask_value(v: int, r: int) -> int:
    return ring.sub(v, r)


def tag_value(v: int, s: int, r: int) -> int:
    """Malicious-mode cell: s*v + r.  Unforgeable without knowing s and r."""
    return ring.add(ring.mul(s, v), r)
