"""Byte-exact wire encodings and the base64url envelope helpers.

A submission is the member's N ring words back to back (16*N bytes); a digest
core is v' | c | b_entry | status, 52 bytes. JSON carries these as unpadded
base64url strings.
"""

from __future__ import annotations

import base64
import struct
from dataclasses import dataclass

from . import ring

DIGEST_BYTES = 3 * ring.WORD_BYTES + 4


class WireError(ValueError):
    pass


def b64e(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64d(text: str) -> bytes:
    pad = -len(text) % 4
    try:
        return base64.urlsafe_b64decode(text + "=" * pad)
    except (ValueError, TypeError) as exc:
        raise WireError(f"bad base64url payload: {exc}") from exc


def encode_submission(vec: list[int]) -> bytes:
    return b"".join(ring.to_bytes(w) for w in vec)


def decode_submission(data: bytes, n: int) -> list[int]:
    if len(data) != ring.WORD_BYTES * n:
        raise WireError(
            f"submission must be {ring.WORD_BYTES * n} bytes for {n} members, got {len(data)}"
        )
    return [
        ring.from_bytes(data[k * ring.WORD_BYTES : (k + 1) * ring.WORD_BYTES])
        for k in range(n)
    ]


@dataclass(frozen=True)
class DigestCore:
    v_prime: int
    c: int
    b_entry: int
    status: int


def encode_digest_core(core: DigestCore) -> bytes:
    return (
        ring.to_bytes(core.v_prime)
        + ring.to_bytes(core.c)
        + ring.to_bytes(core.b_entry)
        + struct.pack(">I", core.status)
    )


def decode_digest_core(data: bytes) -> DigestCore:
    if len(data) != DIGEST_BYTES:
        raise WireError(f"digest core must be {DIGEST_BYTES} bytes, got {len(data)}")
    return DigestCore(
        v_prime=ring.from_bytes(data[0:16]),
        c=ring.from_bytes(data[16:32]),
        b_entry=ring.from_bytes(data[32:48]),
        status=struct.unpack(">I", data[48:52])[0],
    )


def encode_word(w: int) -> str:
    return b64e(ring.to_bytes(w))


def decode_word(text: str) -> int:
    data = b64d(text)
    if len(data) != ring.WORD_BYTES:
        raise WireError(f"ring word must be {ring.WORD_BYTES} bytes, got {len(data)}")
    return ring.from_bytes(data)
