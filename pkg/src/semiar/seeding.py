"""Deterministic, platform-independent randomness helpers.

Everything random in this package flows through keyed hashing so that any
value can be recomputed from (seed, key) alone: no generator state, no
ordering sensitivity, identical results across processes and platforms.
"""

from __future__ import annotations

import hashlib
import struct


def _digest(seed: int, *key: object) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<q", seed))
    for part in key:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return h.digest()


def unit_draw(seed: int, *key: object) -> float:
    """Uniform draw in [0, 1) determined entirely by (seed, key)."""
    return int.from_bytes(_digest(seed, *key), "little") / 2.0**64


def int_draw(seed: int, *key: object) -> int:
    """Unsigned 64-bit draw determined entirely by (seed, key)."""
    return int.from_bytes(_digest(seed, *key), "little")


def mix_seed(base: int, *indices: int) -> int:
    """Derive a run seed from a base seed and structural indices.

    Collision-resistant in the indices (unlike plain XOR), so cell 1 rep 0
    and cell 0 rep 1 get unrelated streams.
    """
    return int_draw(base, "mix", *indices) % 2**63
