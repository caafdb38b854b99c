"""Deterministic synthetic payload generation.

Payloads come in three fixed size classes (16 KiB, 1 MiB, 4 MiB) and are
produced by a splitmix64 counter generator: output block ``i`` is a pure
function of ``seed`` and ``i``, serialized little-endian, 8 bytes per
block. The same (seed, size) pair therefore yields byte-identical
payloads on every platform without any shared RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_SEED = 42


@dataclass(frozen=True)
class SizeClass:
    """One of the three payload size classes."""

    label: str
    byte_size: int


SMALL = SizeClass("small", 16 * 1024)
MEDIUM = SizeClass("medium", 1024 * 1024)
LARGE = SizeClass("large", 4 * 1024 * 1024)

SIZE_CLASSES = {cls.label: cls for cls in (SMALL, MEDIUM, LARGE)}


def size_class(label: str) -> SizeClass:
    try:
        return SIZE_CLASSES[label]
    except KeyError:
        raise ValueError(f"unknown size class {label!r}, expected one of {sorted(SIZE_CLASSES)}") from None


@dataclass(frozen=True)
class PayloadSpec:
    """Fully determines a generated byte sequence."""

    seed: int
    size_class: SizeClass

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")


def splitmix64(seed: int, index: int) -> int:
    """The ``index``-th 64-bit output of a splitmix64 stream seeded with ``seed``."""
    z = (seed + (index + 1) * _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def generate(spec: PayloadSpec) -> bytes:
    """Generate the payload for ``spec``; pure and stateless."""
    n = spec.size_class.byte_size
    blocks = (n + 7) // 8
    idx = np.arange(1, blocks + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(spec.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z.astype("<u8").tobytes()[:n]
