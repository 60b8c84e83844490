"""Counter-based replication streams for common random numbers.

A stream is a pure function of ``(master_seed, point_key, replication, tag)``:
no generator state is carried around, so the same replication can be
regenerated in any order, in any process, and at any fidelity level.

The ``shared`` tag is consumed identically by every fidelity level at a given
(point, replication), which is what induces positive correlation between
levels. ``private(i)`` tags feed level-specific randomness.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri

from . import kernels
from ._fallback import MASK64, mix64

__all__ = [
    "Phase",
    "StreamTag",
    "SHARED",
    "private",
    "ReplicationStream",
    "point_key",
    "make_stream",
    "base_key",
    "uniforms",
    "normals",
]

COMMON_POINT = 0  # point key used when streams must not depend on the point


class Phase(Enum):
    OPTIMIZE = 0x6F7074
    POST = 0x706F7374


@dataclass(frozen=True)
class StreamTag:
    kind: str  # "shared" or "private"
    level: int = 0

    def __post_init__(self):
        if self.kind not in ("shared", "private"):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.kind == "private" and self.level < 0:
            raise ValueError("private stream level must be >= 0")

    @property
    def code(self) -> int:
        return 0 if self.kind == "shared" else 1 + self.level


SHARED = StreamTag("shared")


def private(level: int) -> StreamTag:
    return StreamTag("private", level)


def point_key(x) -> int:
    """64-bit key from the exact bit pattern of the coordinates."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())
    # -0.0 and 0.0 are the same point
    arr = arr + 0.0
    digest = hashlib.blake2b(arr.tobytes(), digest_size=8).digest()
    return struct.unpack("<Q", digest)[0]


def base_key(master_seed: int, pkey: int, phase: Phase = Phase.OPTIMIZE) -> int:
    return mix64(mix64((master_seed & MASK64) ^ phase.value) ^ (pkey & MASK64))


def uniforms(master_seed: int, pkey: int, reps, tag: StreamTag, n: int,
             phase: Phase = Phase.OPTIMIZE) -> np.ndarray:
    """Uniform draws of shape (len(reps), n) for a batch of replications."""
    reps = np.asarray(reps, dtype=np.int64)
    if reps.size and reps.min() < 1:
        raise ValueError("replication indices start at 1")
    return kernels.uniform_block(base_key(master_seed, pkey, phase), reps, tag.code, n)


def normals(master_seed: int, pkey: int, reps, tag: StreamTag, n: int,
            phase: Phase = Phase.OPTIMIZE) -> np.ndarray:
    return ndtri(uniforms(master_seed, pkey, reps, tag, n, phase))


@dataclass(frozen=True)
class ReplicationStream:
    """One replication's random inputs at one point."""

    master_seed: int
    point_key: int
    replication: int
    tag: StreamTag = SHARED
    phase: Phase = Phase.OPTIMIZE

    def __post_init__(self):
        if self.replication < 1:
            raise ValueError("replication index must be >= 1")

    def with_tag(self, tag: StreamTag) -> "ReplicationStream":
        return ReplicationStream(self.master_seed, self.point_key, self.replication, tag, self.phase)

    def uniforms(self, n: int) -> np.ndarray:
        return uniforms(self.master_seed, self.point_key, [self.replication], self.tag, n, self.phase)[0]

    def normals(self, n: int) -> np.ndarray:
        return ndtri(self.uniforms(n))


def make_stream(master_seed: int, point, replication_index: int,
                substream_tag: StreamTag = SHARED,
                phase: Phase = Phase.OPTIMIZE) -> ReplicationStream:
    return ReplicationStream(master_seed, point_key(point), replication_index, substream_tag, phase)


def derive_seed(master_seed: int, *labels) -> int:
    """Deterministic child seed; labels may be ints or strings."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", master_seed & MASK64))
    for label in labels:
        h.update(b"\x00" + str(label).encode())
    return struct.unpack("<Q", h.digest())[0] >> 1
