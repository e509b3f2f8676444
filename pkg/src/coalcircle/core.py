"""Shared geometric and combinatorial types.

Circle arithmetic on the circle of circumference 2*pi, finite unions of
open arcs, partitions of {0..n-1} in minimal-element canonical form,
and reproducible random stream specification.

All types are immutable values and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Endpoints closer than this are treated as coincident.  Open arcs with
#: coincident endpoints are rejected, matching the requirement that the
#: constituent intervals have distinct endpoints.
DELTA_MIN = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a structural invariant."""


def wrap_angle(x: float) -> float:
    """Reduce an angle to the canonical range [0, 2*pi)."""
    y = math.fmod(x, TWO_PI)
    if y < 0.0:
        y += TWO_PI
    # fmod can return exactly TWO_PI after the correction when x is a
    # tiny negative number; fold that back to 0.
    if y >= TWO_PI:
        y -= TWO_PI
    return y


def wrap_angles(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    y = np.mod(x, TWO_PI)
    y[y >= TWO_PI] = 0.0
    return y


def arc_distance(x: float, y: float) -> float:
    """Geodesic distance on the circle, in [0, pi].

    Symmetric, zero iff the two angles coincide mod 2*pi, and satisfies
    the triangle inequality.
    """
    d = abs(wrap_angle(x) - wrap_angle(y))
    return min(d, TWO_PI - d)


@dataclass(frozen=True, order=True)
class CirclePoint:
    """A point on the circle, stored as an angle in [0, 2*pi)."""

    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", wrap_angle(self.angle))

    def distance_to(self, other: "CirclePoint") -> float:
        return arc_distance(self.angle, other.angle)

    def __float__(self) -> float:
        return self.angle


class IntervalStatus(Enum):
    EMPTY = "empty"
    FULL_CIRCLE = "full_circle"
    ARCS = "arcs"


@dataclass(frozen=True)
class IntervalSet:
    """A finite union of open arcs on the circle, or the absorbing states.

    Arcs are stored as (start, length) pairs with start in [0, 2*pi) and
    length in (0, 2*pi), sorted by start, pairwise disjoint with all
    endpoints distinct.  ``EMPTY`` and ``FULL_CIRCLE`` carry no arcs;
    they are the absorbing states of the annihilating dynamics.
    """

    status: IntervalStatus
    arcs: tuple[tuple[float, float], ...] = field(default=())

    # -- constructors -------------------------------------------------

    @staticmethod
    def empty() -> "IntervalSet":
        return IntervalSet(IntervalStatus.EMPTY)

    @staticmethod
    def full_circle() -> "IntervalSet":
        return IntervalSet(IntervalStatus.FULL_CIRCLE)

    @staticmethod
    def from_arcs(raw: Iterable[tuple[float, float]]) -> "IntervalSet":
        """Normalise raw (start, end) pairs into a canonical IntervalSet.

        Each raw arc runs counterclockwise from start to end; arcs that
        cross the zero point are allowed.  Raises ValidationError on
        overlapping arcs or coincident endpoints.  An empty iterable
        yields the empty set.
        """
        items = []
        for start, end in raw:
            s = wrap_angle(start)
            length = wrap_angle(end - start)
            if length <= DELTA_MIN:
                raise ValidationError(
                    f"arc ({start}, {end}) has length {length:.3e}; "
                    "open arcs need distinct endpoints"
                )
            items.append((s, length))
        if not items:
            return IntervalSet.empty()
        items.sort()
        # disjointness: each arc must end strictly before the next starts,
        # cyclically.
        k = len(items)
        for i in range(k):
            s_i, l_i = items[i]
            s_next = items[(i + 1) % k][0] + (TWO_PI if i == k - 1 else 0.0)
            gap = s_next - (s_i + l_i)
            if gap <= DELTA_MIN:
                raise ValidationError(
                    f"arcs overlap or share an endpoint near angle "
                    f"{wrap_angle(s_i + l_i):.6f} (gap {gap:.3e})"
                )
        return IntervalSet(IntervalStatus.ARCS, tuple(items))

    # -- queries -------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.status is IntervalStatus.EMPTY

    @property
    def is_full(self) -> bool:
        return self.status is IntervalStatus.FULL_CIRCLE

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    def total_length(self) -> float:
        if self.is_empty:
            return 0.0
        if self.is_full:
            return TWO_PI
        return sum(l for _, l in self.arcs)

    def contains(self, x: float) -> bool:
        """Membership in the open set (endpoints excluded)."""
        if self.is_empty:
            return False
        if self.is_full:
            return True
        xw = wrap_angle(x)
        for s, l in self.arcs:
            off = wrap_angle(xw - s)
            if 0.0 < off < l:
                return True
        return False

    def contains_all(self, xs: Sequence[float]) -> bool:
        return all(self.contains(x) for x in xs)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints in counterclockwise order with their roles.

        Returns (angles, is_start) where angles is sorted ascending in
        [0, 2*pi) and is_start marks arc-opening endpoints.  Raises on
        the absorbing states, which have no endpoints.
        """
        if not self.arcs:
            raise ValidationError("absorbing interval set has no endpoints")
        pts = []
        for s, l in self.arcs:
            pts.append((s, True))
            pts.append((wrap_angle(s + l), False))
        pts.sort()
        ang = np.array([p[0] for p in pts])
        role = np.array([p[1] for p in pts])
        return ang, role


def interval_set_from_boundaries(angles: np.ndarray, is_start: np.ndarray) -> IntervalSet:
    """Rebuild an IntervalSet from sorted boundary angles and roles."""
    if len(angles) == 0:
        raise ValidationError("cannot infer absorbing state from zero endpoints")
    arcs = []
    idx = np.nonzero(is_start)[0]
    n = len(angles)
    for i in idx:
        start = angles[i]
        end = angles[(i + 1) % n]
        arcs.append((start, end))
    return IntervalSet.from_arcs(arcs)


@dataclass(frozen=True)
class Partition:
    """Partition of {0..n-1} with minimal-element canonical labels.

    ``block_min[i]`` is the smallest index in the block containing i, so
    equality of partitions is plain tuple equality.
    """

    n: int
    block_min: tuple[int, ...]

    def __post_init__(self) -> None:
        bm = self.block_min
        if len(bm) != self.n:
            raise ValidationError("block_min length must equal n")
        for i, g in enumerate(bm):
            if not (0 <= g <= i):
                raise ValidationError(f"label {g} at index {i} is not minimal-element")
            if bm[g] != g:
                raise ValidationError(f"label array is not idempotent at index {i}")

    @staticmethod
    def singletons(n: int) -> "Partition":
        if n < 1:
            raise ValidationError("partition needs at least one element")
        return Partition(n, tuple(range(n)))

    @staticmethod
    def from_blocks(n: int, blocks: Iterable[Iterable[int]]) -> "Partition":
        bm = [-1] * n
        for block in blocks:
            items = sorted(block)
            for i in items:
                if not 0 <= i < n or bm[i] != -1:
                    raise ValidationError("blocks must partition 0..n-1")
                bm[i] = items[0]
        if any(g == -1 for g in bm):
            raise ValidationError("blocks must cover 0..n-1")
        return Partition(n, tuple(bm))

    @property
    def block_count(self) -> int:
        return sum(1 for i, g in enumerate(self.block_min) if g == i)

    def representatives(self) -> list[int]:
        return [i for i, g in enumerate(self.block_min) if g == i]

    def blocks(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i, g in enumerate(self.block_min):
            out.setdefault(g, []).append(i)
        return [out[g] for g in sorted(out)]

    def block_sizes(self) -> np.ndarray:
        sizes: dict[int, int] = {}
        for g in self.block_min:
            sizes[g] = sizes.get(g, 0) + 1
        return np.array(sorted(sizes.values(), reverse=True), dtype=np.int64)

    def frequencies(self) -> np.ndarray:
        """Block frequencies (block size / n), sorted descending."""
        return self.block_sizes() / self.n

    def same_block(self, i: int, j: int) -> bool:
        self._check_index(i)
        self._check_index(j)
        return self.block_min[i] == self.block_min[j]

    def merge(self, i: int, j: int) -> "Partition":
        """Unite the blocks of i and j; all other blocks untouched.

        The result stays in minimal-element canonical form; merging two
        indices already in the same block returns self.
        """
        self._check_index(i)
        self._check_index(j)
        gi, gj = self.block_min[i], self.block_min[j]
        if gi == gj:
            return self
        keep, absorb = (gi, gj) if gi < gj else (gj, gi)
        bm = tuple(keep if g == absorb else g for g in self.block_min)
        return Partition(self.n, bm)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} out of range for n={self.n}")


def merge_blocks(p: Partition, i: int, j: int) -> Partition:
    """Functional alias for :meth:`Partition.merge`."""
    return p.merge(i, j)


@dataclass(frozen=True)
class SeedSpec:
    """Counter-based random stream specification.

    Distinct (master_seed, stream_index) pairs give statistically
    independent Philox streams; the same pair reproduces the stream
    bit-identically.  ``substream`` carves independent blocks out of a
    stream via the 256-bit Philox counter, so one replication can use
    several mutually independent generators without coordination.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self, tag: int = 0) -> np.random.Generator:
        key = np.array(
            [self.master_seed & 0xFFFFFFFFFFFFFFFF, self.stream_index & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        counter = np.array([0, 0, 0, tag & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def stream(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, index)
