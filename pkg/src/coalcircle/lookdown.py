"""Poisson look-down particle system on the circle.

A Poisson(lambda) number of particles carry (position, level, type):
positions are independent uniform points moving as unit-rate Brownian
motions, levels are i.i.d. uniform on [0, lambda], and types propagate
at collisions by the look-down rule: every participant adopts the type
of the lowest-level participant, after which the levels within the
collision class are uniformly permuted (the permutation exchanges which
path carries which level and leaves every type unchanged, since the
participants already share one type).  Particles never die; the
coalescing structure is visible only through the types.

Because a type can travel only from a lower level to a higher one, the
joint type evolution of the k lowest-level particles is closed under
their own motions.  In particular the n lowest-level particles carry n
distinct diffuse labels at time t exactly when no two of their paths
have met, which is what dissimilarity_estimate exploits: it simulates
just those n walkers per replication instead of the full cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coalcircle.core import TWO_PI, IntervalSet, SeedSpec, ValidationError, wrap_angles
from coalcircle.continuum import batch_coalesce, batch_pair_meeting_times


@dataclass(frozen=True)
class Diffuse:
    """Types are fresh 64-bit labels: a stand-in for a diffuse type law.

    Label collisions occur with probability at most pairs * 2^-64 and
    are treated as impossible.
    """


@dataclass(frozen=True)
class TwoType:
    """Type 1 iff the initial position lies in the given interval set."""

    region: IntervalSet


@dataclass(frozen=True)
class LookdownState:
    positions: np.ndarray
    levels: np.ndarray
    types: np.ndarray
    lam: float
    time: float
    mode: object

    @property
    def particle_count(self) -> int:
        return len(self.positions)

    def lowest_level_index(self) -> int:
        return int(np.argmin(self.levels))


def init_lookdown(lam: float, mode, seed: SeedSpec) -> LookdownState:
    """Poisson(lambda) particles, uniform positions, uniform levels on
    [0, lambda], types assigned by the mode.

    Draws from counter block 21 of the seed's stream, so the same
    SeedSpec can also drive run_lookdown (block 23) independently.
    """
    if lam <= 0.0:
        raise ValidationError("lambda must be positive")
    rng = seed.generator(tag=21)
    count = int(rng.poisson(lam))
    positions = rng.uniform(0.0, TWO_PI, count)
    levels = rng.uniform(0.0, lam, count)
    if isinstance(mode, Diffuse):
        types = rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)
    elif isinstance(mode, TwoType):
        types = np.fromiter(
            (1 if mode.region.contains(x) else 0 for x in positions),
            dtype=np.int64,
            count=count,
        )
    else:
        raise ValidationError(f"unknown type mode {mode!r}")
    return LookdownState(positions, levels, types, lam, 0.0, mode)


def _lookdown_step(pos, levels, types, dt, rng):
    """One step: Brownian moves, neighbour-gap collision coins, look-down
    type propagation, and level permutation within each collision class."""
    k = len(pos)
    inc = rng.standard_normal(k) * math.sqrt(dt)
    if k >= 2:
        order = np.argsort(pos, kind="stable")
        ps = pos[order]
        g_old = np.empty(k)
        g_old[:-1] = np.diff(ps)
        g_old[-1] = ps[0] + TWO_PI - ps[-1]
        inc_s = inc[order]
        d_inc = np.empty(k)
        d_inc[:-1] = inc_s[1:] - inc_s[:-1]
        d_inc[-1] = inc_s[0] - inc_s[-1]
        g_new = g_old + d_inc
        u = rng.random(k)
        with np.errstate(over="ignore"):
            fire = (g_new <= 0.0) | (u < np.exp(-np.maximum(g_old, 0.0) * g_new / dt))
        if fire.any():
            for members in _clusters(fire, order, k):
                lowest = members[np.argmin(levels[members])]
                types[members] = types[lowest]
                perm = rng.permutation(len(members))
                levels[members] = levels[members][perm]
    return wrap_angles(pos + inc), levels, types


def _clusters(fire, order, k):
    """Member index arrays of each collision class (transitive runs of
    fired neighbour gaps, cyclically)."""
    if fire.all():
        yield order
        return
    r = int(np.nonzero(~fire)[0][0])
    run = [order[(r + 1) % k]]
    for jj in range(k):
        j = (r + 1 + jj) % k
        if fire[j]:
            run.append(order[(j + 1) % k])
        else:
            if len(run) > 1:
                yield np.array(run)
            run = [order[(j + 1) % k]]


def advance_lookdown(state: LookdownState, dt: float, seed: SeedSpec) -> LookdownState:
    """One collision-resolved step of size dt."""
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    rng = seed.generator(tag=22)
    pos, levels, types = _lookdown_step(
        state.positions.copy(), state.levels.copy(), state.types.copy(), dt, rng
    )
    return LookdownState(pos, levels, types, state.lam, state.time + dt, state.mode)


def run_lookdown(state: LookdownState, t: float, dt: float, seed: SeedSpec) -> LookdownState:
    """Advance by repeated steps of at most dt until time t has elapsed."""
    if t < 0.0:
        raise ValidationError("t must be >= 0")
    rng = seed.generator(tag=23)
    pos = state.positions.copy()
    levels = state.levels.copy()
    types = state.types.copy()
    elapsed = 0.0
    while elapsed < t and len(pos) > 0:
        step = min(dt, t - elapsed)
        pos, levels, types = _lookdown_step(pos, levels, types, step, rng)
        elapsed += step
    return LookdownState(pos, levels, types, state.lam, state.time + t, state.mode)


def type_count(state: LookdownState) -> int:
    """Number of distinct type labels currently carried."""
    return len(np.unique(state.types))


def two_type_mass(state: LookdownState) -> float:
    """Fraction of particles carrying type 1 (TwoType mode only)."""
    if not isinstance(state.mode, TwoType):
        raise ValidationError("two_type_mass requires TwoType mode")
    if state.particle_count == 0:
        return 0.0
    return float(np.mean(state.types == 1))


def type_run_count(state: LookdownState) -> int:
    """Number of contiguous circular runs of type-1 particles."""
    if state.particle_count == 0:
        return 0
    order = np.argsort(state.positions, kind="stable")
    ones = (state.types[order] == 1).astype(np.int8)
    if not ones.any():
        return 0
    if ones.all():
        return 1
    switches = int(np.sum(ones != np.roll(ones, 1)))
    return switches // 2


@dataclass(frozen=True)
class DissimilarityEstimate:
    order: int
    value: float
    standard_error: float
    reps: int
    redraws: int


def dissimilarity_indicators(
    lam: float, t: float, n: int, reps: int, dt: float, seed: SeedSpec
) -> tuple[np.ndarray, int]:
    """Per-replication indicators of {n lowest-level particles carry n
    distinct diffuse labels at time t}, plus the redraw count.

    Types flow only downward in level, so the n lowest-level particles
    keep distinct labels exactly until two of their paths first meet;
    each replication therefore reduces to an n-walker no-meeting
    indicator with uniform starts.  Replications whose Poisson particle
    count falls below n are redrawn.
    """
    if n < 2:
        raise ValidationError("dissimilarity order must be >= 2")
    if lam <= 0.0 or reps < 1:
        raise ValidationError("need lambda > 0 and reps >= 1")
    rng_counts = seed.generator(tag=11)
    redraws = 0
    counts = rng_counts.poisson(lam, size=reps)
    while True:
        short = counts < n
        bad = int(short.sum())
        if bad == 0:
            break
        redraws += bad
        counts[short] = rng_counts.poisson(lam, size=bad)

    if t == 0.0:
        return np.ones(reps), redraws
    rng = seed.generator(tag=12)
    starts = rng.uniform(0.0, TWO_PI, (reps, n))
    if n == 2:
        times = batch_pair_meeting_times(starts, t, dt, rng)
        return np.isinf(times).astype(float), redraws
    _, _, alive = batch_coalesce(starts, t, dt, rng)
    return (alive.sum(axis=1) == n).astype(float), redraws


def dissimilarity_estimate(
    lam: float, t: float, n: int, reps: int, dt: float, seed: SeedSpec
) -> DissimilarityEstimate:
    """Aggregate of :func:`dissimilarity_indicators` with a binomial SE."""
    ind, redraws = dissimilarity_indicators(lam, t, n, reps, dt, seed)
    value = float(ind.mean())
    se = math.sqrt(max(value * (1.0 - value), 0.0) / reps)
    return DissimilarityEstimate(n, value, se, reps, redraws)


def lookdown_summary_rows(state: LookdownState, rep: int) -> str:
    """One CSV row: rep, t, particle_count, type_count, two_type_mass."""
    mass = two_type_mass(state) if isinstance(state.mode, TwoType) else float("nan")
    return f"{rep},{state.time!r},{state.particle_count},{type_count(state)},{mass!r}"
