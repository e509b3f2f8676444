"""Registered Monte Carlo experiment kernels.

Each kernel consumes one seeded chunk of replications and returns
per-replication value arrays; the harness aggregates means and standard
errors and guarantees worker-count independence.  Vectorised kernels
draw all chunk randomness from the chunk's SeedSpec streams.
"""

from __future__ import annotations

import numpy as np

from coalcircle.core import TWO_PI, IntervalSet, SeedSpec
from coalcircle.continuum import (
    annihilating_contains_indicators,
    annihilating_lengths,
    batch_annihilate,
    batch_pair_meeting_times,
    coalescing_in_set_indicators,
    simulate_block_history,
)
from coalcircle.harness import register
from coalcircle.lattice import LatticeConfig, simulate_coalescing_rw, simulate_voter
from coalcircle.lookdown import (
    Diffuse,
    TwoType,
    init_lookdown,
    run_lookdown,
    two_type_mass,
    type_count,
)


def _key(prefix: str, t: float) -> str:
    return f"{prefix}@{t:g}"


@register("pair_meeting")
def pair_meeting(seed: SeedSpec, reps: int, ts=(1.0,), horizon=None, dt=1e-4):
    """Meeting indicators of two uniform particles at each time in ts."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    horizon = float(ts.max() if horizon is None else horizon)
    rng = seed.generator()
    starts = rng.uniform(0.0, TWO_PI, (reps, 2))
    ptime = batch_pair_meeting_times(starts, horizon, dt, rng)
    out = {_key("met", t): (ptime <= t).astype(float) for t in ts}
    out["meeting_time_censored"] = np.minimum(ptime, horizon)
    return out


@register("duality_circle")
def duality_circle(seed: SeedSpec, reps: int, a=(), arcs=(), t=0.5, dt=1e-4):
    """Indicators for both sides of the circle duality identity."""
    b = IntervalSet.from_arcs(arcs)
    a = np.asarray(a, dtype=float)
    lhs = coalescing_in_set_indicators(a, b, t, dt, seed.generator(tag=1), reps)
    rhs = annihilating_contains_indicators(a, b, t, dt, seed.generator(tag=2), reps)
    return {"lhs": lhs, "rhs": rhs}


@register("block_counts")
def block_counts(seed: SeedSpec, reps: int, n=1024, ts=(1.0,), dt=1e-4, refine_early=True):
    """Block count N(t) of n uniform coalescing particles at grid times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    horizon = float(ts.max())
    rng = seed.generator()
    counts = np.zeros((reps, len(ts)))
    for r in range(reps):
        sub = SeedSpec(int(rng.integers(0, 2**62)), r)
        trace = simulate_block_history(
            n, horizon, ts, dt, sub, refine_early=refine_early, record_merges=False
        )
        counts[r] = trace.counts
    return {_key("N", t): counts[:, i] for i, t in enumerate(ts)}


@register("sum_squared_freqs")
def sum_squared_freqs(seed: SeedSpec, reps: int, n=2000, ts=(0.01,), dt=1e-4):
    """Sum of squared block frequencies at grid times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    horizon = float(ts.max())
    rng = seed.generator()
    out = np.zeros((reps, len(ts)))
    for r in range(reps):
        sub = SeedSpec(int(rng.integers(0, 2**62)), r)
        trace = simulate_block_history(n, horizon, ts, dt, sub, record_merges=False)
        for i in range(len(ts)):
            f = trace.frequencies(i)
            out[r, i] = float(f @ f)
    return {_key("ssq", t): out[:, i] for i, t in enumerate(ts)}


@register("annihilating_exit")
def annihilating_exit(seed: SeedSpec, reps: int, length=np.pi, t=1.0, dt=1e-4):
    """Absorption indicators and normalised length for a single arc."""
    b = IntervalSet.from_arcs([(0.0, float(length))])
    rng = seed.generator()
    status, ang, role, alive = batch_annihilate(b, t, dt, rng, reps)
    lens = annihilating_lengths(status, ang, role, alive)
    return {
        "full": (status == 2).astype(float),
        "empty": (status == 1).astype(float),
        "survive": (status == 0).astype(float),
        "norm_length": lens / TWO_PI,
    }


@register("dissimilarity")
def dissimilarity(seed: SeedSpec, reps: int, lam=200.0, t=1.0, n=2, dt=1e-4):
    """Distinct-label indicators for the n lowest-level particles."""
    from coalcircle.lookdown import dissimilarity_indicators

    ind, redraws = dissimilarity_indicators(lam, t, n, reps, dt, seed)
    return {"distinct": ind, "redraws": np.full(reps, redraws / reps)}


@register("lookdown_cloud")
def lookdown_cloud(seed: SeedSpec, reps: int, lam=200.0, t=1.0, dt=1e-4, arcs=None):
    """Full look-down cloud summaries: particle count, type count, and
    (in two-type mode) the type-1 mass fraction."""
    mode = Diffuse() if arcs is None else TwoType(IntervalSet.from_arcs(arcs))
    rng = seed.generator()
    pc = np.zeros(reps)
    tc = np.zeros(reps)
    mass = np.full(reps, np.nan)
    for r in range(reps):
        sub = SeedSpec(int(rng.integers(0, 2**62)), r)
        state = init_lookdown(lam, mode, sub)
        state = run_lookdown(state, t, dt, sub)
        pc[r] = state.particle_count
        tc[r] = type_count(state)
        if arcs is not None:
            mass[r] = two_type_mass(state)
    out = {"particle_count": pc, "type_count": tc}
    if arcs is not None:
        out["two_type_mass"] = mass
    return out


@register("lattice_coalescing_size")
def lattice_coalescing_size(seed: SeedSpec, reps: int, c=0b111, n_sites=3, lam=1.0, t=1.0):
    cfg = LatticeConfig(n_sites, lam)
    rng = seed.generator()
    out = np.zeros(reps)
    for r in range(reps):
        sub = SeedSpec(int(rng.integers(0, 2**62)), r)
        out[r] = int(simulate_coalescing_rw(int(c), cfg, t, sub)).bit_count()
    return {"size": out}


@register("lattice_voter_site")
def lattice_voter_site(seed: SeedSpec, reps: int, d=0b0011, n_sites=4, lam=1.0, t=0.5, site=0):
    cfg = LatticeConfig(n_sites, lam)
    rng = seed.generator()
    out = np.zeros(reps)
    for r in range(reps):
        sub = SeedSpec(int(rng.integers(0, 2**62)), r)
        out[r] = simulate_voter(int(d), cfg, t, sub) >> site & 1
    return {"opinion": out}
