"""Closed-form reference series used as oracles by the simulators.

Everything here is a deterministic function evaluated to a stated tail
bound: the Jacobi theta function, the expected number of surviving
coalescing particles, the meeting-time law of two uniform Brownian
particles on the circle, absorption laws of Brownian motion on
[0, 2*pi] with variance rate 2, and Riesz energies of the middle-1/2
Cantor set at finite level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coalcircle.core import TWO_PI

PI = math.pi


@dataclass(frozen=True)
class SeriesTolerance:
    """Series are truncated once the analytic tail bound drops below this."""

    tail_bound: float = 1e-15


DEFAULT_TOL = SeriesTolerance()


def jacobi_theta(u: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Jacobi theta function: sum over all integers n of exp(-pi n^2 u).

    Requires u > 0.  For u < 1 the functional equation
    theta(u) = u^(-1/2) theta(1/u) is applied first, so the direct series
    always runs in its fast-converging regime; the tail after N terms is
    bounded by 2 exp(-pi N^2 u) / (1 - exp(-2 pi N u)).
    """
    if u <= 0.0:
        raise ValueError(f"theta requires u > 0, got {u}")
    if u < 1.0:
        return jacobi_theta(1.0 / u, tol) / math.sqrt(u)
    total = 1.0
    n = 1
    while True:
        term = 2.0 * math.exp(-PI * n * n * u)
        total += term
        # geometric-domination tail bound for the remaining terms
        tail = 2.0 * math.exp(-PI * (n + 1) ** 2 * u) / -math.expm1(-2.0 * PI * (n + 1) * u)
        if tail < tol.tail_bound:
            return total
        n += 1


def expected_block_count(t: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Expected number of surviving particles at time t > 0.

    Evaluates 1 + 2 * sum_{n>=1} exp(-(n/2)^2 t), which also equals
    jacobi_theta(t / (4 pi)); both routes are kept as independent code
    paths so they can cross-check each other.  Diverges as 2 sqrt(pi/t)
    for small t and tends to 1 as t -> infinity.
    """
    if t <= 0.0:
        raise ValueError(f"expected_block_count requires t > 0, got {t}")
    if t < 1e-6:
        # direct summation would need ~10^3 or more terms; the theta
        # route switches to the functional equation automatically.
        return jacobi_theta(t / (4.0 * PI), tol)
    total = 1.0
    n = 1
    while True:
        term = 2.0 * math.exp(-0.25 * n * n * t)
        total += term
        tail = 2.0 * math.exp(-0.25 * (n + 1) ** 2 * t) / -math.expm1(-0.5 * (n + 1) * t)
        if tail < tol.tail_bound:
            return total
        n += 1


def pair_meeting_cdf(t, tol: SeriesTolerance = DEFAULT_TOL):
    """P{two independent uniform Brownian particles on the circle meet by t}.

    Series: (8/pi^2) sum_{n>=1} (2n-1)^(-2) (1 - exp(-((2n-1)/2)^2 t)),
    evaluated through its complement so the truncation error decays
    exponentially.  Monotone non-decreasing from 0 with limit 1, and
    t^(-1/2) * value -> 2 / pi^(3/2) as t -> 0.  Accepts scalars or
    arrays.
    """
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0.0):
        raise ValueError("pair_meeting_cdf requires t >= 0")
    scalar = ts.ndim == 0
    ts = np.atleast_1d(ts)
    out = np.zeros_like(ts)
    pos = ts > 0.0
    if pos.any():
        tp = ts[pos]
        comp = np.zeros_like(tp)
        n = 1
        c = 8.0 / PI**2
        while True:
            m = 2 * n - 1
            comp += c / (m * m) * np.exp(-0.25 * m * m * tp)
            tmin = tp.min()
            m2 = 2 * n + 1
            # remaining terms are dominated by a geometric series in
            # exp(-(n+1) tmin) times the algebraic prefactor
            tail = c / (m2 * m2) * math.exp(-0.25 * m2 * m2 * tmin)
            tail /= -math.expm1(-(2 * n + 2) * tmin)
            if tail < tol.tail_bound:
                break
            n += 1
        out[pos] = 1.0 - comp
    np.clip(out, 0.0, 1.0, out=out)
    if scalar:
        return float(out[0])
    return out


def absorbed_survival(x: float, t: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Survival of variance-rate-2 Brownian motion on [0, 2*pi] from x.

    Probability that the motion started at x has hit neither 0 nor 2*pi
    by time t:  (4/pi) sum_{k>=0} (2k+1)^(-1) sin((2k+1)x/2)
    exp(-((2k+1)/2)^2 t).  Its uniform-x average equals
    1 - pair_meeting_cdf(t).
    """
    if not 0.0 <= x <= TWO_PI:
        raise ValueError(f"x must lie in [0, 2*pi], got {x}")
    if t < 0.0:
        raise ValueError("t must be non-negative")
    if t == 0.0:
        return 1.0 if 0.0 < x < TWO_PI else 0.0
    total = 0.0
    k = 0
    while True:
        m = 2 * k + 1
        total += 4.0 / (PI * m) * math.sin(0.5 * m * x) * math.exp(-0.25 * m * m * t)
        m2 = 2 * k + 3
        tail = 4.0 / (PI * m2) * math.exp(-0.25 * m2 * m2 * t) / -math.expm1(-(2 * k + 4) * t)
        if tail < tol.tail_bound:
            break
        k += 1
    return min(max(total, 0.0), 1.0)


def exit_high_cdf(x: float, t: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """P{variance-rate-2 BM on [0, 2*pi] from x is absorbed at 2*pi by t}.

    x/(2 pi) + (2/pi) sum_{n>=1} ((-1)^n / n) sin(n x / 2)
    exp(-(n/2)^2 t); converges to the harmonic limit x/(2 pi) as
    t -> infinity.  The absorption-at-0 law is exit_high_cdf(2*pi - x, t)
    by reflection.
    """
    if not 0.0 <= x <= TWO_PI:
        raise ValueError(f"x must lie in [0, 2*pi], got {x}")
    if t < 0.0:
        raise ValueError("t must be non-negative")
    if t == 0.0:
        return 1.0 if x == TWO_PI else 0.0
    total = x / TWO_PI
    n = 1
    while True:
        total += 2.0 / (PI * n) * ((-1) ** n) * math.sin(0.5 * n * x) * math.exp(-0.25 * n * n * t)
        m = n + 1
        tail = 2.0 / (PI * m) * math.exp(-0.25 * m * m * t) / -math.expm1(-0.25 * (2 * n + 3) * t)
        if tail < tol.tail_bound:
            break
        n += 1
    return min(max(total, 0.0), 1.0)


def absorbed_density(x: float, y, t: float, terms: int | None = None):
    """Transition density of the doubly absorbed motion, p_t(x, y).

    Eigenfunction series (1/pi) sum_{n>=1} sin(n x / 2) sin(n y / 2)
    exp(-(n/2)^2 t) for the variance-rate-2 motion on [0, 2*pi] killed
    at both ends.  Integrating over y in (0, 2*pi) recovers
    absorbed_survival(x, t).  Vectorised in y.
    """
    if t <= 0.0:
        raise ValueError("absorbed_density requires t > 0")
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    if terms is None:
        terms = max(8, int(12.0 / math.sqrt(t)) + 8)
    ns = np.arange(1, terms + 1, dtype=float)
    weights = np.sin(0.5 * ns * x) * np.exp(-0.25 * ns * ns * t)
    dens = (np.sin(0.5 * np.outer(ys, ns)) @ weights) / PI
    dens = np.maximum(dens, 0.0)
    if np.isscalar(y):
        return float(dens[0])
    return dens


def cantor_atoms(level: int) -> np.ndarray:
    """Midpoints of the level-k intervals of the middle-1/2 Cantor set.

    Level k has 2^k intervals of length 4^(-k); each carries mass 2^(-k)
    under the natural measure.  Keeps the outer quarters at every level,
    so the limit set has Hausdorff dimension ln 2 / ln 4 = 1/2.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    starts = np.array([0.0])
    length = 1.0
    for _ in range(level):
        starts = np.concatenate([starts, starts + 0.75 * length])
        length *= 0.25
    return np.sort(starts) + 0.5 * length


def cantor_energy(level: int, beta: float) -> float:
    """Riesz energy of the level-k natural measure of the Cantor set.

    sum_{i != j} m_i m_j |x_i - x_j|^(-beta) with 2^k atoms of mass
    2^(-k) at the interval midpoints.  Levels above 14 would push the
    finest spacing 4^(-k) under the double-precision floor for the
    energies of interest.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if level > 14:
        raise ValueError("level must be <= 14")
    if beta < 0.0:
        raise ValueError("beta must be >= 0")
    xs = cantor_atoms(level)
    diff = np.abs(xs[:, None] - xs[None, :])
    np.fill_diagonal(diff, 1.0)
    kern = diff**-beta
    np.fill_diagonal(kern, 0.0)
    m = 2.0 ** -level
    return float(m * m * kern.sum())
