"""Fractal statistics of the ultrametric tree of pairwise coalescence times.

Pairwise merge times of a coalescing system form an ultrametric; the
induced dendrogram supports covering numbers (= block counts at the
radius time), log-log dimension fits, Riesz-type energies for
non-increasing gauges, and a capacity estimate that can be compared,
gauge by gauge, against the middle-1/2 Cantor set at a matching
refinement level.

Capacity convention.  The energy sum_{i!=j} m_i m_j f(rho_ij) excludes
self-pairs, so its literal minimum over the probability simplex is 0 at
any vertex; that degenerate minimiser corresponds to a point mass,
which has infinite energy for any gauge with f(0) = infinity.  The
meaningful finite-sample functional is therefore the energy of the
equilibrium (potential-equalising) measure: the unique measure whose
potential sum_j m_j f(rho_ij) is constant across its support.  For a
symmetric tree this is the natural uniform measure, it reproduces the
two-point value 2 r^beta and the gauge-free value (1 - sum m_i^2)^(-1),
and it is computed exactly by an active-set linear solve.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from coalcircle.core import ValidationError
from coalcircle.continuum import BlockTrace

ULTRAMETRIC_TOL = 1e-9


class UltrametricViolation(ValidationError):
    def __init__(self, i: int, j: int, k: int, excess: float):
        self.witness = (i, j, k)
        self.excess = excess
        super().__init__(
            f"strong triangle inequality fails for triple {self.witness} "
            f"by {excess:.3e}"
        )


@dataclass(frozen=True)
class UltrametricMatrix:
    """Symmetric, zero-diagonal matrix of pairwise coalescence times.

    Entries equal to censor_time mean "not yet coalesced by the horizon".
    """

    dist: np.ndarray
    censor_time: float | None = None

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError("distance matrix must be square")
        if not np.allclose(d, d.T, atol=0.0, rtol=0.0, equal_nan=False):
            raise ValidationError("distance matrix must be exactly symmetric")
        if np.any(np.diagonal(d) != 0.0):
            raise ValidationError("diagonal must be zero")
        if np.any(d < 0.0):
            raise ValidationError("distances must be non-negative")
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def validate(self, tol: float = ULTRAMETRIC_TOL) -> None:
        """Raise UltrametricViolation with a witness triple if the strong
        triangle inequality fails beyond tol."""
        d = self.dist
        for k in range(self.n):
            ceil = np.maximum(d[:, k : k + 1], d[k : k + 1, :])
            excess = d - ceil
            if np.any(excess > tol):
                i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
                raise UltrametricViolation(int(i), int(j), k, float(excess[i, j]))


@dataclass(frozen=True)
class Dendrogram:
    """Merge history of a hierarchical clustering.

    merges holds (time, keep, absorbed) triples sorted by time, where
    keep/absorbed are the minimal-element representatives of the merging
    clusters; a fully coalesced tree has exactly n - 1 merges.
    """

    n: int
    merges: tuple

    def __post_init__(self):
        times = [m[0] for m in self.merges]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise ValidationError("merge times must be non-decreasing")
        if len(self.merges) > self.n - 1:
            raise ValidationError("too many merges for the leaf count")

    @property
    def merge_times(self) -> np.ndarray:
        return np.array([m[0] for m in self.merges], dtype=float)

    @property
    def fully_coalesced(self) -> bool:
        return len(self.merges) == self.n - 1

    def cophenetic_matrix(self) -> np.ndarray:
        """Pairwise merge-time matrix; inverse of build_dendrogram for
        valid ultrametrics.  Unmerged pairs get +inf."""
        d = np.full((self.n, self.n), np.inf)
        np.fill_diagonal(d, 0.0)
        members: dict[int, list[int]] = {i: [i] for i in range(self.n)}
        for t, keep, lost in self.merges:
            a, b = members[keep], members[lost]
            ia = np.asarray(a)[:, None]
            ib = np.asarray(b)[None, :]
            d[ia, ib] = t
            d[ib.T, ia.T] = t
            members[keep] = a + b
            del members[lost]
        return d


def dendrogram_from_trace(trace: BlockTrace) -> Dendrogram:
    """Exact dendrogram of a simulated block history (no matrix needed)."""
    return Dendrogram(trace.n, tuple(trace.merges))


def build_dendrogram(m: UltrametricMatrix, tol: float = ULTRAMETRIC_TOL) -> Dendrogram:
    """Single-linkage merge history of a valid ultrametric matrix.

    Validates the strong triangle inequality first (witness triple on
    failure).  For an ultrametric the single-linkage dendrogram
    round-trips: its cophenetic matrix reproduces the input exactly.
    """
    m.validate(tol)
    n = m.n
    if n == 1:
        return Dendrogram(1, ())
    d = m.dist
    # Prim-style minimum spanning tree on the complete graph
    in_tree = np.zeros(n, dtype=bool)
    best = d[0].copy()
    best_from = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        v = int(np.argmin(best))
        edges.append((float(best[v]), int(best_from[v]), v))
        in_tree[v] = True
        closer = d[v] < best
        closer &= ~in_tree
        best[closer] = d[v][closer]
        best_from[closer] = v
        best[v] = np.inf
    edges.sort()
    rep = np.arange(n, dtype=np.int64)
    merges = []
    for w, a, b in edges:
        ra, rb = _find(rep, a), _find(rep, b)
        keep, lost = (ra, rb) if ra < rb else (rb, ra)
        merges.append((w, int(keep), int(lost)))
        rep[lost] = keep
    return Dendrogram(n, tuple(merges))


def _find(rep: np.ndarray, i: int) -> int:
    while rep[i] != i:
        rep[i] = rep[rep[i]]
        i = int(rep[i])
    return i


def covering_number(d: Dendrogram, eps: float) -> int:
    """Number of closed balls of radius eps needed to cover the leaves:
    the block count once every merge at time <= eps is applied."""
    if eps <= 0.0:
        raise ValidationError("eps must be positive")
    return d.n - bisect_right(list(d.merge_times), eps)


@dataclass(frozen=True)
class DimensionFit:
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    intercept: float
    r_squared: float
    eps: np.ndarray
    counts: np.ndarray


def dimension_estimate(d: Dendrogram, eps_grid) -> DimensionFit:
    """Least-squares slope of log covering_number against log(1/eps).

    The coalescent tree has covering numbers growing like eps^(-1/2), so
    the expected slope is 1/2.  The 95% band comes from the standard OLS
    slope error.
    """
    eps = np.asarray(eps_grid, dtype=float)
    if len(eps) < 5:
        raise ValidationError("need at least 5 grid points")
    if np.any(eps <= 0.0):
        raise ValidationError("eps grid must be positive")
    eps = np.sort(eps)
    counts = np.array([covering_number(d, e) for e in eps], dtype=float)
    if np.any(counts <= 0.0):
        raise ValidationError("covering numbers must be positive")
    x = np.log(1.0 / eps)
    y = np.log(counts)
    xbar, ybar = x.mean(), y.mean()
    sxx = ((x - xbar) ** 2).sum()
    if sxx == 0.0:
        raise ValidationError("degenerate eps grid")
    slope = ((x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    dof = max(len(x) - 2, 1)
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    ss_tot = ((y - ybar) ** 2).sum()
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    half = 1.959963984540054 * stderr
    return DimensionFit(
        slope=float(slope),
        stderr=float(stderr),
        ci_low=float(slope - half),
        ci_high=float(slope + half),
        intercept=float(intercept),
        r_squared=float(r2),
        eps=eps,
        counts=counts.astype(np.int64),
    )


# ---------------------------------------------------------------------------
# gauges, energy, capacity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerGauge:
    """Gauge r -> r^(-beta); non-increasing, infinite at zero for beta > 0."""

    beta: float

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValidationError("beta must be >= 0")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return r**-self.beta


def _gauge_matrix(dist: np.ndarray, gauge) -> np.ndarray:
    g = np.asarray(gauge(np.where(dist > 0.0, dist, 1.0)), dtype=float)
    out = np.where(dist > 0.0, g, 0.0)
    np.fill_diagonal(out, 0.0)
    return out


def tree_energy(d: Dendrogram, masses, gauge) -> float:
    """Energy sum_{i != j} m_i m_j gauge(rho(i, j)) of a mass vector.

    Self-pairs are excluded (the discrete stand-in for a diffuse
    measure); masses must be a probability vector over the leaves.
    """
    m = np.asarray(masses, dtype=float)
    if m.shape != (d.n,):
        raise ValidationError("mass vector length must equal the leaf count")
    if np.any(m < 0.0) or abs(m.sum() - 1.0) > 1e-9:
        raise ValidationError("masses must be non-negative and sum to 1")
    G = _gauge_matrix(d.cophenetic_matrix(), gauge)
    return float(m @ G @ m)


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    energy: float
    masses: np.ndarray
    support_size: int
    potential_residual: float


class CapacityError(RuntimeError):
    """Signals an ill-conditioned or non-convergent capacity solve."""


def equilibrium_capacity(G: np.ndarray, residual_tol: float = 1e-8) -> CapacityResult:
    """Capacity 1/E(m*) of the potential-equalising measure for kernel G.

    Solves G[S,S] m = 1 on a shrinking support S (dropping negative-mass
    atoms) until the solution is a probability vector after scaling; the
    normalised measure has constant potential c on S and energy c, so
    the capacity is the scaled mass total 1' G[S,S]^{-1} 1.
    """
    n = G.shape[0]
    if n < 2:
        return CapacityResult(0.0, math.inf, np.ones(max(n, 1)), n, 0.0)
    support = np.arange(n)
    for _ in range(n):
        A = G[np.ix_(support, support)]
        try:
            raw = np.linalg.solve(A, np.ones(len(support)))
        except np.linalg.LinAlgError as exc:
            raise CapacityError(f"singular equilibrium system: {exc}") from exc
        if raw.sum() <= 0.0:
            raise CapacityError("equilibrium total mass is not positive")
        if np.all(raw >= -1e-12):
            raw = np.maximum(raw, 0.0)
            m = np.zeros(n)
            m[support] = raw / raw.sum()
            energy = 1.0 / raw.sum()
            pot = G @ m
            resid = float(np.max(np.abs(pot[support] - energy)))
            scale = max(abs(energy), 1.0)
            if resid > residual_tol * scale * 1e4:
                raise CapacityError(
                    f"equilibrium potential residual {resid:.3e} too large"
                )
            return CapacityResult(
                capacity=float(raw.sum()),
                energy=float(energy),
                masses=m,
                support_size=len(support),
                potential_residual=resid,
            )
        if len(support) == 2:
            raise CapacityError("support collapsed below two atoms")
        support = support[raw > raw.min()]
    raise CapacityError("active-set iteration exceeded its budget")


def capacity_estimate(d: Dendrogram, gauge) -> CapacityResult:
    """Capacity of the sampled tree in the given gauge.

    A single leaf has capacity 0 by the f(0) = infinity convention.
    """
    if d.n < 2:
        return CapacityResult(0.0, math.inf, np.ones(max(d.n, 1)), d.n, 0.0)
    G = _gauge_matrix(d.cophenetic_matrix(), gauge)
    return equilibrium_capacity(G)


def capacity_of_points(points: np.ndarray, gauge) -> CapacityResult:
    """Capacity of a finite point set on the line (Euclidean distances)."""
    xs = np.asarray(points, dtype=float)
    dist = np.abs(xs[:, None] - xs[None, :])
    G = _gauge_matrix(dist, gauge)
    return equilibrium_capacity(G)


@dataclass(frozen=True)
class CantorComparison:
    beta: float
    tree_capacity: float
    cantor_capacity: float

    @property
    def ratio(self) -> float:
        return self.tree_capacity / self.cantor_capacity


def compare_to_cantor(d: Dendrogram, betas, level: int | None = None) -> list[CantorComparison]:
    """Tree capacity against the level-k Cantor reference, gauge by gauge.

    The Cantor side applies the same equilibrium solve to the natural
    midpoint atoms of the middle-1/2 Cantor set; the level defaults to
    log2 of the leaf count so both objects are refined comparably.
    """
    from coalcircle.formulas import cantor_atoms

    if level is None:
        level = max(1, round(math.log2(max(d.n, 2))))
    atoms = cantor_atoms(level)
    rows = []
    for beta in betas:
        gauge = PowerGauge(beta)
        cap_tree = capacity_estimate(d, gauge).capacity
        cap_cantor = capacity_of_points(atoms, gauge).capacity
        rows.append(CantorComparison(beta, cap_tree, cap_cantor))
    return rows


def ratio_spread(rows: list[CantorComparison]) -> float:
    ratios = [r.ratio for r in rows]
    return max(ratios) / min(ratios)


# ---------------------------------------------------------------------------
# tau matrix CSV interchange
# ---------------------------------------------------------------------------


def read_tau_csv(path: str) -> UltrametricMatrix:
    """Read the dense lower-triangular CSV written by the simulators."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValidationError("tau CSV must start with a header comment")
        fields = dict(tok.split("=") for tok in header.lstrip("# ").split() if "=" in tok)
        n = int(fields["n"])
        censor = float(fields["censor_time"])
        d = np.zeros((n, n))
        for i in range(1, n):
            row = fh.readline().strip()
            vals = [float(v) for v in row.split(",")] if row else []
            if len(vals) != i:
                raise ValidationError(f"tau CSV row {i} has {len(vals)} entries, expected {i}")
            d[i, :i] = vals
            d[:i, i] = vals
    return UltrametricMatrix(d, censor_time=censor)


def synthetic_binary_tree(levels: int, top_time: float = 0.25, shrink: float = 0.25) -> Dendrogram:
    """Perfect binary dendrogram: level-l clusters merge at top_time*shrink^(l-1).

    With the default geometry (merge times 4^-l) the covering slope is
    exactly 1/2, mirroring the Cantor-set refinement.
    """
    if levels < 1:
        raise ValidationError("levels must be >= 1")
    n = 1 << levels
    merges = []
    for lv in range(levels, 0, -1):
        t = top_time * shrink ** (lv - 1)
        block = 1 << (levels - lv + 1)
        for start in range(0, n, block):
            merges.append((t, start, start + block // 2))
    merges.sort(key=lambda m: m[0])
    return Dendrogram(n, tuple(merges))
