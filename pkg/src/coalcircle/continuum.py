"""Simulators for interacting Brownian particles on the circle.

Two systems share one collision mechanism:

* a coalescing point set: particles move as independent unit-rate
  Brownian motions and merge on meeting, the surviving representative
  being the one with the smallest original index;
* an annihilating interval set: the boundaries of a finite union of
  open arcs move as independent unit-rate Brownian motions and vanish
  pairwise on meeting, with the empty set and the full circle absorbing.

Collisions are detected between cyclically adjacent particles only
(continuous circular paths cannot cross without meeting), using the
exact one-step law for the minimum of the gap process: the gap between
two unit-rate particles is a variance-rate-2 Brownian motion, so a gap
bridging g1 -> g2 over a step dt touches zero with probability
exp(-g1*g2/dt).  The only discretisation bias comes from multiple
events inside one step; simulate_block_history additionally refines
the step size in its early phase, where the merge rate scales like
t**-3/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from coalcircle.core import (
    TWO_PI,
    IntervalSet,
    Partition,
    SeedSpec,
    ValidationError,
    interval_set_from_boundaries,
    wrap_angles,
)

#: Expected merge events per step when the early-phase refinement is
#: active; the infinite system loses blocks at rate ~ sqrt(pi) t^-3/2.
_REFINE_EVENTS_PER_STEP = 0.2
_REFINE_COEFF = _REFINE_EVENTS_PER_STEP / math.sqrt(math.pi)
_FLOOR_FRAC = 0.04


def bridge_hit_prob(g1, g2, dt):
    """Probability that the gap between two unit-rate Brownian particles
    moving from g1 to g2 over dt touched zero in between.

    The gap is a variance-rate-2 Brownian motion; by the reflection
    principle the bridge-minimum law gives exp(-2*g1*g2/(sigma^2*dt))
    which reduces to exp(-g1*g2/dt) at sigma^2 = 2.  Scalar or array.
    """
    g1a, g2a, dta = np.asarray(g1, float), np.asarray(g2, float), np.asarray(dt, float)
    if np.any(g1a <= 0.0) or np.any(g2a <= 0.0) or np.any(dta <= 0.0):
        raise ValueError("bridge_hit_prob requires positive gaps and dt")
    out = np.exp(-g1a * g2a / dta)
    if np.isscalar(g1) and np.isscalar(g2) and np.isscalar(dt):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# coalescing point set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoalescingState:
    """Surviving representatives of a coalescing particle system.

    positions are sorted ascending; reps[k] is the original index whose
    block representative sits at positions[k]; partition tracks all
    original indices.  Block count always equals len(positions).
    """

    time: float
    positions: np.ndarray
    reps: np.ndarray
    partition: Partition
    origin: np.ndarray

    def __post_init__(self):
        if len(self.positions) != self.partition.block_count:
            raise ValidationError("positions must match partition block count")
        if len(self.positions) != len(self.reps):
            raise ValidationError("positions and reps must be parallel")

    @property
    def block_count(self) -> int:
        return len(self.positions)


def init_coalescing(points) -> CoalescingState:
    """State at time zero from explicit particle positions."""
    origin = wrap_angles(np.asarray(points, dtype=float).copy())
    if origin.ndim != 1 or len(origin) == 0:
        raise ValidationError("need a non-empty 1-d array of positions")
    order = np.argsort(origin, kind="stable")
    return CoalescingState(
        time=0.0,
        positions=origin[order],
        reps=order.astype(np.int64),
        partition=Partition.singletons(len(origin)),
        origin=origin,
    )


def _coalescing_step(pos, reps, bm, dt, rng, merge_sink=None, t_end=None):
    """One collision-resolved step shared by every coalescing simulator.

    pos: sorted survivor positions; reps: their original indices;
    bm: full block_min array (modified in place).  Returns updated
    (pos, reps) arrays; records (t_end, keep, absorbed) merge pairs in
    merge_sink when provided.
    """
    k = len(pos)
    inc = rng.standard_normal(k) * math.sqrt(dt)
    if k >= 2:
        g_old = np.empty(k)
        g_old[:-1] = np.diff(pos)
        g_old[-1] = pos[0] + TWO_PI - pos[-1]
        d_inc = np.empty(k)
        d_inc[:-1] = inc[1:] - inc[:-1]
        d_inc[-1] = inc[0] - inc[-1]
        g_new = g_old + d_inc
        u = rng.random(k)
        with np.errstate(over="ignore"):
            fire = (g_new <= 0.0) | (u < np.exp(-np.maximum(g_old, 0.0) * g_new / dt))
    else:
        fire = np.zeros(k, dtype=bool)
        u = None

    new_pos = pos + inc
    if fire.any():
        if fire.all():
            seg_of = np.zeros(k, dtype=np.int64)
            order_idx = np.arange(k)
            nseg = 1
        else:
            # rotate so the last gap is unfired; clusters then never wrap
            r = int(np.nonzero(~fire)[0][0])
            shift = r + 1
            order_idx = np.concatenate([np.arange(shift, k), np.arange(shift)])
            fire_rot = fire[order_idx]
            seg_of = np.concatenate([[0], np.cumsum(~fire_rot[:-1])])
            nseg = seg_of[-1] + 1
        reps_rot = reps[order_idx]
        seg_starts = np.searchsorted(seg_of, np.arange(nseg))
        seg_min = np.minimum.reduceat(reps_rot, seg_starts)
        new_rep = seg_min[seg_of]
        if merge_sink is not None:
            absorbed = reps_rot != new_rep
            for keep, lost in zip(new_rep[absorbed], reps_rot[absorbed]):
                merge_sink.append((t_end, int(keep), int(lost)))
        # relabel the full partition through a lookup table
        table = np.arange(len(bm), dtype=bm.dtype)
        table[reps_rot] = new_rep
        bm[:] = table[bm]
        survive_rot = reps_rot == new_rep
        keep_idx = order_idx[survive_rot]
        new_pos = new_pos[keep_idx]
        reps = reps[keep_idx]

    new_pos = wrap_angles(new_pos)
    order = np.argsort(new_pos, kind="stable")
    return new_pos[order], reps[order]


def advance_coalescing(state: CoalescingState, dt: float, seed: SeedSpec) -> CoalescingState:
    """Advance every survivor by one Gaussian step of variance dt and
    resolve collisions between cyclic neighbours.

    dt == 0 returns the state unchanged.  Deterministic given
    (state, dt, seed).
    """
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return state
    rng = seed.generator()
    bm = np.array(state.partition.block_min, dtype=np.int64)
    pos, reps = _coalescing_step(
        state.positions.copy(), state.reps.copy(), bm, dt, rng
    )
    return CoalescingState(
        time=state.time + dt,
        positions=pos,
        reps=reps,
        partition=Partition(state.partition.n, tuple(int(g) for g in bm)),
        origin=state.origin,
    )


@dataclass
class BlockTrace:
    """Recorded history of a coalescing run from n uniform particles.

    counts[i] is the number of blocks at grid[i]; block_sizes[i] holds
    the integer block sizes (descending) whose sum is exactly n, so the
    frequencies block_sizes[i]/n sum to one by construction.  merges is
    the full list of (time, keep, absorbed) coalescence events, censored
    at the horizon.
    """

    n: int
    horizon: float
    grid: np.ndarray
    counts: np.ndarray
    block_sizes: list
    merges: list
    censor_time: float = field(init=False)

    def __post_init__(self):
        self.censor_time = self.horizon

    def frequencies(self, i: int) -> np.ndarray:
        return self.block_sizes[i] / self.n

    def pair_merge_time(self, i: int, j: int) -> float:
        """First merge time of the blocks containing i and j (censored)."""
        return float(self.tau_matrix()[i, j])

    def tau_matrix(self) -> np.ndarray:
        """Dense pairwise coalescence-time matrix (O(n^2) memory)."""
        tau = np.full((self.n, self.n), self.horizon, dtype=float)
        np.fill_diagonal(tau, 0.0)
        members: dict[int, list[int]] = {i: [i] for i in range(self.n)}
        for t, keep, lost in self.merges:
            a, b = members[keep], members[lost]
            ia = np.array(a)[:, None]
            ib = np.array(b)[None, :]
            tau[ia, ib] = t
            tau[ib.T, ia.T] = t
            members[keep] = a + b
            del members[lost]
        return tau

    def write_trace_csv(self, path: str, rep: int = 0, mode: str = "w") -> None:
        """Rows: rep, t, N, then descending frequencies padded with 0."""
        kmax = max(len(s) for s in self.block_sizes)
        with open(path, mode, encoding="utf-8") as fh:
            if mode == "w":
                cols = ",".join(f"F_{j + 1}" for j in range(kmax))
                fh.write(f"rep,t,N,{cols}\n")
            for i, t in enumerate(self.grid):
                freqs = list(self.block_sizes[i] / self.n)
                freqs += [0.0] * (kmax - len(freqs))
                fh.write(f"{rep},{t!r},{self.counts[i]}," + ",".join(repr(f) for f in freqs) + "\n")

    def write_tau_csv(self, path: str) -> None:
        write_tau_csv(self.tau_matrix(), self.horizon, path)


def write_tau_csv(tau: np.ndarray, censor_time: float, path: str) -> None:
    """Dense lower-triangular CSV; row i carries tau[i, 0..i-1]."""
    n = tau.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# coalcircle tau n={n} censor_time={censor_time!r}\n")
        for i in range(1, n):
            fh.write(",".join(repr(float(v)) for v in tau[i, :i]) + "\n")


def _refined_dt(t: float, dt: float, n: int) -> float:
    """Early-phase step size keeping the expected merges per step bounded."""
    floor = _FLOOR_FRAC * (TWO_PI / n) ** 2
    return min(dt, max(floor, _REFINE_COEFF * t * math.sqrt(t)))


def simulate_block_history(
    n: int,
    horizon: float,
    grid,
    dt: float,
    seed: SeedSpec,
    refine_early: bool = True,
    record_merges: bool = True,
) -> BlockTrace:
    """Run n uniformly placed coalescing particles and record the trace.

    Records the block count and integer block sizes at every grid time
    and every pairwise coalescence event (as merge pairs, from which the
    dense tau matrix or the dendrogram can be rebuilt).  Pairs that have
    not merged by the horizon are censored there.

    dt is the base step; with refine_early the early phase, where the
    merge rate scales like t**-3/2, is stepped more finely so that the
    expected number of events per step stays bounded.  The step schedule
    is deterministic, so a fixed seed reproduces the trace bit for bit.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if horizon <= 0.0 or dt <= 0.0:
        raise ValidationError("horizon and dt must be positive")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0.0) or np.any(grid > horizon):
        raise ValidationError("grid times must lie in [0, horizon]")
    grid = np.unique(grid)

    rng = seed.generator()
    origin = rng.uniform(0.0, TWO_PI, n)
    order = np.argsort(origin, kind="stable")
    pos = origin[order]
    reps = order.astype(np.int64)
    bm = np.arange(n, dtype=np.int64)
    merges: list = []

    counts = np.zeros(len(grid), dtype=np.int64)
    sizes: list = [None] * len(grid)

    def record(gi: int) -> None:
        counts[gi] = len(reps)
        s = np.bincount(bm, minlength=n)
        s = s[s > 0]
        s.sort()
        sizes[gi] = s[::-1].copy()

    t = 0.0
    gi = 0
    while gi < len(grid) and grid[gi] <= 0.0:
        record(gi)
        gi += 1

    while t < horizon:
        step = _refined_dt(t, dt, n) if refine_early else dt
        next_stop = grid[gi] if gi < len(grid) else horizon
        if t + step >= next_stop:
            step, t_end = next_stop - t, next_stop
        else:
            t_end = t + step
        pos, reps = _coalescing_step(
            pos, reps, bm, step, rng,
            merge_sink=merges if record_merges else None, t_end=t_end,
        )
        t = t_end
        while gi < len(grid) and grid[gi] <= t:
            record(gi)
            gi += 1
        if gi >= len(grid) and (not record_merges or len(reps) == 1):
            break

    return BlockTrace(
        n=n, horizon=horizon, grid=grid, counts=counts, block_sizes=sizes, merges=merges
    )


# ---------------------------------------------------------------------------
# annihilating interval set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnihilatingState:
    time: float
    interval_set: IntervalSet


def _annihilating_step(ang, role, dt, rng):
    """One step for the boundary walkers; returns (ang, role, closed_gap_roles).

    closed_gap_roles lists, in processing order, whether each removed
    pair closed an occupied gap (True: the arc interior vanished) or a
    vacant gap (False: two arcs merged).  The caller uses the last entry
    to resolve the absorbing state when no endpoints remain.
    """
    k = len(ang)
    inc = rng.standard_normal(k) * math.sqrt(dt)
    g_old = np.empty(k)
    g_old[:-1] = np.diff(ang)
    g_old[-1] = ang[0] + TWO_PI - ang[-1]
    d_inc = np.empty(k)
    d_inc[:-1] = inc[1:] - inc[:-1]
    d_inc[-1] = inc[0] - inc[-1]
    g_new = g_old + d_inc
    u = rng.random(k)
    with np.errstate(over="ignore"):
        fire = (g_new <= 0.0) | (u < np.exp(-np.maximum(g_old, 0.0) * g_new / dt))

    closed: list[bool] = []
    if fire.any():
        alive = np.ones(k, dtype=bool)
        for j in np.nonzero(fire)[0]:
            j2 = (j + 1) % k
            if alive[j] and alive[j2] and j != j2:
                alive[j] = alive[j2] = False
                closed.append(bool(role[j]))  # start endpoint => occupied gap
        ang = ang[alive]
        role = role[alive]
        inc = inc[alive]

    ang = wrap_angles(ang + inc)
    order = np.argsort(ang, kind="stable")
    return ang[order], role[order], closed


def simulate_annihilating(b: IntervalSet, t: float, dt: float, seed: SeedSpec) -> IntervalSet:
    """Evolve an interval set for time t under annihilating boundaries.

    Endpoints of the constituent arcs move as independent unit-rate
    Brownian motions with bridge-hit collision detection between cyclic
    neighbours; colliding endpoints are removed pairwise.  When the last
    two endpoints collide the result is the empty set if the occupied
    gap closed and the full circle if the vacant gap closed.  The
    absorbing states are returned immediately.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if b.is_empty or b.is_full or t == 0.0:
        return b
    rng = seed.generator()
    ang, role = b.endpoints()
    elapsed = 0.0
    while elapsed < t and len(ang) > 0:
        step = min(dt, t - elapsed)
        ang, role, closed = _annihilating_step(ang, role, step, rng)
        elapsed += step
        if len(ang) == 0:
            return IntervalSet.empty() if closed[-1] else IntervalSet.full_circle()
    if len(ang) == 0:
        return IntervalSet.empty()
    return interval_set_from_boundaries(ang, role)


# ---------------------------------------------------------------------------
# batched kernels (vectorised across replications; small particle counts)
# ---------------------------------------------------------------------------


def _row_cluster_merge(fire_row, order_row, k, bm_row, alive_row):
    """Transitive merge of fired neighbour gaps within one replication.

    Gap j joins the particles of sorted ranks j and j+1 (mod k); maximal
    runs of fired gaps are merged as one cluster, the smallest original
    index surviving.
    """
    if fire_row.all():
        members = order_row[:k]
        _apply_merge(bm_row, alive_row, members)
        return
    r = int(np.nonzero(~fire_row)[0][0])
    run = [order_row[(r + 1) % k]]
    for jj in range(k):
        j = (r + 1 + jj) % k
        if fire_row[j]:
            run.append(order_row[(j + 1) % k])
        else:
            if len(run) > 1:
                _apply_merge(bm_row, alive_row, np.array(run))
            run = [order_row[(j + 1) % k]]


def _apply_merge(bm_row, alive_row, members):
    rep = members.min()
    for m in members:
        if m != rep:
            bm_row[bm_row == bm_row[m]] = rep
            alive_row[m] = False


def batch_coalesce(
    pos0: np.ndarray,
    t: float,
    dt: float,
    rng: np.random.Generator,
    record_pair_time: bool = False,
):
    """Evolve R independent replications of an n-particle coalescing system.

    pos0 has shape (R, n).  Returns (pos, bm, alive[, pair_time]):
    positions of all original walkers at time t, per-replication
    block_min arrays, the survivor mask, and, when requested, the step
    time at which the survivor count first dropped to one (censored at
    t).  Designed for small n (the particle dimension is looped, the
    replication dimension is vectorised); collision events are rare per
    step, so only rows that fired are post-processed individually.
    """
    pos = np.array(pos0, dtype=float)
    R, n = pos.shape
    bm = np.tile(np.arange(n, dtype=np.int64), (R, 1))
    alive = np.ones((R, n), dtype=bool)
    pair_time = np.full(R, np.inf)  # inf marks "not fully coalesced by t"
    if n == 1:
        # no collisions possible; the one-shot Gaussian is the exact law
        if t > 0.0:
            pos = wrap_angles(pos + rng.standard_normal((R, 1)) * math.sqrt(t))
        pair_time[:] = 0.0
        if record_pair_time:
            return pos, bm, alive, pair_time
        return pos, bm, alive
    if t == 0.0:
        if record_pair_time:
            return pos, bm, alive, pair_time
        return pos, bm, alive

    # In pair-time mode fully coalesced replications carry no further
    # information, so the working set is compacted periodically.
    work = np.arange(R)
    wpos, wbm, walive = pos, bm, alive
    pad = 4.0 * TWO_PI
    elapsed = 0.0
    steps_since_compact = 0
    while elapsed < t:
        Rw = len(work)
        if Rw == 0:
            break
        step = min(dt, t - elapsed)
        rows = np.arange(Rw)
        inc = rng.standard_normal((Rw, n)) * math.sqrt(step)
        key = np.where(walive, wpos, pad)
        order = np.argsort(key, axis=1, kind="stable")
        k = walive.sum(axis=1)
        active = k >= 2
        fire = np.zeros((Rw, n), dtype=bool)
        if active.any():
            u = rng.random((Rw, n))
            for j in range(n):
                sel = active & (j < k)
                if not sel.any():
                    continue
                cur = order[rows, j]
                jn = np.where(j + 1 < k, j + 1, 0)
                nxt = order[rows, jn]
                g_old = wpos[rows, nxt] - wpos[rows, cur]
                g_old[jn == 0] += TWO_PI
                g_new = g_old + inc[rows, nxt] - inc[rows, cur]
                with np.errstate(over="ignore"):
                    hit = (g_new <= 0.0) | (
                        u[:, j] < np.exp(-np.maximum(g_old, 0.0) * g_new / step)
                    )
                fire[:, j] = sel & hit
        elapsed += step
        for r in np.nonzero(fire.any(axis=1))[0]:
            kr = int(k[r])
            _row_cluster_merge(fire[r, :kr], order[r], kr, wbm[r], walive[r])
            if record_pair_time and walive[r].sum() == 1 and np.isinf(pair_time[work[r]]):
                pair_time[work[r]] = elapsed
        wpos = wrap_angles(wpos + inc)
        steps_since_compact += 1
        if record_pair_time and steps_since_compact >= 256:
            steps_since_compact = 0
            done = walive.sum(axis=1) == 1
            if done.any():
                pos[work], bm[work], alive[work] = wpos, wbm, walive
                keep = ~done
                work = work[keep]
                wpos, wbm, walive = wpos[keep], wbm[keep], walive[keep]

    pos[work], bm[work], alive[work] = wpos, wbm, walive
    if record_pair_time:
        return pos, bm, alive, pair_time
    return pos, bm, alive


def batch_annihilate(b: IntervalSet, t: float, dt: float, rng: np.random.Generator, reps: int):
    """Evolve R independent annihilating replications from interval set b.

    Returns (status, ang, role, alive): status is 0 while arcs remain,
    1 for the empty set, 2 for the full circle; ang/alive give the
    surviving boundary walkers per replication, with shared initial
    roles (roles travel with endpoints and never change).
    """
    if b.is_empty or b.is_full:
        status = np.full(reps, 1 if b.is_empty else 2, dtype=np.int8)
        return status, np.zeros((reps, 0)), np.zeros(0, dtype=bool), np.zeros((reps, 0), dtype=bool)
    ang0, role = b.endpoints()
    m = len(ang0)
    ang = np.tile(ang0, (reps, 1))
    alive = np.ones((reps, m), dtype=bool)
    status = np.zeros(reps, dtype=np.int8)
    rows = np.arange(reps)
    pad = 4.0 * TWO_PI

    elapsed = 0.0
    while elapsed < t:
        step = min(dt, t - elapsed)
        act = status == 0
        if not act.any():
            break
        inc = rng.standard_normal((reps, m)) * math.sqrt(step)
        u = rng.random((reps, m))
        key = np.where(alive, ang, pad)
        order = np.argsort(key, axis=1, kind="stable")
        k = alive.sum(axis=1)
        fire = np.zeros((reps, m), dtype=bool)
        for j in range(m):
            sel = act & (j < k) & (k >= 2)
            if not sel.any():
                continue
            cur = order[rows, j]
            jn = np.where(j + 1 < k, j + 1, 0)
            nxt = order[rows, jn]
            g_old = ang[rows, nxt] - ang[rows, cur]
            g_old[jn == 0] += TWO_PI
            g_new = g_old + inc[rows, nxt] - inc[rows, cur]
            with np.errstate(over="ignore"):
                hit = (g_new <= 0.0) | (u[:, j] < np.exp(-np.maximum(g_old, 0.0) * g_new / step))
            fire[:, j] = sel & hit
        elapsed += step
        for r in np.nonzero(fire.any(axis=1))[0]:
            kr = int(k[r])
            alive_sorted = np.ones(kr, dtype=bool)
            closed_last = None
            for j in np.nonzero(fire[r, :kr])[0]:
                j2 = (j + 1) % kr
                if alive_sorted[j] and alive_sorted[j2] and j != j2:
                    alive_sorted[j] = alive_sorted[j2] = False
                    closed_last = bool(role[order[r, j]])
            removed = order[r, :kr][~alive_sorted]
            alive[r, removed] = False
            if not alive[r].any():
                status[r] = 1 if closed_last else 2
        ang = np.where(alive, wrap_angles(ang + inc), ang)

    return status, ang, role, alive


def annihilating_lengths(status, ang, role, alive) -> np.ndarray:
    """Total occupied length per replication from batch_annihilate output."""
    reps = len(status)
    out = np.zeros(reps)
    out[status == 2] = TWO_PI
    for r in np.nonzero(status == 0)[0]:
        a = ang[r][alive[r]]
        rl = role[alive[r]]
        order = np.argsort(a, kind="stable")
        a, rl = a[order], rl[order]
        kr = len(a)
        for i in range(kr):
            if rl[i]:
                gap = a[(i + 1) % kr] - a[i]
                out[r] += gap + (TWO_PI if (i + 1) % kr == 0 else 0.0)
    return out


def interval_contains_points(ang_row, role_row, alive_row, points) -> bool:
    """Membership of every query point in one replication's open set."""
    a = ang_row[alive_row]
    if len(a) == 0:
        return False  # caller resolves absorbing states from status
    rl = role_row[alive_row]
    order = np.argsort(a, kind="stable")
    a, rl = a[order], rl[order]
    kr = len(a)
    for x in points:
        inside = False
        for i in range(kr):
            if rl[i]:
                gap = a[(i + 1) % kr] - a[i]
                if (i + 1) % kr == 0:
                    gap += TWO_PI
                off = (x - a[i]) % TWO_PI
                if 0.0 < off < gap:
                    inside = True
                    break
        if not inside:
            return False
    return True


def batch_pair_meeting_times(
    starts: np.ndarray, horizon: float, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Meeting times of R independent two-particle systems (inf if none).

    Specialised fast path: only the gap, a variance-rate-2 Brownian
    motion on (0, 2*pi) with both of its closing routes coin-flipped per
    step, needs to be tracked.  Same law as batch_coalesce at n = 2.
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim != 2 or starts.shape[1] != 2:
        raise ValidationError("starts must have shape (reps, 2)")
    R = starts.shape[0]
    times = np.full(R, np.inf)
    g = (starts[:, 1] - starts[:, 0]) % TWO_PI
    immediate = (g <= 0.0) | (g >= TWO_PI)
    times[immediate] = 0.0
    active = np.nonzero(~immediate)[0]
    g = g[~immediate]
    sqrt2 = math.sqrt(2.0)
    elapsed = 0.0
    while elapsed < horizon and len(active):
        step = min(dt, horizon - elapsed)
        g_new = g + rng.standard_normal(len(active)) * (sqrt2 * math.sqrt(step))
        u = rng.random((len(active), 2))
        crossed = (g_new <= 0.0) | (g_new >= TWO_PI)
        safe_new = np.clip(g_new, 1e-300, TWO_PI)
        with np.errstate(over="ignore"):
            hit = (
                crossed
                | (u[:, 0] < np.exp(-g * safe_new / step))
                | (u[:, 1] < np.exp(-(TWO_PI - g) * (TWO_PI - safe_new) / step))
            )
        elapsed += step
        times[active[hit]] = elapsed
        keep = ~hit
        active = active[keep]
        g = g_new[keep]
    return times


# ---------------------------------------------------------------------------
# duality gap estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityEstimate:
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float

    @property
    def se_joint(self) -> float:
        return math.hypot(self.se_lhs, self.se_rhs)

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def coalescing_in_set_indicators(
    a_points, b: IntervalSet, t: float, dt: float, rng, reps: int
) -> np.ndarray:
    """Per-replication indicator of {coalescing set from A is inside B at t}."""
    a = wrap_angles(np.asarray(a_points, dtype=float).copy())
    if b.is_full:
        return np.ones(reps)
    if b.is_empty:
        return np.zeros(reps)
    pos0 = np.tile(a, (reps, 1))
    pos, bm, alive = batch_coalesce(pos0, t, dt, rng)
    starts = np.array([s for s, _ in b.arcs])
    lens = np.array([l for _, l in b.arcs])
    offs = (pos[:, :, None] - starts[None, None, :]) % TWO_PI
    inside_any = ((offs > 0.0) & (offs < lens[None, None, :])).any(axis=2)
    ok = np.where(alive, inside_any, True).all(axis=1)
    return ok.astype(float)


def annihilating_contains_indicators(
    a_points, b: IntervalSet, t: float, dt: float, rng, reps: int
) -> np.ndarray:
    """Per-replication indicator of {A is inside the annihilating set at t}."""
    a = wrap_angles(np.asarray(a_points, dtype=float).copy())
    status, ang, role, alive = batch_annihilate(b, t, dt, rng, reps)
    out = np.zeros(reps)
    out[status == 2] = 1.0
    for r in np.nonzero(status == 0)[0]:
        out[r] = 1.0 if interval_contains_points(ang[r], role, alive[r], a) else 0.0
    return out


def estimate_duality_gap(
    a_points, b: IntervalSet, t: float, reps: int, dt: float, seed: SeedSpec
) -> DualityEstimate:
    """Monte Carlo estimate of both sides of the coalescing/annihilating
    duality identity P{W_A(t) in B} = Q{A in V_B(t)}.

    The two sides use independent random streams.  At t = 0 both sides
    are the deterministic indicator of A inside B.
    """
    a = wrap_angles(np.asarray(a_points, dtype=float).copy())
    if len(a) == 0:
        raise ValidationError("A must be non-empty")
    if t == 0.0:
        ind = 1.0 if b.contains_all(a) else 0.0
        return DualityEstimate(ind, ind, 0.0, 0.0)
    lhs_vals = coalescing_in_set_indicators(a, b, t, dt, seed.generator(tag=1), reps)
    rhs_vals = annihilating_contains_indicators(a, b, t, dt, seed.generator(tag=2), reps)
    lhs, rhs = float(lhs_vals.mean()), float(rhs_vals.mean())
    se_l = math.sqrt(max(lhs * (1 - lhs), 0.0) / reps)
    se_r = math.sqrt(max(rhs * (1 - rhs), 0.0) / reps)
    return DualityEstimate(lhs, rhs, se_l, se_r)


# ---------------------------------------------------------------------------
# power-law fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float


def estimate_scaling_exponent(ts, values, weights=None) -> PowerLawFit:
    """Least-squares slope of log(value) against log(t).

    Used for the small-time collision-probability exponent (1/2 for
    Brownian motion on the circle) and for covering-number dimension
    fits.  Requires at least 4 strictly positive points; optional
    weights give weighted least squares.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(ts) != len(vals) or len(ts) < 4:
        raise ValidationError("need at least 4 (t, value) pairs")
    if np.any(ts <= 0.0) or np.any(vals <= 0.0):
        raise ValidationError("power-law fit needs positive data")
    x, y = np.log(ts), np.log(vals)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    wsum = w.sum()
    xbar, ybar = (w * x).sum() / wsum, (w * y).sum() / wsum
    sxx = (w * (x - xbar) ** 2).sum()
    if sxx == 0.0:
        raise ValidationError("degenerate abscissa for power-law fit")
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    ss_res = (w * resid**2).sum()
    ss_tot = (w * (y - ybar) ** 2).sum()
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(float(slope), float(intercept), float(r2))
