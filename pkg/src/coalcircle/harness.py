"""Reproducible Monte Carlo experiment runner.

Experiments are registered by name and evaluated over replications in
fixed-size chunks.  Chunk c of an experiment draws all of its
randomness from ``SeedSpec(master_seed, c)``, so results are
bit-identical for any worker count and any scheduling order.
Replication outputs are aggregated into means and standard errors.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from coalcircle.core import SeedSpec

#: Replications per seeded chunk.  Fixed so that the chunk layout, and
#: therefore every random draw, is independent of the worker count.
CHUNK_SIZE = 4096

DEFAULT_MASTER_SEED = 20270417
SEED_ENV_VAR = "COALCIRCLE_SEED"

#: name -> fn(seed: SeedSpec, reps: int, **params) -> dict[str, np.ndarray]
#: Each returned array holds one value per replication in the chunk.
EXPERIMENTS: dict[str, Callable] = {}


class UnknownExperimentError(KeyError):
    pass


def register(name: str):
    def deco(fn):
        EXPERIMENTS[name] = fn
        return fn

    return deco


def default_master_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return DEFAULT_MASTER_SEED


@dataclass
class ExperimentRecord:
    """Aggregated, reproducible result of one experiment run."""

    name: str
    parameters: dict
    master_seed: int
    reps: int
    estimates: dict[str, float]
    standard_errors: dict[str, float]
    runtime_ms: float
    timestamp: str
    series: dict[str, list] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "parameters": self.parameters,
                "master_seed": self.master_seed,
                "reps": self.reps,
                "estimates": self.estimates,
                "standard_errors": self.standard_errors,
                "runtime_ms": self.runtime_ms,
                "timestamp": self.timestamp,
                "series": self.series,
            }
        )

    @staticmethod
    def from_json(line: str) -> "ExperimentRecord":
        d = json.loads(line)
        return ExperimentRecord(
            name=d["name"],
            parameters=d["parameters"],
            master_seed=d["master_seed"],
            reps=d["reps"],
            estimates=d["estimates"],
            standard_errors=d["standard_errors"],
            runtime_ms=d["runtime_ms"],
            timestamp=d["timestamp"],
            series=d.get("series", {}),
        )

    def reproducible_fields(self) -> tuple:
        """Everything that must match when a run is repeated."""
        return (
            self.name,
            json.dumps(self.parameters, sort_keys=True),
            self.master_seed,
            self.reps,
            json.dumps(self.estimates, sort_keys=True),
            json.dumps(self.standard_errors, sort_keys=True),
            json.dumps(self.series, sort_keys=True),
        )


def _run_chunk(name: str, master_seed: int, chunk_index: int, chunk_reps: int, params: dict):
    fn = EXPERIMENTS[name]
    out = fn(SeedSpec(master_seed, chunk_index), chunk_reps, **params)
    return chunk_index, {k: np.asarray(v, dtype=float) for k, v in out.items()}


def run_experiment(
    name: str,
    parameters: dict | None = None,
    reps: int = 1,
    master_seed: int | None = None,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> ExperimentRecord:
    """Run a registered experiment and aggregate per-replication values.

    Chunks are dispatched to a process pool when workers > 1; the
    estimates do not depend on the worker count because each chunk owns
    its seed and chunks are re-assembled in index order.
    """
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(f"unknown experiment {name!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    params = dict(parameters or {})
    if master_seed is None:
        master_seed = default_master_seed()

    chunks = []
    start = 0
    c = 0
    while start < reps:
        chunks.append((c, min(chunk_size, reps - start)))
        start += chunk_size
        c += 1

    t0 = time.perf_counter()
    results: dict[int, dict[str, np.ndarray]] = {}
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(_run_chunk, name, master_seed, ci, creps, params)
                for ci, creps in chunks
            ]
            for fut in futs:
                ci, out = fut.result()
                results[ci] = out
    else:
        for ci, creps in chunks:
            ci, out = _run_chunk(name, master_seed, ci, creps, params)
            results[ci] = out
    runtime_ms = (time.perf_counter() - t0) * 1e3

    keys = sorted(results[0])
    estimates: dict[str, float] = {}
    ses: dict[str, float] = {}
    for k in keys:
        vals = np.concatenate([results[ci][k] for ci, _ in chunks])
        if len(vals) != reps:
            raise RuntimeError(f"experiment {name} returned {len(vals)} values for {reps} reps")
        estimates[k] = float(vals.mean())
        ses[k] = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")

    return ExperimentRecord(
        name=name,
        parameters=params,
        master_seed=master_seed,
        reps=reps,
        estimates=estimates,
        standard_errors=ses,
        runtime_ms=runtime_ms,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if z < 0:
        raise ValueError("z must be non-negative")
    k, n = float(successes), float(trials)
    center = (k + z * z / 2.0) / (n + z * z)
    half = z * math.sqrt(k * (n - k) / n + z * z / 4.0) / (n + z * z)
    return max(0.0, center - half), min(1.0, center + half)


def binomial_se(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def append_record(record: ExperimentRecord, path: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path: str) -> list[ExperimentRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(ExperimentRecord.from_json(line))
    return out


def record_to_csv(record: ExperimentRecord, path: str) -> None:
    """Flat CSV export: one row per estimate key."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("experiment,key,estimate,standard_error,reps,master_seed\n")
        for k in sorted(record.estimates):
            fh.write(
                f"{record.name},{k},{record.estimates[k]!r},"
                f"{record.standard_errors[k]!r},{record.reps},{record.master_seed}\n"
            )
