"""Coalescing and annihilating Brownian particles on the circle.

Simulators for interacting Brownian particle systems on the circle of
circumference 2*pi (coalescing point sets, annihilating interval
boundaries, look-down type propagation), exact finite-lattice duality
checks, closed-form reference series, and fractal statistics of the
induced coalescent tree.  Every simulator is paired with an independent
oracle: a closed-form series, an exact matrix exponential, or a brute
force enumeration.
"""

from coalcircle.core import (
    TWO_PI,
    CirclePoint,
    IntervalSet,
    Partition,
    SeedSpec,
    ValidationError,
    arc_distance,
    wrap_angle,
)
from coalcircle.formulas import (
    absorbed_survival,
    cantor_atoms,
    cantor_energy,
    exit_high_cdf,
    expected_block_count,
    jacobi_theta,
    pair_meeting_cdf,
)

__version__ = "0.1.0"

__all__ = [
    "TWO_PI",
    "CirclePoint",
    "IntervalSet",
    "Partition",
    "SeedSpec",
    "ValidationError",
    "arc_distance",
    "wrap_angle",
    "jacobi_theta",
    "expected_block_count",
    "pair_meeting_cdf",
    "absorbed_survival",
    "exit_high_cdf",
    "cantor_energy",
    "cantor_atoms",
    "__version__",
]
