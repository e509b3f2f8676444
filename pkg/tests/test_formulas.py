import math

import numpy as np
import pytest

from coalcircle.core import TWO_PI
from coalcircle.formulas import (
    absorbed_density,
    absorbed_survival,
    cantor_atoms,
    cantor_energy,
    exit_high_cdf,
    expected_block_count,
    jacobi_theta,
    pair_meeting_cdf,
)

# oracle values computed by 30-digit summation of the defining series
THETA_1 = 1.0864348112133080
EN_1 = 3.5449077018110321
PAIR_CDF_1 = 0.3591725935631737
TWO_SQRT_PI = 3.5449077018110320
TWO_OVER_PI32 = 0.3591742442503331
SURV_PI_1 = 0.9473578502096942
EXIT_PI_1 = 0.0263210748951529


class TestTheta:
    def test_value_at_one(self):
        assert jacobi_theta(1.0) == pytest.approx(THETA_1, abs=1e-12)

    def test_large_u_limit(self):
        assert jacobi_theta(100.0) == pytest.approx(1.0, abs=1e-12)

    def test_functional_equation_spot(self):
        assert abs(jacobi_theta(0.25) - 0.25**-0.5 * jacobi_theta(4.0)) <= 1e-12

    def test_functional_equation_log_grid(self):
        for u in np.geomspace(1e-3, 1e3, 61):
            lhs = jacobi_theta(u)
            rhs = jacobi_theta(1.0 / u) / math.sqrt(u)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, lhs)

    def test_domain(self):
        with pytest.raises(ValueError):
            jacobi_theta(0.0)
        with pytest.raises(ValueError):
            jacobi_theta(-1.0)


class TestExpectedBlockCount:
    def test_value_at_one(self):
        assert expected_block_count(1.0) == pytest.approx(EN_1, abs=1e-12)

    def test_long_time_limit(self):
        assert expected_block_count(200.0) == pytest.approx(1.0, abs=1e-12)

    def test_small_time_asymptotics(self):
        # t^(1/2) E[N(t)] -> 2 sqrt(pi); equality is already exact at 1e-4
        val = expected_block_count(1e-4)
        assert val == pytest.approx(354.49077018110321, abs=1e-8)
        assert math.sqrt(1e-4) * val == pytest.approx(TWO_SQRT_PI, abs=1e-12)

    def test_matches_theta_on_grid(self):
        # two independent series for the same quantity
        for t in np.geomspace(1e-4, 10.0, 53):
            a = expected_block_count(t)
            b = jacobi_theta(t / (4.0 * math.pi))
            assert abs(a - b) <= 1e-12 * max(1.0, a)

    def test_domain(self):
        with pytest.raises(ValueError):
            expected_block_count(0.0)


class TestPairMeetingCdf:
    def test_at_zero(self):
        assert pair_meeting_cdf(0.0) == 0.0

    def test_value_at_one(self):
        assert pair_meeting_cdf(1.0) == pytest.approx(PAIR_CDF_1, abs=1e-12)

    def test_small_time_constant(self):
        assert 1e2 * pair_meeting_cdf(1e-4) == pytest.approx(TWO_OVER_PI32, abs=1e-4)
        assert TWO_OVER_PI32 == pytest.approx(2.0 / math.pi**1.5, abs=1e-15)

    def test_monotone_bounded(self):
        ts = np.geomspace(1e-5, 200.0, 200)
        vals = pair_meeting_cdf(ts)
        assert np.all(np.diff(vals) >= -1e-15)
        assert np.all((vals >= 0.0) & (vals <= 1.0))
        assert vals[-1] == pytest.approx(1.0, abs=1e-12)

    def test_complement_equals_survival_average(self):
        # Gauss-Legendre quadrature of the survival series over [0, 2*pi]
        nodes, weights = np.polynomial.legendre.leggauss(240)
        x = (nodes + 1.0) * math.pi
        for t in (0.25, 1.0, 3.0):
            avg = sum(w * absorbed_survival(xi, t) for xi, w in zip(x, weights)) / 2.0
            assert avg == pytest.approx(1.0 - pair_meeting_cdf(t), abs=1e-10)

    def test_domain(self):
        with pytest.raises(ValueError):
            pair_meeting_cdf(-0.1)


class TestAbsorbedSurvival:
    def test_absorbed_start(self):
        for t in (0.01, 1.0, 5.0):
            assert absorbed_survival(0.0, t) == pytest.approx(0.0, abs=1e-12)
            assert absorbed_survival(TWO_PI, t) == pytest.approx(0.0, abs=1e-12)

    def test_time_zero(self):
        assert absorbed_survival(math.pi, 0.0) == 1.0
        assert absorbed_survival(0.0, 0.0) == 0.0

    def test_value(self):
        assert absorbed_survival(math.pi, 1.0) == pytest.approx(SURV_PI_1, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            absorbed_survival(-0.1, 1.0)
        with pytest.raises(ValueError):
            absorbed_survival(7.0, 1.0)

    def test_density_integrates_to_survival(self):
        nodes, weights = np.polynomial.legendre.leggauss(200)
        y = (nodes + 1.0) * math.pi
        for x0, t in ((math.pi, 0.5), (1.0, 1.0), (5.0, 0.2)):
            dens = absorbed_density(x0, y, t)
            total = float((weights * dens).sum() * math.pi)
            assert total == pytest.approx(absorbed_survival(x0, t), abs=1e-9)


class TestExitHighCdf:
    def test_bottom_start(self):
        for t in (0.0, 0.3, 2.0):
            assert exit_high_cdf(0.0, t) == pytest.approx(0.0, abs=1e-12)

    def test_long_time_symmetry(self):
        assert exit_high_cdf(math.pi, 300.0) == pytest.approx(0.5, abs=1e-12)

    def test_value(self):
        assert exit_high_cdf(math.pi, 1.0) == pytest.approx(EXIT_PI_1, abs=1e-12)

    def test_partition_of_unity(self):
        for x in (0.3, 1.0, math.pi, 5.0):
            for t in (0.05, 0.5, 2.0):
                total = (
                    exit_high_cdf(x, t)
                    + exit_high_cdf(TWO_PI - x, t)
                    + absorbed_survival(x, t)
                )
                assert total == pytest.approx(1.0, abs=1e-10)

    def test_against_heat_equation_grid(self):
        # independent oracle: finite differences for w_t = w_xx on
        # (0, 2*pi), w(0, t) = 0, w(2*pi, t) = 1, w(x, 0) = 0; w(x, t) is
        # the probability of absorption at the top by time t.  A few
        # implicit-Euler start-up steps damp the corner discontinuity,
        # then Crank-Nicolson carries the smooth solution.
        from scipy.linalg import solve_banded

        nx, nt, t_final = 8000, 4000, 1.0
        dx = TWO_PI / nx
        dt = t_final / nt
        r = dt / (dx * dx)
        w = np.zeros(nx + 1)
        w[-1] = 1.0

        def banded(theta):
            ab = np.zeros((3, nx - 1))
            ab[0, 1:] = -theta * r
            ab[1, :] = 1.0 + 2.0 * theta * r
            ab[2, :-1] = -theta * r
            return ab

        ab_cn, ab_ie = banded(0.5), banded(1.0)
        for step in range(nt):
            implicit = step < 8
            theta = 1.0 if implicit else 0.5
            expl = 1.0 - theta
            interior = w[1:-1]
            rhs = interior + expl * r * (w[2:] - 2.0 * interior + w[:-2])
            rhs[-1] += theta * r * 1.0  # top boundary on the implicit side
            w[1:-1] = solve_banded((1, 1), ab_ie if implicit else ab_cn, rhs)
        mid = w[nx // 2]
        assert mid == pytest.approx(exit_high_cdf(math.pi, t_final), abs=1e-6)


class TestCantor:
    def test_atom_layout(self):
        xs = cantor_atoms(2)
        assert len(xs) == 4
        assert xs[0] == pytest.approx(1.0 / 32.0)
        assert xs[-1] == pytest.approx(1.0 - 1.0 / 32.0)

    def test_level_one_values(self):
        assert cantor_energy(1, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert cantor_energy(1, 0.5) == pytest.approx(0.5773502691896258, abs=1e-12)

    def test_convergence_below_critical_beta(self):
        vals = [cantor_energy(k, 0.3) for k in range(1, 11)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        increments = np.diff(vals)
        # increments shrink geometrically below the critical exponent 1/2
        assert increments[-1] < 0.2 * increments[0]
        assert increments[-1] / increments[-2] < 0.95

    def test_divergence_above_critical_beta(self):
        vals = [cantor_energy(k, 0.6) for k in range(1, 11)]
        ratios = [b / a for a, b in zip(vals, vals[1:])]
        assert all(r > 1.05 for r in ratios[2:])

    def test_domain(self):
        with pytest.raises(ValueError):
            cantor_energy(0, 0.3)
        with pytest.raises(ValueError):
            cantor_energy(15, 0.3)
