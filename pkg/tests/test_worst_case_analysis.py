import math

import numpy as np
import pytest

from poaforge._numerics import golden_max
from poaforge.errors import DomainError
from poaforge.instance_model import InstanceClass, classify
from poaforge.welfare_engine import poa
from poaforge.worst_case_analysis import (LAMBDA_STAR, POA_STAR, H_mu_at, _bid_of,
                                          discretized_worst_case, feasible_grid, g_objective,
                                          h_mu, lambda_max, ode_residual, ode_residual_fd,
                                          optimize, poa_integral, poa_objective, pointmass_map)

E2 = math.exp(-2.0)


def defining_residual(lam, mu, h):
    k = 1.0 + 1.0 / mu
    return (1.0 - lam) * h * math.exp(k * (2.0 - 2.0 * math.sqrt(h))) - 1.0


class TestPointmass:
    def test_worst_case_quarter(self):
        assert h_mu(LAMBDA_STAR, 1.0) == pytest.approx(0.25, abs=1e-12)

    def test_small_lambda_tends_to_one(self):
        assert h_mu(1e-9, 1.0) > 1.0 - 1e-6

    def test_residual(self):
        lam, mu = 0.15, 2.0
        h = h_mu(lam, mu)
        assert abs(defining_residual(lam, mu, h)) <= 1e-12

    def test_infeasible_point_rejected(self):
        assert lambda_max(2.0) < 0.3
        with pytest.raises(DomainError):
            h_mu(0.3, 2.0)

    def test_boundary_point(self):
        mu = 0.7
        k = 1.0 + 1.0 / mu
        assert h_mu(lambda_max(mu), mu) == pytest.approx(k ** -2, abs=1e-12)

    def test_map_decreasing(self):
        hs = np.linspace(0.25, 1.0, 50)
        assert np.all(np.diff(pointmass_map(hs, 1.0)) < 0)


class TestImplicitCdf:
    def test_endpoints(self):
        assert H_mu_at(LAMBDA_STAR, 1.0, LAMBDA_STAR) == 1.0
        assert H_mu_at(LAMBDA_STAR, 1.0, 0.0) == pytest.approx(0.25, abs=1e-12)

    def test_interior_residual(self):
        H = H_mu_at(LAMBDA_STAR, 1.0, 0.2)
        assert abs(float(_bid_of(H, LAMBDA_STAR, 1.0)) - 0.2) <= 1e-12

    def test_nondecreasing(self):
        for lam, mu in feasible_grid(4, 4):
            xs = np.linspace(0.0, lam, 200)
            assert np.all(np.diff(H_mu_at(lam, mu, xs)) >= 0)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            H_mu_at(LAMBDA_STAR, 1.0, LAMBDA_STAR + 0.01)


class TestObjective:
    def test_worst_case_value(self):
        assert poa_objective(LAMBDA_STAR, 1.0) == pytest.approx(POA_STAR, abs=1e-12)
        assert POA_STAR == pytest.approx(0.8646647167633873, abs=1e-15)

    def test_small_lambda(self):
        assert poa_objective(1e-8, 1.0) > 1.0 - 1e-6

    def test_integral_at_optimum(self):
        assert poa_integral(LAMBDA_STAR, 1.0) == pytest.approx(POA_STAR, abs=1e-8)

    @pytest.mark.parametrize("lam,mu", [(0.15, 2.0), (0.1, 0.5), (0.3, 1.3)])
    def test_integral_agrees(self, lam, mu):
        assert poa_integral(lam, mu) == pytest.approx(poa_objective(lam, mu), abs=1e-8)

    @pytest.mark.parametrize("mu", [0.3, 1.0, 4.0])
    def test_boundary_agrees(self, mu):
        lam = lambda_max(mu)
        assert poa_integral(lam, mu) == pytest.approx(poa_objective(lam, mu), abs=1e-8)

    def test_never_below_target(self):
        for lam, mu in feasible_grid(12, 12):
            assert poa_objective(lam, mu) >= POA_STAR - 1e-9


class TestReparameterized:
    def test_peak(self):
        assert g_objective(0.5, 0.5) == pytest.approx(E2, rel=1e-15)

    @pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
    def test_diagonal(self, beta):
        want = (1 / beta - 1) ** 2 * math.exp(-(2 / beta - 2))
        assert g_objective(beta, beta) == pytest.approx(want, rel=1e-13)

    def test_curve_past_peak(self):
        assert g_objective(0.7, math.sqrt(0.6) - 0.3) <= E2

    def test_domain(self):
        with pytest.raises(DomainError):
            g_objective(0.4, 0.5)
        with pytest.raises(DomainError):
            g_objective(1.0, 0.5)

    def test_diagonal_slice_peaks_at_half(self):
        beta, _ = golden_max(lambda b: g_objective(b, b), 0.05, 0.95, xtol=1e-10)
        assert beta == pytest.approx(0.5, abs=1e-7)


class TestOptimize:
    def test_optimum(self):
        best = optimize()
        assert best.objective == pytest.approx(POA_STAR, abs=1e-9)
        assert best.lam == pytest.approx(LAMBDA_STAR, abs=1e-6)
        assert best.mu == pytest.approx(1.0, abs=1e-6)
        assert round(best.lam, 6) == 0.458659

    def test_serializes(self):
        d = optimize().to_dict()
        assert set(d) == {"lambda", "mu", "h_mu", "objective", "beta", "gamma"}


class TestOde:
    def test_closed_form_residual(self):
        for lam, mu in feasible_grid(5, 5):
            xs = np.linspace(0.0, lam, 52)[1:-1]
            assert np.max(ode_residual(lam, mu, xs)) <= 1e-6

    def test_finite_difference_residual(self):
        xs = np.linspace(0.05, 0.4, 8)
        assert np.max(ode_residual_fd(LAMBDA_STAR, 1.0, xs)) <= 1e-3


class TestDiscretization:
    @pytest.mark.parametrize("lam,mu", [(LAMBDA_STAR, 1.0), (0.8 * lambda_max(2.0), 2.0)])
    def test_converges(self, lam, mu):
        target = poa_objective(lam, mu)
        for m in (500, 1000, 2000):
            inst = discretized_worst_case(m, lam, mu)
            assert abs(poa(inst).poa - target) <= 5.0 / m

    def test_is_twin_ceiling(self):
        assert classify(discretized_worst_case(50)) is InstanceClass.TWIN_CEILING
