import math

import numpy as np
import pytest

from poaforge import equilibrium_lab as lab
from poaforge.errors import DomainError

E2 = math.exp(-2.0)
TARGET = 1.0 - E2


@pytest.fixture(scope="module")
def wc10():
    return lab.build_worst_case_instance(10)


class TestConstruction:
    def test_low_mapping_range(self):
        b = np.linspace(0.0, lab.LAMBDA_STAR, 501)
        phi = lab.worst_case_low_mapping(b)
        assert phi[0] == pytest.approx(0.0, abs=1e-12)
        assert phi[-1] == pytest.approx(1.0 - 2.0 * E2, abs=1e-12)
        assert np.all(np.diff(phi) > 0)

    def test_monopolist_value_support(self):
        n = 20
        inst = lab.build_worst_case_instance(n)
        lo, hi = inst.groups[0].value_support
        assert (lo, hi) == pytest.approx((1 - 1 / n, 1 - 4 * E2 / n), abs=1e-15)
        q = inst.groups[0].value_quantile(np.array([0.0, 0.3, 1.0]))
        assert q[0] == pytest.approx(lo) and q[-1] == pytest.approx(hi, abs=1e-12)

    def test_monopolist_atom(self):
        assert lab.worst_case_monopolist_cdf(np.array([0.0]))[0] == pytest.approx(0.25, abs=1e-13)

    def test_small_crowd_rejected(self):
        with pytest.raises(DomainError):
            lab.build_worst_case_instance(3)

    def test_low_value_cdf_parametric(self, wc10):
        low = wc10.groups[1]
        t = np.linspace(1.0, 2.0, 21)
        v, V = lab.low_value_parametric(t, 10)
        assert low.value_cdf(v) == pytest.approx(V, abs=1e-12)

    def test_strategies_below_values(self, wc10):
        for g in wc10.groups:
            lo, hi = g.value_support
            v = np.linspace(lo, hi, 100)[1:]
            s = g.strategy(v)
            assert np.all(np.diff(s) >= 0)
            assert np.all(s < v)

    def test_push_forward(self, wc10):
        for inst in (lab.example1(), lab.example3(), wc10):
            for g in inst.groups:
                if not g.mixed:
                    assert lab.push_forward_error(inst, g.name) <= 1e-6

    def test_unknown_bidder(self):
        with pytest.raises(DomainError):
            lab.example1().group("Carol")


class TestUtility:
    def test_example3_alice_indifferent(self):
        inst = lab.example3()
        b = np.linspace(0.0, 0.75, 31)
        assert lab.interim_utility(inst, "Alice", 1.0, b) == pytest.approx(0.25, abs=1e-15)

    def test_overbidding_nonpositive(self):
        inst = lab.example1()
        v = 0.6
        b = np.linspace(v, 1.2, 20)
        assert np.all(lab.interim_utility(inst, "Alice", v, b) <= 0)

    def test_example1_value(self):
        assert lab.interim_utility(lab.example1(), "Bob", 0.8, 0.4) == pytest.approx(0.32)

    def test_boundary_tie_rule(self, wc10):
        # the monopolist wins at zero against an all-zero crowd, low bidders never do
        x_h = lab.allocation(wc10, 0, np.array([0.0]))[0]
        x_l = lab.allocation(wc10, 1, np.array([0.0]))[0]
        assert x_h == pytest.approx((4 * E2) ** (10 / 9), rel=1e-12)
        assert x_l == 0.0

    def test_alice_cdf_normalized(self):
        assert lab.example3_alice_cdf(np.array([0.75]))[0] == 1.0
        assert lab.example3_alice_cdf(np.array([0.5 + 1e-9]))[0] < 1e-12
        assert lab.example3_alice_cdf(np.array([2 / 3]))[0] == pytest.approx(1.5 / math.e)

    def test_bob_first_order_condition(self):
        # Bob's bid inverts to v = b + B_1(b)/B_1'(b) on Alice's support
        b = np.linspace(0.52, 0.74, 12)
        h = 1e-6
        cdf = lab.example3_alice_cdf
        dlog = (np.log(cdf(b + h)) - np.log(cdf(b - h))) / (2 * h)
        v = b + 1.0 / dlog
        assert v == pytest.approx(1.0 / (4.0 - 4.0 * b), rel=1e-6)


class TestBestResponse:
    @pytest.mark.parametrize("make", [lab.example1, lab.example2])
    def test_intro_examples_exact(self, make):
        rep = lab.best_response_check(make(), 200, 400)
        assert rep.max_regret <= 1e-9
        assert rep.certified

    def test_example3(self):
        assert lab.best_response_check(lab.example3(), 200, 400).max_regret <= 1e-6

    def test_worst_case_small(self, wc10):
        rep = lab.best_response_check(wc10, 60, 120)
        assert rep.max_regret <= 1e-6

    def test_detects_non_equilibrium(self):
        inst = lab.example1()
        truthful = lab.StrategyCurve(lambda v: v, (0.0, 1.0))
        g = inst.groups[0]
        bad = lab.FiniteAuctionInstance(
            (lab.BidderGroup(g.name, 1, g.value_quantile, g.value_cdf, g.value_support,
                             g.bid_cdf, g.bid_quantile, truthful), inst.groups[1]))
        rep = lab.best_response_check(bad, 50, 100)
        assert not rep.certified
        assert rep.max_regret > 0.1

    def test_grid_floor(self):
        with pytest.raises(DomainError):
            lab.best_response_check(lab.example1(), 10, 400)

    def test_report_dict(self):
        d = lab.best_response_check(lab.example2(), 50, 50).to_dict()
        assert set(d["per_bidder"]) == {"Alice", "Bob"}


class TestWelfare:
    def test_example1_efficient(self):
        rep = lab.analytic_welfare(lab.example1())
        assert rep.fpa == pytest.approx(2 / 3, abs=1e-12)
        assert rep.poa == pytest.approx(1.0, abs=1e-12)

    def test_example2(self):
        rep = lab.analytic_welfare(lab.example2())
        assert (rep.fpa, rep.opt) == pytest.approx((2.0, 2.0), abs=1e-12)

    @pytest.mark.parametrize("n", [4, 10, 50])
    def test_two_routes_agree(self, n):
        a = lab.analytic_welfare(lab.build_worst_case_instance(n))
        b = lab.worst_case_welfare(n)
        assert a.fpa == pytest.approx(b.fpa, abs=1e-10)
        assert a.opt == pytest.approx(b.opt, abs=1e-10)

    def test_bounds_formula(self):
        upper, lower = lab.lb_welfare_bounds(4)
        assert upper == pytest.approx(1 - (4 / 3) * (4 * E2) ** (1 / 3) * E2, rel=1e-15)
        assert lower == 0.75

    def test_bounds_limit(self):
        upper, _ = lab.lb_welfare_bounds(10 ** 7, check=False)
        assert upper == pytest.approx(TARGET, abs=1e-6)

    def test_bounds_reject_small(self):
        with pytest.raises(DomainError):
            lab.lb_welfare_bounds(2)

    @pytest.mark.parametrize("n", [4, 8, 30, 200, 1000])
    def test_poa_envelope(self, n):
        rep = lab.worst_case_welfare(n)
        assert rep.poa <= TARGET / (1 - 1 / n) + 1e-6
        assert rep.poa >= TARGET - 1e-9

    def test_approaches_target(self):
        gaps = [lab.worst_case_welfare(n).poa - TARGET for n in (10, 100, 1000)]
        assert gaps[0] > gaps[1] > gaps[2] > 0
        assert gaps[2] < 1e-3


class TestMonteCarlo:
    def test_example1(self):
        rep = lab.monte_carlo(lab.example1(), 1_000_000, 3)
        assert abs(rep.fpa - 2 / 3) <= 3 * rep.fpa_se
        assert rep.poa == 1.0

    def test_single_bidder(self):
        rep = lab.monte_carlo(lab.single_bidder(), 200_000, 5)
        assert rep.fpa == rep.opt
        assert abs(rep.fpa - 0.5) <= 3 * rep.fpa_se

    @pytest.mark.parametrize("make", [lab.example2, lab.example3])
    def test_fixtures(self, make):
        inst = make()
        mc = lab.monte_carlo(inst, 400_000, 9)
        exact = lab.analytic_welfare(inst)
        assert abs(mc.fpa - exact.fpa) <= 3 * mc.fpa_se + 1e-12
        assert abs(mc.opt - exact.opt) <= 3 * mc.opt_se + 1e-12

    def test_worst_case_n100(self):
        inst = lab.build_worst_case_instance(100)
        mc = lab.monte_carlo(inst, 1_000_000, 7)
        exact = lab.analytic_welfare(inst)
        assert abs(mc.poa - exact.poa) <= 3 * mc.poa_se

    def test_deterministic(self):
        inst = lab.example3()
        a = lab.monte_carlo(inst, 20_000, 42)
        b = lab.monte_carlo(inst, 20_000, 42)
        c = lab.monte_carlo(inst, 20_000, 43)
        assert a == b
        assert a.fpa != c.fpa

    def test_chunking_invariant(self):
        inst = lab.example1()
        a = lab.monte_carlo(inst, 30_000, 1, chunk=30_000)
        b = lab.monte_carlo(inst, 30_000, 1, chunk=30_000)
        assert a.fpa == b.fpa

    def test_minimum_samples(self):
        with pytest.raises(DomainError):
            lab.monte_carlo(lab.example1(), 100, 0)
