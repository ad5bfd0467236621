"""Acceptance criteria, one test each, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from poaforge import equilibrium_lab as lab
from poaforge import fixtures
from poaforge import worst_case_analysis as wca
from poaforge.fuzz import fuzz_case, random_layered_instance
from poaforge.instance_model import validate
from poaforge.reduction_pipeline import layer
from poaforge.welfare_engine import poa

TARGET = 1.0 - math.exp(-2.0)
FUZZ_SEEDS = range(1000)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail} [{elapsed:.1f}s]")
    return emit


@pytest.fixture(scope="module")
def fuzz_run():
    t0 = time.perf_counter()
    rows = [fuzz_case(s) for s in FUZZ_SEEDS]
    return rows, time.perf_counter() - t0


def test_1_analytic_optimum(report):
    t0 = time.perf_counter()
    best = wca.optimize_worst_case()
    h = wca.h_mu(1 - 4 * math.exp(-2), 1.0)
    elapsed = time.perf_counter() - t0
    ok = (abs(best.objective - TARGET) <= 1e-9 and abs(best.lam - (1 - 4 * math.exp(-2))) <= 1e-6
          and abs(best.mu - 1.0) <= 1e-6 and abs(h - 0.25) <= 1e-12 and elapsed < 10)
    report(1, ok, f"objective={best.objective:.12f} lambda={best.lam:.9f} mu={best.mu:.9f} "
                  f"h={h:.15f}", elapsed)
    assert ok


def test_2_oracle_equivalence(report):
    t0 = time.perf_counter()
    gap = residual = 0.0
    for lam, mu in wca.feasible_grid(30, 30):
        gap = max(gap, abs(wca.poa_objective(lam, mu) - wca.poa_integral(lam, mu)))
        x = np.linspace(0.0, lam, 52)[1:-1]
        residual = max(residual, float(np.max(wca.ode_residual(lam, mu, x))))
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-8 and residual <= 1e-6 and elapsed < 60
    report(2, ok, f"max |closed form - quadrature|={gap:.2e} max ODE residual={residual:.2e}",
           elapsed)
    assert ok


def test_3_discretized_welfare(report):
    t0 = time.perf_counter()
    vals = {m: poa(wca.discretized_worst_case(m)).poa for m in (500, 1000, 2000, 4000)}
    d1 = abs(vals[1000] - vals[500])
    d2 = abs(vals[2000] - vals[1000])
    d3 = abs(vals[4000] - vals[2000])
    elapsed = time.perf_counter() - t0
    ok = abs(vals[2000] - TARGET) <= 5e-4 and d1 / d2 >= 1.8 and d2 / d3 >= 1.8
    report(3, ok, f"poa(2000)={vals[2000]:.9f} differences {d1:.2e} {d2:.2e} {d3:.2e}", elapsed)
    assert ok


def test_4_finite_instance(report):
    t0 = time.perf_counter()
    n = 1000
    inst = lab.build_worst_case_instance(n)
    exact = lab.analytic_welfare(inst)
    mc = lab.monte_carlo(inst, 1_000_000, seed=2024)
    elapsed = time.perf_counter() - t0
    ok = (exact.fpa <= TARGET + 1e-9 and exact.opt >= 1 - 1 / n
          and TARGET - 2e-3 <= exact.poa <= TARGET + 1e-3
          and abs(mc.fpa - exact.fpa) <= 3 * mc.fpa_se
          and abs(mc.opt - exact.opt) <= 3 * mc.opt_se)
    report(4, ok, f"fpa={exact.fpa:.9f} opt={exact.opt:.9f} poa={exact.poa:.9f} "
                  f"mc fpa z={(mc.fpa - exact.fpa) / mc.fpa_se:+.2f} "
                  f"mc opt z={(mc.opt - exact.opt) / mc.opt_se:+.2f}", elapsed)
    assert ok


@pytest.mark.xfail(strict=True, reason="the stated 0.8689 disagrees with the exact value "
                                       "0.87663 of this instance")
def test_5_hht_fixture(report):
    t0 = time.perf_counter()
    value = poa(fixtures.hht(4000)).poa
    exact = fixtures.hht_poa_exact(0.57)
    elapsed = time.perf_counter() - t0
    ok = abs(value - 0.8689) <= 1e-3
    report(5, ok, f"poa(m=4000)={value:.6f}, closed form {exact:.6f}, target 0.8689 +- 1e-3 "
                  "(known unattainable, strict xfail)", elapsed)
    assert abs(value - exact) <= 1e-4
    assert ok


def test_6_equilibrium_certification(report):
    t0 = time.perf_counter()
    cases = [("example1", lab.example1(), 1e-9), ("example2", lab.example2(), 1e-9),
             ("example3", lab.example3(), 1e-6),
             ("worstcase n=50", lab.build_worst_case_instance(50), 1e-6)]
    parts, ok = [], True
    for name, inst, tol in cases:
        rep = lab.best_response_check(inst, 200, 400, tol)
        ok &= rep.max_regret <= tol
        parts.append(f"{name}={rep.max_regret:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    report(6, ok, "max regret " + " ".join(parts), elapsed)
    assert ok


def test_7_reduction_fuzz(report, fuzz_run):
    fuzz_rows, elapsed = fuzz_run
    bad = [r for r in fuzz_rows if not r["ok"]]
    worst = min(r["poa_out"] for r in fuzz_rows)
    iters = max(r["iterations"] - 2 * r["psi"] for r in fuzz_rows)
    ok = not bad and len(fuzz_rows) >= 1000 and elapsed < 300
    detail = (f"{len(fuzz_rows)} seeds, {len(bad)} failing traces, min output poa {worst:.9f}, "
              f"max(iterations - 2 psi)={iters}")
    if bad:
        detail += f"; first failure seed {bad[0]['seed']}: {bad[0]['problems'][:2]}"
    report(7, ok, detail, elapsed)
    assert ok


def test_8_welfare_identities(report, fuzz_run):
    fuzz_rows = fuzz_run[0]
    t0 = time.perf_counter()
    gaps = [g for r in fuzz_rows for g in r["halve_gaps"]]
    halve_gap = max(max(g) for g in gaps)

    rng = np.random.default_rng(8)
    layer_gap, layered = 0.0, 0
    while layered < 100:
        inst = random_layered_instance(rng, int(rng.integers(1, 4)), int(rng.integers(0, 6)))
        real = inst.real_rows.copy()
        for j in range(inst.columns):
            real[:, j] = rng.permutation(real[:, j])
        shuffled = inst.replace(table=np.vstack([real, inst.l_row[None, :]]))
        if not validate(shuffled).ok:
            continue
        a, b = poa(shuffled, check=False), poa(layer(shuffled))
        layer_gap = max(layer_gap, abs(a.fpa - b.fpa) / a.fpa, abs(a.opt - b.opt) / a.opt)
        layered += 1

    scale_bad = 0
    scale_gap = 0.0
    for _ in range(100):
        inst = random_layered_instance(rng, int(rng.integers(0, 4)), int(rng.integers(0, 6)))
        base = poa(inst).poa
        # power-of-two factors are exact in binary floating point
        scale_bad += poa(inst.scaled(2.0 ** int(rng.integers(-8, 9)))).poa != base
        scale_gap = max(scale_gap, abs(poa(inst.scaled(float(rng.uniform(0.1, 10)))).poa - base))
    elapsed = time.perf_counter() - t0
    ok = (len(gaps) > 0 and halve_gap <= 1e-9 and layer_gap <= 1e-12 and scale_bad == 0
          and scale_gap <= 1e-14)
    report(8, ok, f"{len(gaps)} halve splits max gap {halve_gap:.1e}; layer rel gap "
                  f"{layer_gap:.1e}; scaling: {scale_bad} inexact power-of-two cases, "
                  f"general factor gap {scale_gap:.1e}", elapsed)
    assert ok
