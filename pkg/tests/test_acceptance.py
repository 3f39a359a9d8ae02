"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a ``criterion N: PASS|FAIL ...`` line; the lines are
printed in the pytest terminal summary (and directly when this file is run
as a script).
"""
import math
import random
import time

import numpy as np
import pytest

from akflow import conventions as conv
from akflow.cartan import cartan_test, cauchy_riemann_tableau, prolongation_dim
from akflow.charts import eval_structure, make_chart
from akflow.homogeneous import as_float, integrate_flow, invariant_geometry, make_space, soliton_residual
from akflow.invariants import curvature_packet, extract_invariants, flow_rhs, nijenhuis, ricci_form
from akflow.static import HoloFn, make_static_chart, nijenhuis_profile_error, radial_length, verify_static

from conftest import CHART_NAMES, chart_by_name, sample_points
from test_cartan import brute_prolongation, random_tableau

RESULTS: dict = {}


def record(key, ok, detail):
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[key] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def affine_run():
    t0 = time.perf_counter()
    tr = integrate_flow(make_space("affine", a=1, b=1), T=10.0, dt=1e-3, record_every=100)
    return tr, time.perf_counter() - t0


def test_criterion_01_affine_flow(affine_run):
    tr, elapsed = affine_run
    errs = []
    for t in (1.0, 5.0, 10.0):
        om, _ = tr.state_at(t)
        errs.append(abs(om[2, 3] ** 2 - (4 * t + 1)) / (1 + 4 * t))
    p_err = max(abs(om[0, 1] - 1.0) for om, _ in tr.states)
    ok = max(errs) <= 1e-6 and p_err <= 1e-8 and elapsed < 5.0
    record("1", ok, f"max |q^2-(4t+1)|/(1+4t) = {max(errs):.3e} (tol 1e-6), max |p-1| = {p_err:.1e}, "
                    f"runtime {elapsed:.2f} s (derived flow line is q = 1 + 4t; see ledger)")


def test_criterion_01_companion_linear_flow_line(affine_run):
    tr, elapsed = affine_run
    errs = [abs(tr.state_at(t)[0][2, 3] - (1 + 4 * t)) / (1 + 4 * t) for t in (1.0, 5.0, 10.0)]
    p_err = max(abs(om[0, 1] - 1.0) for om, _ in tr.states)
    ok = max(errs) <= 1e-6 and p_err <= 1e-8 and elapsed < 5.0
    record("1b", ok, f"max |q-(1+4t)|/(1+4t) = {max(errs):.3e}, max |p-1| = {p_err:.1e}, runtime {elapsed:.2f} s")


def test_criterion_02_static_normal_form():
    t0 = time.perf_counter()
    worst = {}
    ok = True
    for h in (HoloFn((1.0,)), HoloFn((1.0, 0.5))):
        ch = make_static_chart(h)
        pts = ch.sample(np.random.default_rng(7), 50)
        assert np.all(pts[:, 0] ** 2 + pts[:, 1] ** 2 <= 0.49 + 1e-12)
        rep = verify_static(ch, n_samples=50, seed=7)
        for k in ("rho", "ric_anti", "R", "B", "Q", "A"):
            worst[k] = max(worst.get(k, 0.0), rep.residuals[k])
            ok &= rep.residuals[k] <= 1e-4
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    record("2", ok, "max " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" (tol 1e-4), {elapsed:.1f} s")


def test_criterion_03_nijenhuis_profile():
    worst = 0.0
    for h in (HoloFn((1.0,)), HoloFn((1.0, 0.5)), HoloFn((0.8, 0.3j)), HoloFn((1.0,), (1.0, -0.4))):
        ch = make_static_chart(h)
        for p in ch.sample(np.random.default_rng(3), 20):
            worst = max(worst, nijenhuis_profile_error(ch, p))
    ok = worst <= 1e-4 and conv.NIJENHUIS_C == 1.0
    record("3", ok, f"max relative error {worst:.2e} (tol 1e-4), c = {conv.NIJENHUIS_C}")


def _integrability(coefficient):
    worst = 0.0
    for h in (HoloFn((1.0,)), HoloFn((1.0, 0.5))):
        ch = make_static_chart(h)
        for p in ch.sample(np.random.default_rng(7), 50):
            worst = max(worst, extract_invariants(ch, p).integrability_residual(coefficient))
    return worst


def test_criterion_04_integrability():
    worst = _integrability(0.5)
    record("4", worst <= 1e-3, f"max |F N + 1/2 eps H N| = {worst:.3e} (tol 1e-3; the 1/2 form is "
                               f"not satisfied, see ledger)")


def test_criterion_04_companion_corrected_form():
    worst = _integrability(1.0)
    record("4b", worst <= 1e-3, f"max |F N + eps H N| = {worst:.3e} (tol 1e-3)")


def test_criterion_05_scalar_identity():
    worst = 0.0
    for name in CHART_NAMES:
        ch = chart_by_name(name)
        for p in sample_points(ch, 100, seed=5):
            inv = extract_invariants(ch, p, strict=False)
            worst = max(worst, abs(curvature_packet(ch, p).scal + 8 * inv.n_norm2 + 8 * inv.R))
    record("5", worst <= 1e-4, f"max |Scal + 8|N|^2 + 8R| = {worst:.2e} over 5 charts x 100 points (tol 1e-4)")


def test_criterion_06_kaehler_reduction():
    ch = make_chart({"chart": "hyperbolic_product"})
    worst_rho, worst_rhs = 0.0, 0.0
    for p in sample_points(ch, 20, seed=6):
        g, omega, j = eval_structure(ch, p)
        pk = curvature_packet(ch, p)
        worst_rho = max(worst_rho, float(np.max(np.abs(pk.rho - ricci_form(pk.ric, j)))))
        rhs = flow_rhs(ch, p)
        worst_rhs = max(worst_rhs, float(np.max(np.abs(rhs.dOmega - 2 * omega))),
                        float(np.max(np.abs(rhs.dg - 2 * g))))
    ok = worst_rho <= 1e-4 and worst_rhs <= 1e-4
    record("6", ok, f"max |rho - Ric form| = {worst_rho:.1e}, max |RHS - (2 Omega, 2 g)| = {worst_rhs:.1e} (tol 1e-4)")


def test_criterion_07_incompleteness():
    res = radial_length(make_static_chart(HoloFn((1.0,))))
    prof = [n for _, n in res.n_profile]
    mono = all(b > a for a, b in zip(prof, prof[1:]))
    err = abs(res.length - math.pi / 2)
    record("7", err <= 1e-6 and mono, f"|length - pi/2| = {err:.1e} (tol 1e-6), |N| at r = 1-10^-k: "
                                      + ", ".join(f"{n:.2f}" for n in prof))


def test_criterion_08_cartan_engine():
    t0 = time.perf_counter()
    rep = cartan_test(cauchy_riemann_tableau())
    ok = rep.characters == [2, 0] and rep.prolongation_dim == 2 and rep.involutive
    rng = random.Random(8)
    for _ in range(1000):
        r = cartan_test(random_tableau(rng, 4, 4, 6), trials=5)
        ok &= r.prolongation_dim <= sum((k + 1) * s for k, s in enumerate(r.characters))
    rng = random.Random(9)
    mismatches = 0
    for _ in range(150):
        t = random_tableau(rng, 3, 3, 9)
        mismatches += prolongation_dim(t) != brute_prolongation(t)
    elapsed = time.perf_counter() - t0
    ok &= mismatches == 0 and elapsed < 60
    record("8", ok, f"CR characters {rep.characters}, prolongation {rep.prolongation_dim}, involutive "
                    f"{rep.involutive}; 1000 random tableaux, {mismatches} oracle mismatches in 150; {elapsed:.1f} s")


def test_criterion_09_cross_engine():
    geo = invariant_geometry(make_space("kodaira_thurston"))
    ch = make_chart({"chart": "kodaira_thurston"})
    o = np.zeros(4)
    pk = curvature_packet(ch, o)
    eng = max(float(np.max(np.abs(as_float(geo.nijenhuis) - nijenhuis(ch, o)))),
              float(np.max(np.abs(as_float(geo.ric) - pk.ric))), abs(float(geo.scal) - pk.scal),
              float(np.max(np.abs(as_float(geo.rho) - pk.rho))))
    routes = 0.0
    for name in CHART_NAMES:
        c = chart_by_name(name)
        for p in sample_points(c, 20, seed=9):
            tens, expa = flow_rhs(c, p, both=True)
            routes = max(routes, float(np.max(np.abs(tens.dOmega - expa.dOmega))),
                         float(np.max(np.abs(tens.dg - expa.dg))))
    record("9", eng <= 1e-6 and routes <= 1e-3,
           f"chart vs algebra {eng:.1e} (tol 1e-6); tensorial vs invariant RHS {routes:.1e} (tol 1e-3)")


def test_criterion_10_soliton_suite(affine_run):
    flat = soliton_residual(make_space("abelian"))
    ke = soliton_residual(make_space("hyperbolic_product"), mode="static")
    tr, _ = affine_run
    drift = max(tr.invariant_drift().values())
    ok = (flat.passed and flat.lam == 0 and all(v == 0 for v in flat.V) and flat.residual <= 1e-10
          and ke.passed and abs(ke.lam - 2) <= 1e-4 and ke.residual <= 1e-4 and drift <= 1e-4)
    record("10", ok, f"flat lambda={flat.lam} residual={flat.residual:.1e}; KE static lambda={ke.lam:.6f}; "
                     f"affine dimensionless drift {drift:.1e} over [0, 10] (tol 1e-4)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
