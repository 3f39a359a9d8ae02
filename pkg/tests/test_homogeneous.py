from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import akflow.homogeneous as hom
from akflow import invariants as inv
from akflow.charts import J_STD, OMEGA_STD, Chart, make_chart
from akflow.errors import (BlowUp, DegenerateMetric, EmptyCandidateSpace, IncompatiblePair, NotInvariant)
from akflow.frames import wedge
from akflow.homogeneous import (AFFINE_LABELS, SPACES, ReductiveSpace, affine_mu, affine_pair, as_float,
                                ce_differential, check_pair, decompose_vector_derivative, integrate_flow,
                                invariant_geometry, lie_omega_display, make_space, pair_invariants,
                                soliton_residual)

F = Fraction


def _c(n, brackets):
    c = hom._zeros_c(n)
    for (i, j), vec in brackets.items():
        hom._set_bracket(c, i, j, vec)
    return c


# -- spaces ---------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(SPACES))
def test_registered_spaces_are_exactly_valid(name):
    sp = make_space(name)
    assert all(x == 0 for x in sp.jacobi_residual().ravel())
    hb, mb = list(sp.h_basis), list(sp.m_basis)
    if hb:
        assert all(x == 0 for x in sp.c[np.ix_(hb, mb, hb)].ravel())
    assert all(x == 0 for x in ce_differential(sp, sp.Omega0).ravel())
    j0 = sp.J0
    assert all(x == 0 for x in (j0 @ j0 + np.eye(4, dtype=int)).ravel())
    assert np.min(np.linalg.eigvalsh(as_float(sp.g0))) > 0


def test_rejects_broken_jacobi():
    c = _c(4, {(0, 1): {2: 1}, (0, 2): {0: 1}})
    with pytest.raises(ValueError, match="Jacobi"):
        ReductiveSpace("bad", c, (0, 1, 2, 3), J_STD.astype(int), OMEGA_STD.astype(int))


def test_rejects_non_antisymmetric():
    c = hom._zeros_c(4)
    c[0, 1, 2] = F(1)
    with pytest.raises(ValueError, match="antisymmetric"):
        ReductiveSpace("bad", c, (0, 1, 2, 3), J_STD.astype(int), OMEGA_STD.astype(int))


def test_rejects_non_derivation_scaling():
    c = _c(4, {(0, 1): {2: 1}})
    with pytest.raises(ValueError, match="derivation"):
        ReductiveSpace("bad", c, (0, 1, 2, 3), hom._inv(hom.exact([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]])),
                       hom.exact([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]]),
                       scaling=(np.eye(4, dtype=int),))


def test_unknown_space():
    with pytest.raises(ValueError):
        make_space("nope")


def test_check_pair_errors():
    sp = make_space("affine")
    omega, g = affine_pair(1, 1)
    with pytest.raises(DegenerateMetric):
        check_pair(sp, omega, -g)
    with pytest.raises(IncompatiblePair):
        check_pair(sp, omega, 2 * g + hom.exact(np.diag([0, 0, 0, 1])))
    s = hom.exact(np.diag([2, F(1, 2), 1, 1]))  # symplectic, not ad(h)-equivariant
    with pytest.raises(NotInvariant):
        check_pair(sp, s.T @ omega @ s, s.T @ g @ s)


# -- Chevalley-Eilenberg --------------------------------------------------

@pytest.mark.parametrize("a,b", [(1, 1), (2, 3), (F(1, 2), 5)])
def test_affine_omega_closed(a, b):
    sp = make_space("affine", a=a, b=b)
    assert all(x == 0 for x in ce_differential(sp, sp.Omega0).ravel())


def test_zero_form():
    assert np.all(as_float(ce_differential(make_space("affine"), F(3))) == 0)


def test_non_invariant_form():
    sp = make_space("affine")
    alpha1 = hom.exact([1, 0, 0, 0])
    with pytest.raises(NotInvariant):
        ce_differential(sp, alpha1)


def test_heisenberg_differential():
    sp = make_space("kodaira_thurston")
    d = ce_differential(sp, hom.exact([0, 0, 1, 0]))
    want = -hom.exact(wedge(np.eye(4)[0], np.eye(4)[1]).astype(int))
    assert all(x == 0 for x in (d - want).ravel())
    assert isinstance(d[0, 1], Fraction)


def test_maurer_cartan_structure_equation():
    """d mu = -mu ^ mu, expanded entry by entry from the matrix display."""
    c = hom.affine_structure_constants()
    # each entry of mu as a covector over the 5 basis elements
    e = [affine_mu([F(int(k == l)) for k in range(5)]) for l in range(5)]
    entry = lambda r, s: np.array([e[l][r, s] for l in range(5)], dtype=object)
    for r in range(3):
        for s in range(3):
            mu_rs = entry(r, s)
            # d of a left-invariant 1-form: d phi(e_a, e_b) = -phi([e_a, e_b])
            d_mu = -np.einsum("abk,k->ab", c, mu_rs)
            mm = sum(np.outer(entry(r, k), entry(k, s)) - np.outer(entry(k, s), entry(r, k)) for k in range(3))
            assert all(x == 0 for x in (d_mu + mm).ravel()), (r, s)


# -- geometry -------------------------------------------------------------

def test_abelian_flat():
    geo = invariant_geometry(make_space("abelian"))
    for arr in (geo.nijenhuis, geo.riemann, geo.ric, geo.rho):
        assert all(x == 0 for x in np.asarray(arr).ravel())
    assert geo.exact


def test_cross_engine_kodaira_thurston():
    geo = invariant_geometry(make_space("kodaira_thurston"))
    ch = make_chart({"chart": "kodaira_thurston"})
    o = np.zeros(4)
    pk = inv.curvature_packet(ch, o)
    assert np.max(np.abs(as_float(geo.nijenhuis) - inv.nijenhuis(ch, o))) <= 1e-6
    assert np.max(np.abs(as_float(geo.ric) - pk.ric)) <= 1e-6
    assert abs(float(geo.scal) - pk.scal) <= 1e-6
    assert np.max(np.abs(as_float(geo.rho) - pk.rho)) <= 1e-6
    assert abs(geo.n_norm2 - inv.extract_invariants(ch, o).n_norm2) <= 1e-6


def test_affine_rhs_sign_pattern():
    rhs = invariant_geometry(make_space("affine", a=1, b=1)).flow_rhs()
    assert rhs.dOmega[0, 1] == 0
    assert rhs.dOmega[2, 3] > 0


@given(st.fractions(F(1, 4), 4, max_denominator=6), st.fractions(F(1, 4), 4, max_denominator=6))
def test_affine_rhs_closed_form(a, b):
    sp = make_space("affine", a=a, b=b)
    rhs = invariant_geometry(sp).flow_rhs()
    want_o = hom.exact([[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 4], [0, 0, -4, 0]])
    want_g = hom.exact(np.diag([0, 0, 4, 4]))
    assert all(x == 0 for x in (rhs.dOmega - want_o).ravel())
    assert all(x == 0 for x in (rhs.dg - want_g).ravel())


def test_hyperbolic_product_kaehler_einstein():
    geo = invariant_geometry(make_space("hyperbolic_product"))
    rhs = geo.flow_rhs()
    assert geo.scal == -4
    assert all(x == 0 for x in (rhs.dOmega - 2 * geo.omega).ravel())
    assert all(x == 0 for x in (rhs.dg - 2 * geo.g).ravel())


def test_float_pair_uses_float_arithmetic():
    geo = invariant_geometry(make_space("affine", a=1.5, b=0.7))
    assert not geo.exact
    rhs = geo.flow_rhs()
    assert abs(rhs.dOmega[2, 3] - 4) <= 1e-12


def _section_chart(a, b):
    """Chart on G/S^1 through the section (x1, y1, t, s) -> (x, y) translation times exp(t H) exp(s E)."""
    sp = make_space("affine", a=a, b=b)
    o0, j0 = as_float(sp.Omega0), as_float(sp.J0)

    def coframe(x):
        x = np.atleast_2d(x)
        one, zero = np.ones(len(x)), np.zeros(len(x))
        et, emt = np.exp(x[:, 2]), np.exp(-x[:, 2])
        s = np.array([[one, zero, zero], [x[:, 0], et, x[:, 3]], [x[:, 1], zero, emt]]).transpose(2, 0, 1)
        ds = np.zeros((len(x), 4, 3, 3))
        ds[:, 0, 1, 0] = 1
        ds[:, 1, 2, 0] = 1
        ds[:, 2, 1, 1] = et
        ds[:, 2, 2, 2] = -emt
        ds[:, 3, 1, 2] = 1
        mu = np.einsum("bij,bkjl->bkil", np.linalg.inv(s), ds)
        return np.stack([mu[:, :, 1, 0], mu[:, :, 2, 0], mu[:, :, 1, 1],
                         -(mu[:, :, 1, 2] + mu[:, :, 2, 1]) / 2], axis=1)

    om = lambda x: np.swapaxes(coframe(x), -1, -2) @ o0 @ coframe(x)
    jf = lambda x: np.linalg.solve(coframe(x), j0 @ coframe(x))
    dom = lambda x: np.all(np.abs(np.atleast_2d(x)) < 5, axis=1)
    return Chart("affine_section", {}, om, jf, dom), coframe


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2)])
def test_affine_section_chart_agrees(a, b):
    ch, coframe = _section_chart(a, b)
    p = np.array([0.1, -0.2, 0.3, 0.15])
    tens, expa = inv.flow_rhs(ch, p, both=True)
    e = coframe(p)[0]
    ei = np.linalg.inv(e)
    want = invariant_geometry(make_space("affine", a=a, b=b)).flow_rhs()
    assert np.max(np.abs(ei.T @ tens.dOmega @ ei - as_float(want.dOmega))) <= 1e-4
    assert np.max(np.abs(ei.T @ tens.dg @ ei - as_float(want.dg))) <= 1e-4
    assert np.max(np.abs(tens.dOmega - expa.dOmega)) <= 1e-3


# -- flow ------------------------------------------------------------------

def _fast_rhs(sp, omega, g):
    out = hom._float_rhs(sp)(np.stack([as_float(omega), as_float(g)]))
    return out[0], out[1]


@pytest.mark.parametrize("name", ["abelian", "kodaira_thurston"])
def test_fast_rhs_matches_exact_on_random_pairs(name):
    sp = make_space(name)
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = np.eye(4) + 0.25 * rng.standard_normal((4, 4))
        om, g = a.T @ as_float(sp.Omega0) @ a, a.T @ as_float(sp.g0) @ a
        want = invariant_geometry(sp, om, g).flow_rhs()
        d_om, d_g = _fast_rhs(sp, om, g)
        assert np.max(np.abs(d_om - as_float(want.dOmega))) <= 1e-9
        assert np.max(np.abs(d_g - as_float(want.dg))) <= 1e-9


@pytest.mark.parametrize("a,b", [(1, 1), (2, 1), (F(1, 3), F(5, 2))])
def test_fast_rhs_matches_exact_on_affine_family(a, b):
    sp = make_space("affine", a=a, b=b)
    want = invariant_geometry(sp).flow_rhs()
    d_om, d_g = _fast_rhs(sp, sp.Omega0, sp.g0)
    assert np.max(np.abs(d_om - as_float(want.dOmega))) <= 1e-12
    assert np.max(np.abs(d_g - as_float(want.dg))) <= 1e-12


def test_fast_rhs_matches_exact_on_hyperbolic_product():
    sp = make_space("hyperbolic_product")
    want = invariant_geometry(sp).flow_rhs()
    d_om, d_g = _fast_rhs(sp, sp.Omega0, sp.g0)
    assert np.max(np.abs(d_om - as_float(want.dOmega))) <= 1e-12
    assert np.max(np.abs(d_g - as_float(want.dg))) <= 1e-12


def test_affine_flow_line():
    tr = integrate_flow(make_space("affine"), T=2.0, dt=1e-3)
    for t in (0.5, 1.0, 2.0):
        om, _ = tr.state_at(t)
        assert abs(om[2, 3] - (1 + 4 * t)) <= 1e-6 * (1 + 4 * t)
        assert abs(om[0, 1] - 1) <= 1e-8
    assert tr.checks["j_squared"] <= 1e-8 and tr.checks["d_omega"] <= 1e-10


def test_abelian_constant():
    sp = make_space("abelian")
    tr = integrate_flow(sp, T=1.0, dt=0.1)
    for om, g in tr.states:
        assert np.all(om == as_float(sp.Omega0)) and np.all(g == as_float(sp.g0))


def test_rk4_order_on_nilmanifold():
    sp = make_space("kodaira_thurston")
    T = 1.0
    ref = integrate_flow(sp, T=T, dt=0.0125, with_diagnostics=False).states[-1]
    errs = []
    for dt in (0.2, 0.1):
        om, g = integrate_flow(sp, T=T, dt=dt, with_diagnostics=False).states[-1]
        errs.append(max(np.max(np.abs(om - ref[0])), np.max(np.abs(g - ref[1]))))
    assert errs[1] * 2 ** 3 <= errs[0]


def test_flow_compatibility_along_trajectory():
    tr = integrate_flow(make_space("kodaira_thurston"), T=2.0, dt=1e-2)
    assert tr.checks["j_squared"] <= 1e-8
    assert tr.checks["d_omega"] <= 1e-10
    assert tr.checks["min_g_eigenvalue"] > 0


def test_flow_bad_arguments():
    with pytest.raises(ValueError):
        integrate_flow(make_space("affine"), T=-1.0)
    with pytest.raises(ValueError):
        integrate_flow(make_space("affine"), T=1.0, dt=0.0)


def test_blow_up_reported(monkeypatch):
    def shrinking(y):
        return np.stack([np.zeros((4, 4)), -3.0 * np.eye(4)])

    monkeypatch.setattr(hom, "_float_rhs", lambda space: shrinking)
    with pytest.raises(BlowUp) as info:
        integrate_flow(make_space("affine"), T=1.0, dt=0.01)
    assert 0.0 < info.value.last_good_time < 1.0


def test_trajectory_csv():
    tr = integrate_flow(make_space("affine"), T=0.1, dt=1e-2, record_every=5)
    header = tr.csv_header()
    rows = tr.csv_rows()
    assert header[0] == "t" and len(rows) == len(tr.times) == 3
    assert all(len(r) == len(header) for r in rows)


def test_affine_dimensionless_diagnostics_constant():
    tr = integrate_flow(make_space("affine"), T=3.0, dt=1e-2)
    assert max(tr.invariant_drift().values()) <= 1e-4
    scal = np.array([d["scal"] for d in tr.diagnostics])
    assert np.ptp(scal) > 1.0  # the raw invariants do change


# -- vector fields -----------------------------------------------------------

def test_zero_field_decomposition():
    d = decompose_vector_derivative(make_space("affine"))
    assert abs(d.U) == 0 and abs(d.Y) == 0
    assert np.all(d.S == 0) and np.all(d.W == 0)


def test_euler_field_on_flat_chart():
    ch = make_chart({"chart": "flat"})
    p = np.array([0.2, -0.1, 0.3, 0.4])
    d = decompose_vector_derivative(ch, lambda x: np.atleast_2d(x), point=p)
    assert abs(d.Y - 1) <= 1e-8
    assert np.max(np.abs(d.S)) <= 1e-8 and np.max(np.abs(d.W)) <= 1e-8
    assert np.max(np.abs(d.lie_g - 2 * np.eye(4))) <= 1e-8


def test_euler_field_on_abelian_space():
    sp = make_space("abelian")
    d = decompose_vector_derivative(sp, [0.0, 0.0, 0.0, 0.0, 1.0])
    assert abs(d.Y - 1) <= 1e-12 and np.max(np.abs(d.lie_g - 2 * np.eye(4))) <= 1e-12


@pytest.mark.parametrize("k", range(4))
def test_invariant_field_lie_derivative_matches_cartan_formula(k):
    sp = make_space("kodaira_thurston")
    cands = sp.candidate_fields()
    coeffs = np.zeros(len(cands))
    coeffs[k] = 1.0
    d = decompose_vector_derivative(sp, coeffs)
    v = as_float(cands[k].value)
    om = as_float(sp.Omega0)
    cartan = ce_differential(sp, v @ om) + np.einsum("i,ijk->jk", v, ce_differential(sp, om))
    assert np.max(np.abs(d.lie_omega - cartan)) <= 1e-12


@pytest.mark.parametrize("name", ["darboux", "static"])
def test_chart_lie_derivatives_match_expansion(name):
    from conftest import chart_by_name

    ch = chart_by_name(name)
    p = ch.sample(np.random.default_rng(3), 1)[0]

    def field(x):
        x = np.atleast_2d(x)
        return np.stack([0.3 + x[:, 1] ** 2, -0.2 * x[:, 0], 0.1 + x[:, 0] * x[:, 3], 0.4 * x[:, 2]], axis=1)

    d = decompose_vector_derivative(ch, field, point=p)
    assert d.residual <= 1e-3
    assert np.max(np.abs(lie_omega_display(d.U, d.W, d.Y, d.V, d.N, d.eta) - d.lie_omega)) <= 1e-3


# -- solitons ----------------------------------------------------------------

def test_flat_soliton():
    cert = soliton_residual(make_space("abelian"))
    assert cert.passed and cert.lam == 0 and all(v == 0 for v in cert.V)
    assert cert.residual <= 1e-10


def test_kaehler_einstein_static():
    sp = make_space("hyperbolic_product")
    cert = soliton_residual(sp, mode="static")
    assert cert.passed and abs(cert.lam - 2) <= 1e-4 and cert.residual <= 1e-4
    rhs = invariant_geometry(sp).flow_rhs()
    assert np.max(np.abs(as_float(rhs.dOmega) - cert.lam * as_float(sp.Omega0))) <= 1e-3
    assert np.max(np.abs(as_float(rhs.dg) - cert.lam * as_float(sp.g0))) <= 1e-3


def test_affine_soliton_relations():
    cert = soliton_residual(make_space("affine"))
    assert cert.passed and abs(cert.lam - 4) <= 1e-10
    assert abs(cert.V[0] + 2) <= 1e-10
    rel = {k: v for k, v in cert.conditions.items() if k.startswith("relation_")}
    assert set(rel) == {"relation_Q", "relation_R", "relation_A", "relation_B"}
    assert max(rel.values()) <= 1e-3


def test_affine_is_not_static():
    assert not soliton_residual(make_space("affine"), mode="static").passed


def test_affine_has_no_gradient_candidates():
    with pytest.raises(EmptyCandidateSpace):
        soliton_residual(make_space("affine"), mode="gradient")


def test_gradient_conditions_reported():
    cert = soliton_residual(make_space("abelian"), mode="gradient")
    assert {"d_v_flat", "U_minus_conjV_N", "im_Y", "im_W"} <= set(cert.conditions)
    assert cert.passed


def test_nilmanifold_not_a_soliton_in_candidate_space():
    cert = soliton_residual(make_space("kodaira_thurston"))
    assert not cert.passed and cert.residual > 0.1


def test_empty_candidate_list():
    with pytest.raises(EmptyCandidateSpace):
        soliton_residual(make_space("affine"), candidates=[])


def test_bad_mode():
    with pytest.raises(ValueError):
        soliton_residual(make_space("affine"), mode="sideways")


def test_pair_invariants_reproduce_rhs():
    sp = make_space("kodaira_thurston")
    geo = invariant_geometry(sp)
    pi = pair_invariants(sp, geo=geo)
    d_om, d_g = inv.flow_expansion(pi.R, pi.B, pi.Q, pi.A, pi.eta)
    rhs = geo.flow_rhs()
    assert np.max(np.abs(d_om - as_float(rhs.dOmega))) <= 1e-10
    assert np.max(np.abs(d_g - as_float(rhs.dg))) <= 1e-10


def test_labels_and_json():
    sp = make_space("affine", a=2, b=3)
    js = sp.to_json()
    assert tuple(js["labels"]) == AFFINE_LABELS and js["params"] == {"a": "2", "b": "3"}
