import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from akflow import conventions as conv
from akflow.charts import make_chart
from akflow.errors import InvalidFunction, PathThroughSingularity
from akflow.invariants import extract_invariants
from akflow.static import (HoloFn, StaticChart, make_static_chart, nijenhuis_profile_error, radial_length,
                           static_generality_tableau, verify_static)

BATTERY = [HoloFn((1.0,)), HoloFn((1.0, 0.5)), HoloFn((0.8, 0.3j)), HoloFn((1.0,), (1.0, -0.4))]


def test_parse_round_trip():
    h = HoloFn.parse("num=[1,0.5];den=[1]")
    assert h.numerator == (1 + 0j, 0.5 + 0j) and h.denominator == (1 + 0j,)
    assert abs(h(0.2) - 1.1) <= 1e-15


@pytest.mark.parametrize("text", ["den=[1]", "num=[0];den=[1]", "num=[1];den=[0,0]"])
def test_invalid_functions(text):
    with pytest.raises(InvalidFunction):
        HoloFn.parse(text)


def test_exclusion_rule():
    h = HoloFn((0.0, 1.0))
    assert not h.admissible(0.005)
    assert h.admissible(0.5)
    ch = make_static_chart(h)
    assert not ch.in_domain([[0.005, 0.0, 0.0, 0.0]])[0]
    assert not ch.in_domain([[0.995, 0.0, 0.0, 0.0]])[0]


def test_omega_coefficient_at_half():
    ch = make_static_chart(HoloFn((1.0,)))
    omega = ch.omega_fn(np.array([[0.5, 0.0, 1.3, -0.4]]))[0]
    assert abs(omega[0, 1] - 4 / 3) <= 1e-12


def test_metric_positive_on_samples():
    for h in BATTERY:
        ch = make_static_chart(h)
        pts = ch.sample(np.random.default_rng(0), 30)
        assert np.all(np.linalg.eigvalsh(ch.metric_fn(pts)) > 0)


@pytest.mark.parametrize("h", BATTERY[:2])
def test_verify_static_passes(h):
    rep = verify_static(make_static_chart(h), n_samples=50, seed=7)
    assert rep.passed and not rep.trivial
    assert rep.residuals["R"] <= 1e-4


def test_verify_static_flat_is_trivial():
    rep = verify_static(make_chart({"chart": "flat"}), n_samples=10)
    assert rep.passed and rep.trivial


def test_verify_static_fails_on_non_static_chart():
    rep = verify_static(make_chart({"chart": "darboux"}), n_samples=5)
    assert not rep.passed


def test_tolerance_overrides():
    ch = make_static_chart(HoloFn((1.0,)))
    rep = verify_static(ch, n_samples=3, tolerances={"rho": 1e-30})
    assert not rep.passed
    with pytest.raises(ValueError):
        verify_static(ch, n_samples=3, tolerances={"nope": 1.0})
    with pytest.raises(ValueError):
        verify_static(ch, n_samples=3, tolerances={"rho": 0.0})


def test_report_json_deterministic():
    ch = make_static_chart(HoloFn((1.0,)))
    a = verify_static(ch, n_samples=5, seed=3).to_json()
    b = verify_static(ch, n_samples=5, seed=3).to_json()
    assert a == b and a["conventions"] == conv.ledger()


@pytest.mark.parametrize("h", BATTERY)
def test_nijenhuis_profile_and_lambda(h):
    ch = make_static_chart(h)
    for p in ch.sample(np.random.default_rng(21), 5):
        assert nijenhuis_profile_error(ch, p) <= 1e-4
        assert abs(extract_invariants(ch, p).R) <= 1e-4


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(0.3, 1.5), st.floats(-0.4, 0.4))
def test_profile_property(x, y, u, v, c0, c1):
    if x * x + y * y > 0.49:
        return
    h = HoloFn((c0, c1))
    if not h.admissible(complex(x, y)):
        return
    assert nijenhuis_profile_error(make_static_chart(h), np.array([x, y, u, v])) <= 1e-4


def test_radial_length_unit():
    res = radial_length(make_static_chart(HoloFn((1.0,))))
    assert abs(res.length - math.pi / 2) <= 1e-6
    profile = [n for _, n in res.n_profile]
    assert all(b > a for a, b in zip(profile, profile[1:]))
    assert profile[-1] > 50


def test_radial_length_scales_with_h():
    res = radial_length(make_static_chart(HoloFn((2.0,))), direction=1j, z2=0.3 - 0.2j)
    assert abs(res.length - math.pi / 4) <= 1e-6


@pytest.mark.parametrize("h", BATTERY)
def test_incompleteness_witness(h):
    res = radial_length(make_static_chart(h), direction=np.exp(0.4j))
    assert math.isfinite(res.length)
    profile = [n for _, n in res.n_profile]
    assert all(b > a for a, b in zip(profile, profile[1:]))


def test_path_through_zero():
    ch = make_static_chart(HoloFn((-0.5, 1.0)))
    with pytest.raises(PathThroughSingularity):
        radial_length(ch, direction=1.0)
    assert math.isfinite(radial_length(ch, direction=-1.0).length)


def test_static_chart_type():
    ch = make_chart({"chart": "static", "params": {"num": [1, 0.5]}})
    assert isinstance(ch, StaticChart)


def test_generality_tableau():
    t, rep = static_generality_tableau()
    assert t.n == 2 and t.m == 2 and t.dim == 2
    assert rep.characters == [2, 0] and rep.prolongation_dim == 2 and rep.involutive
