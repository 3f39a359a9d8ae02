"""Static normal form built from a holomorphic function h(z1) on the unit disk.

With ``f = 1 / (|h|^2 (1 - |z1|^2))`` the chart carries

    Omega = f dx1^dy1 + dx2^dy2
    g     = f |dz1|^2 + (1 + |z1|^2)/(1 - |z1|^2) |dz2|^2 - 2 Re(z1 dz2^2) / (1 - |z1|^2)

and ``J`` is recovered from ``g(X, Y) = Omega(X, JY)``.  The unitary coframe
is ``(dz1 / (h sqrt(1-|z1|^2)), (dz2 - conj(z1) dz2bar) / sqrt(1-|z1|^2))`` up
to order and phase, so the z2 block is unimodular and J squares to -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import conventions as conv
from .cartan import CartanReport, Tableau, cartan_test, cauchy_riemann_tableau
from .charts import Chart, eval_structure, register_chart_family
from .errors import InvalidFunction, PathThroughSingularity
from .fd import DEFAULT_STEP
from .invariants import (CURVATURE_TOL, THIRD_ORDER_TOL, curvature_packet, extract_invariants,
                         frame_nijenhuis, g_norm2)

DEFAULT_DELTA = 1e-2


@dataclass(frozen=True)
class HoloFn:
    """Rational function ``h = num / den`` with coefficients in increasing degree."""

    numerator: tuple
    denominator: tuple = (1.0,)
    exclusion_radius: float = DEFAULT_DELTA

    def __post_init__(self):
        num = tuple(complex(c) for c in self.numerator)
        den = tuple(complex(c) for c in self.denominator)
        if not den or all(c == 0 for c in den):
            raise InvalidFunction("denominator polynomial is identically zero")
        if not num or all(c == 0 for c in num):
            raise InvalidFunction("numerator polynomial is identically zero")
        if not self.exclusion_radius > 0:
            raise InvalidFunction("exclusion radius must be positive")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @classmethod
    def parse(cls, text: str, exclusion_radius: float = DEFAULT_DELTA) -> "HoloFn":
        """Parse ``"num=[1,0.5];den=[1]"``; complex entries use Python syntax (``1+2j``)."""
        parts = {}
        for chunk in text.split(";"):
            if not chunk.strip():
                continue
            key, _, val = chunk.partition("=")
            vals = val.strip().strip("[]")
            parts[key.strip()] = [complex(v.replace(" ", "")) for v in vals.split(",") if v.strip()]
        if "num" not in parts:
            raise InvalidFunction(f"missing num=[...] in {text!r}")
        return cls(tuple(parts["num"]), tuple(parts.get("den", [1.0])), exclusion_radius)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        num = np.polynomial.polynomial.polyval(z, np.array(self.numerator))
        den = np.polynomial.polynomial.polyval(z, np.array(self.denominator))
        return num / den

    def admissible(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        d = self.exclusion_radius
        with np.errstate(divide="ignore", invalid="ignore"):
            hz = np.abs(self(z))
        return (np.abs(z) <= 1 - d) & (hz >= d) & (hz <= 1 / d) & np.isfinite(hz)

    def to_json(self) -> dict:
        c = lambda v: [x.real if x.imag == 0 else str(x) for x in v]
        return {"num": c(self.numerator), "den": c(self.denominator), "delta": self.exclusion_radius}


def _blocks(h: HoloFn, x: np.ndarray):
    x = np.atleast_2d(x)
    z = x[:, 0] + 1j * x[:, 1]
    r2 = np.abs(z) ** 2
    f = 1.0 / (np.abs(h(z)) ** 2 * (1.0 - r2))
    a, b = z.real, z.imag
    nb = x.shape[0]
    omega = np.zeros((nb, 4, 4))
    omega[:, 0, 1], omega[:, 1, 0] = f, -f
    omega[:, 2, 3], omega[:, 3, 2] = 1.0, -1.0
    g = np.zeros((nb, 4, 4))
    g[:, 0, 0] = g[:, 1, 1] = f
    g[:, 2, 2] = (1 + r2 - 2 * a) / (1 - r2)
    g[:, 3, 3] = (1 + r2 + 2 * a) / (1 - r2)
    g[:, 2, 3] = g[:, 3, 2] = 2 * b / (1 - r2)
    return omega, g


@dataclass(frozen=True)
class StaticChart(Chart):
    h: HoloFn = field(default=None, compare=False)


def make_static_chart(h: HoloFn, fd_step: float = DEFAULT_STEP) -> StaticChart:
    if not isinstance(h, HoloFn):
        raise InvalidFunction(f"expected HoloFn, got {type(h).__name__}")

    def omega_fn(x):
        return _blocks(h, x)[0]

    def j_fn(x):
        omega, g = _blocks(h, x)
        # g = Omega J
        j = np.zeros_like(g)
        j[:, 0:2, 0:2] = np.linalg.solve(omega[:, 0:2, 0:2], g[:, 0:2, 0:2])
        j[:, 2:4, 2:4] = np.linalg.solve(omega[:, 2:4, 2:4], g[:, 2:4, 2:4])
        return j

    def domain(x):
        x = np.atleast_2d(x)
        return h.admissible(x[:, 0] + 1j * x[:, 1])

    def sampler(rng, n, rmax=0.7):
        out = []
        while len(out) < n:
            r = rmax * np.sqrt(rng.uniform())
            t = rng.uniform(0, 2 * np.pi)
            pt = np.array([r * np.cos(t), r * np.sin(t), *rng.uniform(-1.0, 1.0, 2)])
            # keep a margin so finite-difference stencils stay admissible
            zs = pt[0] + 1j * pt[1] + 0.01 * np.exp(2j * np.pi * np.arange(8) / 8)
            if np.all(h.admissible(zs)):
                out.append(pt)
        return np.array(out)

    return StaticChart("static", {"h": h.to_json()}, omega_fn, j_fn, domain, fd_step=fd_step,
                       sampler=sampler, h=h)


def _static_factory(num=(1.0,), den=(1.0,), delta=DEFAULT_DELTA, **_):
    return make_static_chart(HoloFn(tuple(num), tuple(den), delta))


register_chart_family("static", _static_factory)


# --------------------------------------------------------------------------
# verification

@dataclass
class StaticReport:
    chart: str
    params: dict
    n_samples: int
    seed: int
    residuals: dict
    tolerances: dict
    trivial: bool
    passed: bool

    def to_json(self) -> dict:
        return {"chart": self.chart, "params": self.params, "n_samples": self.n_samples, "seed": self.seed,
                "residuals": self.residuals, "tolerances": self.tolerances, "trivial_kaehler": self.trivial,
                "pass": self.passed, "conventions": conv.ledger()}


def nijenhuis_profile_error(chart: StaticChart, p) -> float:
    """Relative error of ``|N_1|`` against ``c |h(z1)| / sqrt(1 - |z1|^2)`` in the adapted coframe."""
    p = np.asarray(p, dtype=float)
    z = p[0] + 1j * p[1]
    expected = conv.NIJENHUIS_C * abs(chart.h(z)) / np.sqrt(1.0 - abs(z) ** 2)
    return abs(float(np.linalg.norm(frame_nijenhuis(chart, p))) - expected) / expected


def verify_static(chart: Chart, n_samples: int = 50, seed: int = 0,
                  tolerances: dict | None = None) -> StaticReport:
    """Check the static conditions at seeded sample points of a chart.

    Reports the largest ``|rho|_g``, ``|Ric^anti|_g``, ``|R|``, ``|B|``, ``|Q|``,
    ``|A|`` and the integrability residual. ``integrability`` is the relation
    ``F_ij conj(N_j) + eps_ij H conj(N_j) = 0`` that holds on static charts;
    the variant with ``1/2 eps_ij`` is reported as ``integrability_half_eps``
    for information only.  On static charts the Nijenhuis profile is checked too.
    Charts with ``N = 0`` everywhere are flagged trivial (Kaehler).
    ``tolerances`` overrides individual pass thresholds by residual name.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    for k, v in (tolerances or {}).items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise ValueError(f"tolerance {k!r} must be positive")
    rng = np.random.default_rng(seed)
    pts = chart.sample(rng, n_samples)
    keys = ["rho", "ric_anti", "R", "B", "Q", "A", "integrability", "integrability_half_eps", "max_abs_N"]
    if isinstance(chart, StaticChart):
        keys.append("nijenhuis_profile")
    res = {k: 0.0 for k in keys}
    for p in pts:
        g, _, _ = eval_structure(chart, p)
        pk = curvature_packet(chart, p)
        inv = extract_invariants(chart, p, strict=False)
        vals = {"rho": g_norm2(pk.rho, g), "ric_anti": g_norm2(pk.ric_anti, g), "R": abs(inv.R),
                "B": abs(inv.B), "Q": float(np.max(np.abs(inv.Q))), "A": float(np.max(np.abs(inv.A))),
                "max_abs_N": float(np.sqrt(inv.n_norm2))}
        if inv.F is not None:
            vals["integrability"] = inv.integrability_residual(1.0)
            vals["integrability_half_eps"] = inv.integrability_residual(0.5)
        if "nijenhuis_profile" in res:
            vals["nijenhuis_profile"] = nijenhuis_profile_error(chart, p)
        for k, v in vals.items():
            res[k] = max(res[k], float(v))
    tol = {k: CURVATURE_TOL for k in ("rho", "ric_anti", "R", "B", "Q", "A", "nijenhuis_profile")
           if k in res}
    tol["integrability"] = THIRD_ORDER_TOL
    for k, v in (tolerances or {}).items():
        if k not in res:
            raise ValueError(f"unknown tolerance {k!r}; known: {sorted(res)}")
        tol[k] = float(v)
    trivial = res["max_abs_N"] <= conv.N_VANISH_TOL
    passed = all(res[k] <= t for k, t in tol.items())
    return StaticReport(chart.name, chart.params, int(n_samples), int(seed), res, tol, bool(trivial), bool(passed))


# --------------------------------------------------------------------------
# incompleteness

@dataclass
class RadialLength:
    length: float
    error_estimate: float
    n_profile: list  # (r, |N|) pairs

    def to_json(self) -> dict:
        return {"length": self.length, "error_estimate": self.error_estimate,
                "N_sup_profile": [{"r": r, "abs_N": n} for r, n in self.n_profile],
                "conventions": conv.ledger()}


def _check_path(h: HoloFn, u: complex) -> None:
    for coeffs in (h.numerator, h.denominator):
        c = np.trim_zeros(np.array(coeffs, dtype=complex), "b")
        if len(c) < 2:
            continue
        for root in np.polynomial.polynomial.polyroots(c):
            t = (root * np.conj(u)).real
            if -1e-12 <= t <= 1.0 + 1e-12 and abs(root - t * u) <= 1e-9 * max(1.0, abs(root)):
                raise PathThroughSingularity(f"radial path through a zero or pole of h at z1 = {root}")


def radial_length(chart: StaticChart, direction: complex = 1.0, z2: complex = 0.0,
                  profile_k=(2, 3, 4), tol: float = 1e-8) -> RadialLength:
    """g-length of ``z1 = t u``, ``t in [0, 1)``, at fixed ``z2``, and ``|N|`` near the boundary.

    The speed behaves like ``(1 - t)^(-1/2)`` at the boundary, so the integral
    is computed by QUADPACK's algebraic-weight rule with that weight factored
    out.  ``|N|`` is evaluated at ``r = 1 - 10^-k`` on charts whose exclusion
    radius and difference step shrink with the distance to the circle.
    """
    u = complex(direction)
    if abs(u) == 0:
        raise ValueError("direction must be nonzero")
    u /= abs(u)
    h = chart.h
    _check_path(h, u)
    vec = np.array([u.real, u.imag, 0.0, 0.0])
    z2c = complex(z2)

    def smooth_part(t):
        t = min(t, 1.0 - 1e-15)
        x = np.array([[t * u.real, t * u.imag, z2c.real, z2c.imag]])
        g = chart.metric_fn(x)[0]
        return float(np.sqrt(vec @ g @ vec)) * np.sqrt(1.0 - t)

    length, err = integrate.quad(smooth_part, 0.0, 1.0, weight="alg", wvar=(0.0, -0.5),
                                 epsabs=tol, epsrel=tol, limit=200)
    profile = []
    for k in profile_k:
        gap = 10.0 ** (-k)
        r = 1.0 - gap
        local = make_static_chart(HoloFn(h.numerator, h.denominator, min(h.exclusion_radius, gap / 2)),
                                  fd_step=gap / 20)
        p = np.array([r * u.real, r * u.imag, z2c.real, z2c.imag])
        profile.append((r, float(np.linalg.norm(frame_nijenhuis(local, p)))))
    return RadialLength(float(length), float(err), profile)


def static_generality_tableau(seed: int = 0, trials: int = 20) -> tuple[Tableau, CartanReport]:
    """The Cauchy-Riemann tableau governing static solutions and its Cartan report."""
    t = cauchy_riemann_tableau()
    return t, cartan_test(t, seed=seed, trials=trials)
