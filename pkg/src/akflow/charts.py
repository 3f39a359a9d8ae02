"""Almost-Kaehler structures on coordinate patches of R^4.

Coordinates are ordered ``(x1, y1, x2, y2)`` with ``z_k = x_k + i y_k``.
Matrix conventions used throughout the package:

* ``omega[a, b] = Omega(d_a, d_b)``
* ``j[a, b]`` is the a-th component of ``J d_b`` (columns are images)
* ``g = omega @ j``, i.e. ``g(X, Y) = Omega(X, J Y)``
* a covector is a row vector; a (1,0)-form satisfies ``eta @ j = 1j * eta``

Everything is batched over a leading axis of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CompatibilityError, DegenerateInput, DomainError, VanishingNijenhuis
from .fd import DEFAULT_STEP, jacobian

OMEGA_STD = np.array([[0.0, 1.0, 0.0, 0.0],
                      [-1.0, 0.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0, 1.0],
                      [0.0, 0.0, -1.0, 0.0]])
J_STD = np.array([[0.0, -1.0, 0.0, 0.0],
                  [1.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, -1.0],
                  [0.0, 0.0, 1.0, 0.0]])

COMPAT_TOL = 1e-12
CLOSED_TOL = 1e-6


@dataclass(frozen=True)
class Chart:
    """A named analytic family evaluated on batches of points.

    ``omega_fn`` and ``j_fn`` map a ``(B, 4)`` array to ``(B, 4, 4)``;
    ``domain_fn`` maps it to a ``(B,)`` boolean mask.
    """

    name: str
    params: dict
    omega_fn: Callable[[np.ndarray], np.ndarray]
    j_fn: Callable[[np.ndarray], np.ndarray]
    domain_fn: Callable[[np.ndarray], np.ndarray]
    fd_step: float = DEFAULT_STEP
    integrable: bool = False
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = field(default=None, compare=False)

    def in_domain(self, points) -> np.ndarray:
        return np.asarray(self.domain_fn(np.atleast_2d(np.asarray(points, dtype=float))), dtype=bool)

    def metric_fn(self, points: np.ndarray) -> np.ndarray:
        return self.omega_fn(points) @ self.j_fn(points)

    def d(self, fn):
        """First-derivative operator for a batched function on this chart."""
        return jacobian(fn, self.fd_step, self.domain_fn)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, n)
        return rng.uniform(-0.7, 0.7, size=(n, 4))


def _require_domain(chart: Chart, points: np.ndarray) -> None:
    if not np.all(chart.in_domain(points)):
        raise DomainError(f"point outside the domain of chart {chart.name!r}")


def exterior_derivative_2form(d_omega: np.ndarray) -> np.ndarray:
    """Independent components of d of a 2-form from its coordinate Jacobian.

    ``d_omega[..., a, b, c] = d_c omega_ab``; returns the four components
    ``(d omega)_{abc}`` for ``a < b < c``.
    """
    out = []
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        out.append(d_omega[..., b, c, a] - d_omega[..., a, c, b] + d_omega[..., a, b, c])
    return np.stack(out, axis=-1)


def compatibility_residuals(g: np.ndarray, omega: np.ndarray, j: np.ndarray) -> dict[str, float]:
    eye = np.eye(4)
    return {
        "j_squared": float(np.max(np.abs(j @ j + eye))),
        "omega_antisym": float(np.max(np.abs(omega + np.swapaxes(omega, -1, -2)))),
        "g_sym": float(np.max(np.abs(g - np.swapaxes(g, -1, -2)))),
        "omega_j_invariant": float(np.max(np.abs(np.swapaxes(j, -1, -2) @ omega @ j - omega))),
        "g_min_eig": float(np.min(np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2))))),
    }


def _scaled(res: dict[str, float], g: np.ndarray, omega: np.ndarray) -> dict[str, float]:
    # relative tolerance for charts with large coefficients near the domain boundary
    scale = max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(omega))))
    return {k: (v / scale if k != "g_min_eig" else v) for k, v in res.items()}


def eval_structure(chart: Chart, p, check: bool = True):
    """Evaluate ``(g, omega, j)`` at a single point, validating compatibility."""
    p = np.asarray(p, dtype=float).reshape(1, 4)
    _require_domain(chart, p)
    omega = chart.omega_fn(p)[0]
    j = chart.j_fn(p)[0]
    g = omega @ j
    if check:
        res = _scaled(compatibility_residuals(g, omega, j), g, omega)
        bad = {k: v for k, v in res.items() if k != "g_min_eig" and v > COMPAT_TOL * 1e2}
        if bad or res["g_min_eig"] <= 0:
            raise CompatibilityError(f"chart {chart.name!r} fails compatibility at {p[0]}: {res}")
    return 0.5 * (g + g.T), omega, j


def d_omega_residual(chart: Chart, p) -> float:
    """Largest independent component of the numerical exterior derivative of Omega."""
    p = np.asarray(p, dtype=float).reshape(1, 4)
    dom = chart.d(chart.omega_fn)(p)
    return float(np.max(np.abs(exterior_derivative_2form(dom))))


# --------------------------------------------------------------------------
# unitary coframes

@dataclass(frozen=True)
class UnitaryCoframe:
    """Two complex covectors ``eta[k]`` (rows of a 2x4 complex array)."""

    eta: np.ndarray

    def omega(self) -> np.ndarray:
        e, eb = self.eta, self.eta.conj()
        w = 0.5j * (np.einsum("ka,kb->ab", e, eb) - np.einsum("ka,kb->ab", eb, e))
        return w.real

    def metric(self) -> np.ndarray:
        e, eb = self.eta, self.eta.conj()
        return (0.5 * (np.einsum("ka,kb->ab", e, eb) + np.einsum("ka,kb->ab", eb, e))).real

    def full(self) -> np.ndarray:
        """The 4x4 complex coframe (eta1, eta2, conj eta1, conj eta2)."""
        return np.concatenate([self.eta, self.eta.conj()], axis=0)

    def rotated(self, u: np.ndarray) -> "UnitaryCoframe":
        return UnitaryCoframe(np.asarray(u) @ self.eta)


def pick_second_vector(g: np.ndarray, j: np.ndarray) -> int:
    """Coordinate index used to seed the second complex direction."""
    f1 = np.eye(4)[:, 0] / np.sqrt(g[0, 0])
    basis = [f1, j @ f1]
    best, best_norm = 1, -1.0
    for k in (1, 2, 3):
        v = np.eye(4)[:, k].copy()
        for b in basis:
            v = v - (b @ g @ v) * b
        nrm = v @ g @ v
        if nrm > best_norm + 1e-9:
            best, best_norm = k, nrm
    return best


def unitary_coframes_batch(g: np.ndarray, j: np.ndarray, second: int) -> np.ndarray:
    """Complex Gram-Schmidt coframes for a batch, shape ``(B, 2, 4)``."""
    nb = g.shape[0]
    e = np.eye(4)

    def gdot(u, v):
        return np.einsum("ba,bac,bc->b", u, g, v)

    v1 = np.broadcast_to(e[:, 0], (nb, 4))
    f1 = v1 / np.sqrt(gdot(v1, v1))[:, None]
    jf1 = np.einsum("bac,bc->ba", j, f1)
    v2 = np.broadcast_to(e[:, second], (nb, 4)).copy()
    for b in (f1, jf1):
        v2 = v2 - gdot(b, v2)[:, None] * b
    f2 = v2 / np.sqrt(gdot(v2, v2))[:, None]
    jf2 = np.einsum("bac,bc->ba", j, f2)
    frame = np.stack([f1, jf1, f2, jf2], axis=-1)
    r = np.linalg.inv(frame)
    return np.stack([r[:, 0] + 1j * r[:, 1], r[:, 2] + 1j * r[:, 3]], axis=1)


def unitary_coframe(g: np.ndarray, omega: np.ndarray, j: np.ndarray, second: int | None = None) -> UnitaryCoframe:
    """Deterministic unitary coframe seeded by the first coordinate vector."""
    g = np.asarray(g, dtype=float)
    if np.min(np.linalg.eigvalsh(0.5 * (g + g.T))) <= 1e-14 * max(1.0, np.max(np.abs(g))):
        raise DegenerateInput("metric is not positive definite")
    if second is None:
        second = pick_second_vector(g, j)
    return UnitaryCoframe(unitary_coframes_batch(g[None], np.asarray(j)[None], second)[0])


def adapting_rotation(n: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """SU(2) element u with u-rotated Nijenhuis components ``(|N|, 0)``.

    Under ``eta -> u eta`` the components transform as ``N -> det(u) u N``.
    """
    n = np.asarray(n, dtype=complex)
    nrm = float(np.linalg.norm(n))
    if nrm <= tol:
        raise VanishingNijenhuis(f"Nijenhuis tensor vanishes (|N| = {nrm:.3e})")
    n1, n2 = n / nrm
    return np.array([[np.conj(n1), np.conj(n2)], [-n2, n1]])


def adapt_coframe_to_N(coframe: UnitaryCoframe, n_components, tol: float = 1e-8) -> UnitaryCoframe:
    """Rotate a coframe so that N_2 = 0 and N_1 is real and non-negative.

    ``n_components`` are the frame components ``(N_1, N_2)`` of the Nijenhuis
    tensor in ``coframe`` (see :func:`akflow.invariants.frame_nijenhuis`).
    """
    return coframe.rotated(adapting_rotation(n_components, tol))


def coframe_residuals(cf: UnitaryCoframe, g: np.ndarray, omega: np.ndarray, j: np.ndarray) -> dict[str, float]:
    return {
        "omega": float(np.max(np.abs(cf.omega() - omega))),
        "metric": float(np.max(np.abs(cf.metric() - g))),
        "type_10": float(np.max(np.abs(cf.eta @ j - 1j * cf.eta))),
    }


# --------------------------------------------------------------------------
# built-in chart families

def _const(mat: np.ndarray):
    return lambda x: np.broadcast_to(mat, (np.atleast_2d(x).shape[0], 4, 4)).copy()


def flat_chart(**params) -> Chart:
    return Chart("flat", dict(params), _const(OMEGA_STD), _const(J_STD),
                 lambda x: np.ones(np.atleast_2d(x).shape[0], dtype=bool), integrable=True)


def hyperbolic_product_chart(radius: float = 0.9, **params) -> Chart:
    """Product of two Poincare disks, each of Gauss curvature -1."""
    radius = float(radius)

    def conformal(x):
        r1 = x[:, 0] ** 2 + x[:, 1] ** 2
        r2 = x[:, 2] ** 2 + x[:, 3] ** 2
        return 4.0 / (1.0 - r1) ** 2, 4.0 / (1.0 - r2) ** 2

    def omega_fn(x):
        x = np.atleast_2d(x)
        c1, c2 = conformal(x)
        out = np.zeros((x.shape[0], 4, 4))
        out[:, 0, 1], out[:, 1, 0] = c1, -c1
        out[:, 2, 3], out[:, 3, 2] = c2, -c2
        return out

    def domain(x):
        x = np.atleast_2d(x)
        return (np.hypot(x[:, 0], x[:, 1]) < radius) & (np.hypot(x[:, 2], x[:, 3]) < radius)

    def sampler(rng, n):
        r = radius * 0.95 * np.sqrt(rng.uniform(0, 1, size=(n, 2)))
        t = rng.uniform(0, 2 * np.pi, size=(n, 2))
        return np.stack([r[:, 0] * np.cos(t[:, 0]), r[:, 0] * np.sin(t[:, 0]),
                         r[:, 1] * np.cos(t[:, 1]), r[:, 1] * np.sin(t[:, 1])], axis=1)

    return Chart("hyperbolic_product", {"radius": radius, **params}, omega_fn, _const(J_STD), domain,
                 integrable=True, sampler=sampler)


def nilmanifold_coframe(x: np.ndarray) -> np.ndarray:
    """Left-invariant coframe (dx1, dy1, dx2 - x1 dy1, dy2) of Heisenberg x R."""
    x = np.atleast_2d(x)
    e = np.broadcast_to(np.eye(4), (x.shape[0], 4, 4)).copy()
    e[:, 2, 1] = -x[:, 0]
    return e


# Omega = e1^e3 + e2^e4 and g = sum e_k^2 in the left-invariant coframe
KT_OMEGA_FRAME = np.array([[0.0, 0.0, 1.0, 0.0],
                           [0.0, 0.0, 0.0, 1.0],
                           [-1.0, 0.0, 0.0, 0.0],
                           [0.0, -1.0, 0.0, 0.0]])
KT_J_FRAME = np.linalg.solve(KT_OMEGA_FRAME, np.eye(4))


def kodaira_thurston_chart(**params) -> Chart:
    """Left-invariant almost-Kaehler structure on Heisenberg x R (non-integrable J)."""

    def omega_fn(x):
        e = nilmanifold_coframe(x)
        return np.swapaxes(e, -1, -2) @ KT_OMEGA_FRAME @ e

    def j_fn(x):
        e = nilmanifold_coframe(x)
        return np.linalg.solve(e, KT_J_FRAME @ e)

    return Chart("kodaira_thurston", dict(params), omega_fn, j_fn,
                 lambda x: np.ones(np.atleast_2d(x).shape[0], dtype=bool))


DEFAULT_DARBOUX_COEFFS = (0.30, -0.20, 0.15, 0.25, -0.10, 0.20, 0.12, -0.18, 0.22, 0.05)


def darboux_chart(coeffs=DEFAULT_DARBOUX_COEFFS, **params) -> Chart:
    """Standard Omega with J = C J_std C^-1 for a position-dependent symplectic C.

    ``C`` is the Cayley transform of ``S = Omega^-1 M(x)`` where ``M`` is a
    symmetric matrix whose entries are quadratic polynomials built from
    ``coeffs``; J is generically non-integrable and every invariant is nonzero.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (10,):
        raise ValueError("darboux chart takes 10 coefficients")
    iu = np.triu_indices(4)
    # fixed pattern of linear and quadratic monomials per upper-triangular entry
    lin = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0],
                    [0, 1, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)

    def m_fn(x):
        x = np.atleast_2d(x)
        quad = np.stack([x[:, (k + 1) % 4] * x[:, k] for k in range(4)], axis=1)
        vals = c[None, :] * (x @ lin.T + 0.5 * np.tile(quad, (1, 3))[:, :10])
        m = np.zeros((x.shape[0], 4, 4))
        m[:, iu[0], iu[1]] = vals
        return m + np.swapaxes(m, -1, -2) - np.einsum("bii,ij->bij", m, np.eye(4))

    oinv = np.linalg.inv(OMEGA_STD)

    def j_fn(x):
        s = oinv[None] @ m_fn(x)
        eye = np.eye(4)[None]
        cay = np.linalg.solve(eye - 0.5 * s, eye + 0.5 * s)
        return cay @ J_STD[None] @ np.linalg.inv(cay)

    return Chart("darboux", {"coeffs": c.tolist(), **params}, _const(OMEGA_STD), j_fn,
                 lambda x: np.max(np.abs(np.atleast_2d(x)), axis=1) < 1.0)


CHART_FAMILIES: dict[str, Callable[..., Chart]] = {
    "flat": flat_chart,
    "hyperbolic_product": hyperbolic_product_chart,
    "kodaira_thurston": kodaira_thurston_chart,
    "darboux": darboux_chart,
}


def register_chart_family(name: str, factory: Callable[..., Chart]) -> None:
    CHART_FAMILIES[name] = factory


def make_chart(spec: dict) -> Chart:
    """Build a chart from ``{"chart": name, "params": {...}}``."""
    name = spec["chart"]
    if name not in CHART_FAMILIES:
        # the static family registers itself on import
        from . import static  # noqa: F401
    try:
        factory = CHART_FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown chart family {name!r}; known: {sorted(CHART_FAMILIES)}") from None
    return factory(**spec.get("params", {}))
