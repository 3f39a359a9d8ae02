"""Curvature, Chern-Ricci form and second-order U(2) invariants on charts.

Two independent routes are implemented:

* tensorial: Christoffel symbols of g, the Chern connection
  ``nabla - 1/2 J (nabla J)``, their curvatures, the coordinate Nijenhuis tensor;
* frame: the first and second structure equations of a unitary coframe
  section (see :mod:`akflow.frames`), from which ``N, A, B, F, H, K, Q, R``
  are read off.

Index conventions: ``gamma[k, i, j]`` is the coefficient of ``d_k`` in
``nabla_{d_i} d_j``; ``riemann[a, b, c, d] = g(R(d_a, d_b) d_c, d_d)`` with
``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``; ``ric[b, c] = sum_a riemann(a, b, c, a)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import conventions as conv
from .charts import Chart, adapting_rotation, eval_structure
from .errors import ConsistencyError, DomainError, InconsistentDecomposition, VanishingNijenhuis
from .frames import ETA, ETAB, EPS, CoframeField, second_order, sym, wedge

CURVATURE_TOL = 1e-4
THIRD_ORDER_TOL = 1e-3
DRIFT_TOL = 1e-3


# --------------------------------------------------------------------------
# tensor algebra

def christoffel(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Batched Levi-Civita symbols; ``dg[..., a, b, c] = d_c g_ab``."""
    ginv = np.linalg.inv(g)
    # lowered[..., l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lowered = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                     - np.einsum("...ijl->...lij", dg))
    return np.einsum("...kl,...lij->...kij", ginv, lowered)


def riemann_endomorphism(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """``rup[l, k, i, j]``: d_l-component of ``R(d_i, d_j) d_k`` for any affine connection."""
    # dgamma[l, j, k, i] = d_i gamma^l_{jk}
    term = np.einsum("ljki->lkij", dgamma) - np.einsum("likj->lkij", dgamma)
    quad = np.einsum("lim,mjk->lkij", gamma, gamma) - np.einsum("ljm,mik->lkij", gamma, gamma)
    return term + quad


def lower_riemann(g: np.ndarray, rup: np.ndarray) -> np.ndarray:
    return np.einsum("dl,lcab->abcd", g, rup)


def kulkarni_nomizu(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    return (np.einsum("bc,ad->abcd", h, k) + np.einsum("ad,bc->abcd", h, k)
            - np.einsum("ac,bd->abcd", h, k) - np.einsum("bd,ac->abcd", h, k))


def orthonormal_frame(g: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Columns ``(f1, J f1, f2, J f2)``, positively oriented by Omega^2."""
    from .charts import pick_second_vector, unitary_coframes_batch

    eta = unitary_coframes_batch(g[None], j[None], pick_second_vector(g, j))[0]
    coframe = np.stack([eta[0].real, eta[0].imag, eta[1].real, eta[1].imag])
    return np.linalg.inv(coframe)


PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_S = 1.0 / np.sqrt(2.0)
# rows: (e12 + e34, e13 - e24, e14 + e23) and (e12 - e34, e13 + e24, e14 - e23)
LAMBDA_PLUS = _S * np.array([[1, 0, 0, 0, 0, 1], [0, 1, 0, 0, -1, 0], [0, 0, 1, 1, 0, 0]], dtype=float)
LAMBDA_MINUS = _S * np.array([[1, 0, 0, 0, 0, -1], [0, 1, 0, 0, 1, 0], [0, 0, 1, -1, 0, 0]], dtype=float)


def curvature_operator(rm_on: np.ndarray) -> np.ndarray:
    """6x6 operator on orthonormal 2-forms, normalised so a round sphere is positive."""
    return np.array([[rm_on[a, b, d, c] for (c, d) in PAIRS] for (a, b) in PAIRS])


def weyl_blocks(riemann: np.ndarray, g: np.ndarray, j: np.ndarray):
    """(W+, W-) as 3x3 matrices on orthonormal bases of the (anti-)self-dual 2-forms."""
    frame = orthonormal_frame(g, j)
    rm = np.einsum("abcd,ai,bj,ck,dl->ijkl", riemann, frame, frame, frame, frame)
    ric = np.einsum("abca->bc", rm)
    scal = np.trace(ric)
    schouten = 0.5 * (ric - scal / 6.0 * np.eye(4))
    weyl = rm - kulkarni_nomizu(schouten, np.eye(4))
    op = curvature_operator(weyl)
    return LAMBDA_PLUS @ op @ LAMBDA_PLUS.T, LAMBDA_MINUS @ op @ LAMBDA_MINUS.T


def j_parts(b: np.ndarray, j: np.ndarray):
    """Split a bilinear form into J-invariant and J-anti-invariant parts."""
    bj = j.T @ b @ j
    return 0.5 * (b + bj), 0.5 * (b - bj)


def form_to_symmetric(phi: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Identify a J-invariant 2-form with the symmetric tensor ``phi(., J .)``."""
    return phi @ j


# --------------------------------------------------------------------------
# batched connection coefficients on a chart

def lc_gamma_fn(chart: Chart):
    dmetric = chart.d(chart.metric_fn)

    def fn(x):
        g = chart.metric_fn(x)
        return christoffel(0.5 * (g + np.swapaxes(g, -1, -2)), dmetric(x))

    return fn


def nabla_j(gamma: np.ndarray, j: np.ndarray, dj: np.ndarray) -> np.ndarray:
    """``out[..., m, j, i] = (nabla_i J)^m_j``; ``dj[..., m, j, i] = d_i J^m_j``."""
    return (dj + np.einsum("...mil,...lj->...mji", gamma, j) - np.einsum("...ml,...lij->...mji", j, gamma))


def chern_gamma_fn(chart: Chart):
    lc = lc_gamma_fn(chart)
    dj_fn = chart.d(chart.j_fn)

    def fn(x):
        gamma = lc(x)
        j = chart.j_fn(x)
        nj = nabla_j(gamma, j, dj_fn(x))
        return gamma - 0.5 * np.einsum("...km,...mji->...kij", j, nj)

    return fn


# --------------------------------------------------------------------------
# data types

@dataclass
class CurvaturePacket:
    riemann: np.ndarray
    ric: np.ndarray
    scal: float
    wplus: np.ndarray
    wminus: np.ndarray
    rho: np.ndarray | None = None
    ric_anti: np.ndarray | None = None
    rho11: np.ndarray | None = None

    def bianchi_residual(self) -> float:
        r = self.riemann
        cyc = r + np.einsum("abcd->bcad", r) + np.einsum("abcd->cabd", r)
        return float(np.max(np.abs(cyc)))

    def summary(self) -> dict:
        out = {"scal": float(self.scal),
               "ric": self.ric.tolist(),
               "wplus_eigenvalues": np.linalg.eigvalsh(self.wplus).tolist(),
               "wminus_eigenvalues": np.linalg.eigvalsh(self.wminus).tolist()}
        if self.rho is not None:
            out["rho"] = self.rho.tolist()
        if self.ric_anti is not None:
            out["ric_anti"] = self.ric_anti.tolist()
        return out


@dataclass
class InvariantSet:
    """Pointwise second-order invariants in a unitary (usually N-adapted) coframe."""

    N: np.ndarray
    A: np.ndarray
    B: complex
    Q: np.ndarray
    R: float
    K: np.ndarray
    F: np.ndarray | None = None
    H: complex | None = None
    adapted: bool = False
    residuals: dict = field(default_factory=dict)

    @property
    def lambda_static(self) -> float:
        return 4.0 * self.R

    @property
    def n_norm2(self) -> float:
        return float(np.vdot(self.N, self.N).real)

    def integrability_residual(self, h_coefficient: float = 0.5) -> float:
        """Norm of ``F_ij conj(N_j) + c eps_ij H conj(N_j)``.

        ``c = 1/2`` is the condition as printed; ``c = 1`` is the form that
        holds when ``F_12 = H/2`` in adapted coframes (see the ledger).
        """
        if self.F is None or self.H is None:
            return float("nan")
        nb = np.conj(self.N)
        vec = self.F @ nb + h_coefficient * self.H * (EPS @ nb)
        return float(np.linalg.norm(vec))

    def to_json(self) -> dict:
        def c(z):
            z = np.asarray(z)
            return {"re": np.round(z.real, 14).tolist(), "im": np.round(z.imag, 14).tolist()}

        out = {"N": c(self.N), "A": c(self.A), "B": c(self.B), "Q": c(self.Q), "R": float(self.R),
               "K": c(self.K), "lambda_static": self.lambda_static, "adapted": self.adapted,
               "residuals": {k: float(v) for k, v in self.residuals.items()}}
        out["F"] = None if self.F is None else c(self.F)
        out["H"] = None if self.H is None else c(self.H)
        return out


@dataclass
class FlowRHS:
    dOmega: np.ndarray
    dg: np.ndarray
    dJ: np.ndarray

    def compatibility_residual(self, omega: np.ndarray, j: np.ndarray) -> float:
        """``dg - (dOmega J + Omega dJ)``, the derivative of ``g = Omega J``."""
        return float(np.max(np.abs(self.dg - self.dOmega @ j - omega @ self.dJ)))

    def anticommutator_residual(self, j: np.ndarray) -> float:
        return float(np.max(np.abs(j @ self.dJ + self.dJ @ j)))

    def to_json(self) -> dict:
        return {k: np.round(v, 14).tolist() for k, v in asdict(self).items()}


# --------------------------------------------------------------------------
# tensorial operations

def _point(chart: Chart, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(1, 4)
    if not np.all(np.isfinite(p)):
        raise DomainError("point has non-finite coordinates")
    if not np.all(chart.in_domain(p)):
        raise DomainError(f"point outside the domain of chart {chart.name!r}")
    return p


def nijenhuis(chart: Chart, p) -> np.ndarray:
    """Coordinate Nijenhuis tensor ``n[k, i, j]`` of ``N(d_i, d_j)``.

    ``N(X, Y) = [JX, JY] - J[JX, Y] - J[X, JY] - [X, Y]``.
    """
    p = _point(chart, p)
    j = chart.j_fn(p)[0]
    dj = chart.d(chart.j_fn)(p)[0]  # dj[k, j, l] = d_l J^k_j
    return (np.einsum("li,kjl->kij", j, dj) - np.einsum("lj,kil->kij", j, dj)
            + np.einsum("kl,lij->kij", j, dj) - np.einsum("kl,lji->kij", j, dj))


def tensor_norm(t: np.ndarray, g: np.ndarray) -> float:
    """g-norm of a (1,2)-tensor ``t[k, i, j]``."""
    ginv = np.linalg.inv(g)
    return float(np.sqrt(abs(np.einsum("kij,lmn,kl,im,jn->", t, t, g, ginv, ginv))))


def levi_civita_curvature(chart: Chart, p) -> CurvaturePacket:
    p = _point(chart, p)
    g, omega, j = eval_structure(chart, p[0])
    gamma_fn = lc_gamma_fn(chart)
    gamma = gamma_fn(p)[0]
    dgamma = chart.d(gamma_fn)(p)[0]
    rup = riemann_endomorphism(gamma, dgamma)
    riem = lower_riemann(g, rup)
    ric = np.einsum("lcla->ac", rup)
    ric = 0.5 * (ric + ric.T)
    scal = float(np.trace(np.linalg.solve(g, ric)))
    wplus, wminus = weyl_blocks(riem, g, j)
    return CurvaturePacket(riem, ric, scal, wplus, wminus)


def chern_connection_and_rho(chart: Chart, p):
    """Chern connection coefficients and the Chern-Ricci form at ``p``.

    ``rho(X, Y) = RHO_TRACE_SIGN * 1/2 tr(J o Rc(X, Y))`` where ``Rc`` is the
    Chern curvature; the sign is fixed so that ``rho(X, Y) = Ric(JX, Y)`` on
    Kaehler charts.
    """
    p = _point(chart, p)
    j = chart.j_fn(p)[0]
    gamma_fn = chern_gamma_fn(chart)
    gamma = gamma_fn(p)[0]
    dgamma = chart.d(gamma_fn)(p)[0]
    rup = riemann_endomorphism(gamma, dgamma)
    rho = conv.RHO_TRACE_SIGN * 0.5 * np.einsum("kl,lkij->ij", j, rup)
    return gamma, 0.5 * (rho - rho.T)


def ricci_form(ric: np.ndarray, j: np.ndarray) -> np.ndarray:
    """``Ric(JX, Y)`` as a matrix."""
    return j.T @ ric


def curvature_packet(chart: Chart, p) -> CurvaturePacket:
    """Levi-Civita curvature plus the Chern-Ricci form and its J-type pieces."""
    pk = levi_civita_curvature(chart, p)
    _, omega, j = eval_structure(chart, p)
    _, rho = chern_connection_and_rho(chart, p)
    _, ric_anti = j_parts(pk.ric, j)
    rho11, _ = j_parts(rho, j)
    pk.rho, pk.ric_anti, pk.rho11 = rho, ric_anti, rho11
    return pk


def g_norm2(t: np.ndarray, g: np.ndarray) -> float:
    """g-norm of a covariant 2-tensor."""
    ginv = np.linalg.inv(g)
    return float(np.sqrt(abs(np.einsum("ab,cd,ac,bd->", t, t, ginv, ginv))))


# --------------------------------------------------------------------------
# frame route

def coframe_field(chart: Chart, p, adapted: bool = True, second: int | None = None,
                  phase=None) -> CoframeField:
    """Coframe section near ``p``; N-adapted at ``p`` when requested.

    ``second`` overrides the Gram-Schmidt seed index; ``phase`` is a further
    constant unitary applied last (used to test frame covariance).
    """
    field_ = CoframeField.at(chart, p)
    if second is not None:
        field_ = CoframeField(chart, int(second), field_.rotation)
    if adapted:
        n = field_.first_order(np.asarray(p, dtype=float).reshape(1, 4))["N"][0]
        field_ = field_.rotated(adapting_rotation(n, conv.N_VANISH_TOL))
    if phase is not None:
        field_ = field_.rotated(np.asarray(phase, dtype=complex))
    return field_


def frame_nijenhuis(chart: Chart, p) -> np.ndarray:
    """Components ``(N_1, N_2)`` in the default (unadapted) coframe at ``p``."""
    f = CoframeField.at(chart, p)
    return f.first_order(np.asarray(p, dtype=float).reshape(1, 4))["N"][0]


def _decompose_rho_trace(t: np.ndarray):
    """R, B, Q from the frame matrix of ``d kappa_11 + d kappa_22``."""
    r = float(-0.5 * (t[0, 2] + t[1, 3]).real)
    q = np.array([[0.5 * (t[j, 2 + i] + (r if i == j else 0.0)) for j in range(2)] for i in range(2)])
    b = 0.5 * t[2, 3]
    resid = max(abs(t[0, 1] + 2 * np.conj(b)), abs((t[0, 2] + t[1, 3]).imag))
    return r, b, q, resid


def _decompose_cov_dn(cov: np.ndarray):
    """A, B, F, H from the frame components of the covariant derivative of N."""
    c = cov[:, :2]
    m = cov[:, 2:]
    b = 0.5 * (c[0, 0] + c[1, 1])
    a = np.array([[2 * c[0, 1], c[1, 1] - c[0, 0]], [c[1, 1] - c[0, 0], -2 * c[1, 0]]])
    f = 0.5 * (m + m.T)
    h = m[0, 1] - m[1, 0]
    return a, b, f, h


def model_curvature(inv: InvariantSet, with_k: bool = True) -> np.ndarray:
    """Frame matrices of the Chern curvature 2-forms predicted by the invariants."""
    n = inv.N
    nn = inv.n_norm2
    out = np.zeros((2, 2, 4, 4), dtype=complex)
    trace11 = sum(wedge(ETA[k], ETAB[k]) for k in range(2))
    for i in range(2):
        for jj in range(2):
            phi = np.zeros((4, 4), dtype=complex)
            if with_k:
                for k in range(2):
                    for l in range(2):
                        phi += inv.K[i, jj, k, l] * wedge(ETAB[k], ETA[l])
            phi += (inv.R + nn) * (-wedge(ETA[i], ETAB[jj]) / 3.0 - (i == jj) * trace11 / 3.0)
            phi += n[i] * np.conj(n[jj]) * trace11
            for k in range(2):
                phi += inv.Q[i, k] * wedge(ETA[k], ETAB[jj]) + inv.Q[k, jj] * wedge(ETA[i], ETAB[k])
                phi += -0.5 * inv.A[i, k] * wedge(ETAB[jj], ETAB[k])
                phi += 0.5 * np.conj(inv.A[jj, k]) * wedge(ETA[i], ETA[k])
                phi += 2 * inv.B * EPS[i, k] * wedge(ETAB[jj], ETAB[k])
                phi += -2 * np.conj(inv.B) * EPS[jj, k] * wedge(ETA[i], ETA[k])
            out[i, jj] = phi
    return out


def _k_from_curvature(resid11: np.ndarray) -> np.ndarray:
    # coefficient of conj(eta_k) ^ eta_l sits at frame entry [2 + k, l]
    k = np.einsum("ijkl->ijkl", resid11[:, :, 2:, :2])
    return _project_k(k)


# model covectors in the real orthonormal frame (f1, J f1, f2, J f2)
_E4 = np.eye(4)
ETA_ON = np.array([_E4[0] + 1j * _E4[1], _E4[2] + 1j * _E4[3]])
OMEGA_ON = (0.5j * (wedge(ETA_ON[0], ETA_ON[0].conj()) + wedge(ETA_ON[1], ETA_ON[1].conj()))).real
SIGMA_ON = wedge(ETA_ON[0], ETA_ON[1])


def _pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetric product of two 2-forms as a bilinear form on the bivector basis ``PAIRS``."""
    va = np.array([a[i, j] for i, j in PAIRS])
    vb = np.array([b[i, j] for i, j in PAIRS])
    return 0.5 * (np.outer(va, vb) + np.outer(vb, va))


def real_orthonormal_frame(theta: np.ndarray) -> np.ndarray:
    """Columns ``(f1, J f1, f2, J f2)`` dual to ``(Re eta_1, Im eta_1, Re eta_2, Im eta_2)``."""
    return np.linalg.inv(np.stack([theta[0].real, theta[0].imag, theta[1].real, theta[1].imag]))


def curvature_blocks(riemann: np.ndarray, frame_on: np.ndarray):
    """(Lambda^2_+ block of the full curvature operator, traceless W-) in a given oriented ON frame."""
    rm = np.einsum("abcd,ai,bj,ck,dl->ijkl", riemann, frame_on, frame_on, frame_on, frame_on)
    ric = np.einsum("abca->bc", rm)
    scal = np.trace(ric)
    op = curvature_operator(rm)
    sch = 0.5 * (ric - scal / 6.0 * np.eye(4))
    weyl = curvature_operator(rm - kulkarni_nomizu(sch, np.eye(4)))
    return LAMBDA_PLUS @ op @ LAMBDA_PLUS.T, LAMBDA_MINUS @ weyl @ LAMBDA_MINUS.T


def ricci_display(inv: InvariantSet) -> np.ndarray:
    """Ricci tensor (ON frame) rebuilt from ``(A, Q, N, R)`` with the calibrated J-invariant scale."""
    e, eb = ETA_ON, ETA_ON.conj()
    anti = sum(inv.A[i, k] * sym(eb[i], eb[k]) + np.conj(inv.A[i, k]) * sym(e[i], e[k])
               for i in range(2) for k in range(2))
    inv11 = sum((inv.Q[i, k] + inv.N[i] * np.conj(inv.N[k])) * sym(eb[i], e[k])
                for i in range(2) for k in range(2))
    inv11 = inv11 - (0.5 * inv.R + inv.n_norm2) * sum(sym(e[i], eb[i]) for i in range(2))
    return (anti + inv11 / conv.RIC11_DISPLAY_SCALE).real


def wplus_display(inv: InvariantSet, h: complex | None = None) -> np.ndarray:
    """The W+ display on the basis ``LAMBDA_PLUS``.

    ``eta_1 ^ eta_2`` is paired with bivectors through the Hermitian pairing,
    so it enters as ``conj(SIGMA_ON)`` here; the B terms carry the calibrated
    sign ``WPLUS_B_SIGN``.
    """
    h = (inv.H or 0.0) if h is None else h
    nn = inv.n_norm2
    s = SIGMA_ON.conj()
    sb = SIGMA_ON
    d = ((4 * nn - 4 * inv.R) * _pair(OMEGA_ON, OMEGA_ON)
         + conv.WPLUS_B_SIGN * (-8j * inv.B * _pair(OMEGA_ON, s) + 8j * np.conj(inv.B) * _pair(OMEGA_ON, sb))
         + 2 * h * _pair(s, s) + 2 * np.conj(h) * _pair(sb, sb) - 4 * nn * _pair(s, sb))
    return (LAMBDA_PLUS @ d @ LAMBDA_PLUS.T).real


def wminus_display(k: np.ndarray) -> np.ndarray:
    """The W- display ``-2 K (conj eta_i ^ eta_j)(conj eta_k ^ eta_l)`` on ``LAMBDA_MINUS``."""
    forms = [[wedge(ETA_ON[i].conj(), ETA_ON[j]) for j in range(2)] for i in range(2)]
    d = sum(-2 * k[i, j, a, b] * _pair(forms[i][j], forms[a][b])
            for i in range(2) for j in range(2) for a in range(2) for b in range(2))
    return (LAMBDA_MINUS @ d @ LAMBDA_MINUS.T).real


def _solve_h(target: np.ndarray, inv: InvariantSet) -> complex:
    base = wplus_display(inv, 0.0)
    cols = [(wplus_display(inv, 1.0) - base).ravel(), (wplus_display(inv, 1j) - base).ravel()]
    x, *_ = np.linalg.lstsq(np.stack(cols, axis=1), (target - base).ravel(), rcond=None)
    return complex(x[0], x[1])


def _k_basis() -> np.ndarray:
    """Real basis of the tensors with the symmetries of K, shape ``(dim, 2, 2, 2, 2)``."""
    w, v = np.linalg.eigh(_K_PROJ)
    vecs = v[:, w > 0.5].T
    return np.array([(x[:16] + 1j * x[16:]).reshape(2, 2, 2, 2) for x in vecs])


def _solve_k(target: np.ndarray) -> np.ndarray:
    basis = _K_BASIS
    cols = np.stack([wminus_display(b).ravel() for b in basis], axis=1)
    x, *_ = np.linalg.lstsq(cols, target.ravel(), rcond=None)
    return np.einsum("m,mijkl->ijkl", x, basis)


def _frame_data(chart: Chart, p, adapted: bool, second=None, phase=None):
    try:
        field_ = coframe_field(chart, p, adapted=adapted, second=second, phase=phase)
        return field_, adapted
    except VanishingNijenhuis:
        return coframe_field(chart, p, adapted=False, second=second, phase=phase), False


def _extract(chart: Chart, p, adapted: bool = True, second=None, phase=None):
    p = _point(chart, p)[0]
    field_, use_adapted = _frame_data(chart, p, adapted, second, phase)
    so = second_order(field_, p)
    pk = levi_civita_curvature(chart, p)
    n = so.N
    has_n = float(np.linalg.norm(n)) > conv.N_VANISH_TOL

    r, b, q, rho_resid = _decompose_rho_trace(so.dkappa[0, 0] + so.dkappa[1, 1])
    a_dn, b_dn, f, h_dn = _decompose_cov_dn(so.cov_dN)
    ricf = so.frame.T @ pk.ric @ so.frame
    a = 0.5 * (ricf[2:, 2:] + ricf[2:, 2:].T)
    inv = InvariantSet(N=n, A=a, B=complex(b), Q=q, R=r, K=np.zeros((2, 2, 2, 2), dtype=complex),
                       adapted=use_adapted)

    frame_on = real_orthonormal_frame(so.theta)
    plus, wminus = curvature_blocks(pk.riemann, frame_on)
    h = _solve_h(conv.WPLUS_DISPLAY_SCALE * plus, inv)
    inv.K = _solve_k(conv.WMINUS_DISPLAY_SCALE * wminus)
    if has_n:
        inv.F, inv.H = f, h

    k_curv = _k_from_curvature(so.curvature - model_curvature(inv, with_k=False))
    ric_on = frame_on.T @ pk.ric @ frame_on
    curv_scale = 1.0 + float(np.max(np.abs(so.curvature)))
    inv_h = InvariantSet(**{**inv.__dict__, "H": h})
    inv.residuals = {
        "rho_decomposition": float(rho_resid) / curv_scale,
        "B_consistency": float(abs(b - b_dn)) / curv_scale,
        "A_consistency": float(np.max(np.abs(a - a_dn))) / curv_scale,
        "H_consistency": float(abs(h - h_dn)) / curv_scale,
        "K_consistency": float(np.max(np.abs(inv.K - k_curv))) / curv_scale,
        "ricci_display": float(np.max(np.abs(ric_on - ricci_display(inv)))) / curv_scale,
        "wplus_display": float(np.max(np.abs(conv.WPLUS_DISPLAY_SCALE * plus - wplus_display(inv_h)))) / curv_scale,
        "wminus_display": float(np.max(np.abs(conv.WMINUS_DISPLAY_SCALE * wminus - wminus_display(inv.K)))) / curv_scale,
        "curvature_model": float(np.max(np.abs(so.curvature - model_curvature(inv)))) / curv_scale,
        "scal_identity": abs(pk.scal + 8 * inv.n_norm2 + 8 * r) / curv_scale,
        "torsion20": so.torsion20,
    }
    return inv, so, pk


def extract_invariants(chart: Chart, p, adapted: bool = True, strict: bool = True,
                       second: int | None = None, phase=None) -> InvariantSet:
    """Second-order invariants at ``p`` in a (possibly N-adapted) unitary coframe.

    ``N`` comes from the first structure equation; ``R, B, Q`` from the trace of
    the Chern curvature; ``A`` from the Ricci tensor; ``H`` from the W+ block;
    ``K`` from W-; ``F`` from the covariant derivative of ``N``.  Every quantity
    with a second derivation is cross-checked and the residuals (relative to the
    curvature scale) are stored in ``residuals``.  Where N vanishes the coframe
    is unadapted and ``F``, ``H`` are reported as absent.

    Raises
    ------
    InconsistentDecomposition
        If ``strict`` and any residual exceeds ``DRIFT_TOL``.
    """
    inv, _, _ = _extract(chart, p, adapted, second, phase)
    if strict:
        bad = {k: v for k, v in inv.residuals.items() if v > DRIFT_TOL}
        if bad:
            raise InconsistentDecomposition(f"decomposition residuals exceed {DRIFT_TOL}: {bad}")
    return inv


def flow_expansion(R, B, Q, A, eta: np.ndarray):
    """Flow RHS ``(dOmega, dg)`` written in second-order invariants and a unitary coframe ``eta``."""
    e, eb = eta, np.conj(eta)
    omega = (0.5j * (wedge(e[0], eb[0]) + wedge(e[1], eb[1]))).real
    g = (0.5 * (np.einsum("ka,kb->ab", e, eb) + np.einsum("ka,kb->ab", eb, e))).real
    sig = wedge(e[0], e[1])
    d_omega = 4 * R * omega - 8 * (np.conj(B) * sig).imag
    dg = 4 * R * g
    for i in range(2):
        for k in range(2):
            d_omega = d_omega + (4j * Q[i, k] * wedge(eb[i], e[k])).real
            dg = dg - (8 * Q[i, k] * sym(eb[i], e[k])).real - 4 * (A[i, k] * sym(eb[i], eb[k])).real
    return d_omega, dg


def flow_rhs(chart: Chart, p, both: bool = False):
    """Right-hand side of symplectic curvature flow at ``p``.

    The tensorial evaluation ``dOmega = -2 rho``,
    ``dg = -2 rho^{1,1}(., J .) - 2 Ric^{anti}`` is compared with the expansion
    in invariants; ``dJ`` follows from ``g = Omega J``.  With ``both=True`` the
    invariant-route result is returned as well.

    Raises
    ------
    ConsistencyError
        If the two routes differ by more than ``DRIFT_TOL`` (relative).
    """
    p = _point(chart, p)[0]
    g, omega, j = eval_structure(chart, p)
    pk = curvature_packet(chart, p)
    d_omega = -2.0 * pk.rho
    dg = -2.0 * form_to_symmetric(pk.rho11, j) - 2.0 * pk.ric_anti
    dg = 0.5 * (dg + dg.T)
    tensorial = FlowRHS(d_omega, dg, np.linalg.solve(omega, dg - d_omega @ j))

    inv, so, _ = _extract(chart, p, adapted=True)
    d_omega2, dg2 = flow_expansion(inv.R, inv.B, inv.Q, inv.A, so.theta[:2])
    expansion = FlowRHS(d_omega2, dg2, np.linalg.solve(omega, dg2 - d_omega2 @ j))

    scale = 1.0 + max(float(np.max(np.abs(d_omega))), float(np.max(np.abs(dg))))
    diff = max(float(np.max(np.abs(d_omega - d_omega2))), float(np.max(np.abs(dg - dg2)))) / scale
    if diff > DRIFT_TOL:
        raise ConsistencyError(f"tensorial and invariant flow RHS differ by {diff:.3e}")
    return (tensorial, expansion) if both else tensorial


def _k_projector() -> np.ndarray:
    """Orthogonal projector (on R^32 = re/im of K) onto tensors with K's symmetries."""
    perms = ["ijkl->kjil", "ijkl->ilkj"]
    rows = []
    for part in (1.0, 1j):
        for n in range(16):
            e = np.zeros(16, dtype=complex)
            e[n] = part
            t = e.reshape(2, 2, 2, 2)
            cons = [np.einsum(pm, t) - t for pm in perms]
            cons.append(np.conj(np.einsum("ijkl->jilk", t)) - t)
            cons.append(np.einsum("iikl->kl", t))
            vec = np.concatenate([c.ravel() for c in cons])
            rows.append(np.concatenate([vec.real, vec.imag]))
    cmat = np.array(rows).T  # constraints as a real linear map on R^32
    _, s, vt = np.linalg.svd(cmat)
    null = vt[np.sum(s > 1e-10):]
    return null.T @ null


_K_PROJ = _k_projector()
_K_BASIS = _k_basis()


def _project_k(k: np.ndarray) -> np.ndarray:
    """Closest tensor with the symmetries of K (symmetric pairs, trace-free, Hermitian)."""
    v = np.concatenate([k.real.ravel(), k.imag.ravel()])
    v = _K_PROJ @ v
    return (v[:16] + 1j * v[16:]).reshape(2, 2, 2, 2)
