"""Invariant almost-Kaehler geometry on four-dimensional reductive homogeneous spaces.

A space ``G/H`` is given by structure constants ``c[i, j, k]`` with
``[e_i, e_j] = sum_k c[i, j, k] e_k`` for the left-invariant fields of ``G``;
``m_basis`` lists the four transverse directions and the remaining indices
span the isotropy algebra ``h``.  Invariant tensors are arrays over ``m``.
Rational input (``Fraction``, ``int`` or rational strings) is kept exact in
object arrays; float input runs in double precision.

The Levi-Civita connection of an invariant metric is ``Lambda(X) Y =
1/2 [X, Y]_m + U(X, Y)`` with ``g(U(X, Y), Z) = 1/2 (g([Z, X]_m, Y) + g(X,
[Z, Y]_m))`` and curvature ``R(X, Y) = [Lambda(X), Lambda(Y)] - Lambda([X,
Y]_m) - ad([X, Y]_h)``.  The sign of the bracket is the one for which these
formulas reproduce the chart computations on the Kodaira-Thurston structure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np
import sympy

from . import conventions as conv
from .charts import J_STD, OMEGA_STD, unitary_coframe
from .errors import (BlowUp, CompatibilityError, DegenerateMetric, EmptyCandidateSpace,
                     IncompatiblePair, InconsistentDecomposition, NotInvariant)
from .frames import EPS, wedge
from .invariants import CurvaturePacket, FlowRHS, g_norm2, lower_riemann, weyl_blocks

FLOAT_TOL = 1e-10
DECOMPOSITION_TOL = 1e-3


# --------------------------------------------------------------------------
# exact / float helpers

def _frac(x) -> Fraction:
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, Fraction, sympy.Rational)):
        return Fraction(int(sympy.Rational(x).p), int(sympy.Rational(x).q)) \
            if isinstance(x, sympy.Rational) else Fraction(x)
    raise TypeError(f"not a rational value: {x!r}")


def is_rational_like(x) -> bool:
    a = np.asarray(x, dtype=object)
    return all(isinstance(v, (int, Fraction, str, sympy.Rational)) and not isinstance(v, bool)
               for v in a.ravel())


def exact(x) -> np.ndarray:
    """Object array of ``Fraction`` entries."""
    a = np.asarray(x, dtype=object)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = _frac(v)
    return out


def is_exact(*arrays) -> bool:
    return all(isinstance(a, np.ndarray) and a.dtype == object for a in arrays)


def as_float(x) -> np.ndarray:
    return np.asarray(x, dtype=object).astype(float) if np.asarray(x).dtype == object \
        else np.asarray(x, dtype=float)


def _coerce(x):
    """Exact array for rational input, float array otherwise."""
    if isinstance(x, np.ndarray) and x.dtype == object:
        return exact(x)
    if is_rational_like(x) and not isinstance(x, np.ndarray):
        return exact(x)
    return np.asarray(x, dtype=float)


def _inv(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        m = sympy.Matrix(a.shape[0], a.shape[1], [sympy.Rational(v.numerator, v.denominator)
                                                  for v in a.ravel()])
        if m.det() == 0:
            raise np.linalg.LinAlgError("singular matrix")
        return exact(np.array(m.inv().tolist(), dtype=object))
    return np.linalg.inv(a)


def _half(a: np.ndarray):
    return Fraction(1, 2) if a.dtype == object else 0.5


def _is_zero(a, tol: float = FLOAT_TOL) -> bool:
    a = np.asarray(a)
    if a.dtype == object:
        return all(v == 0 for v in a.ravel())
    return bool(np.max(np.abs(a), initial=0.0) <= tol)


def _nullspace_exact(rows: list[list[Fraction]], ncols: int) -> list[np.ndarray]:
    if not rows:
        return [exact(np.eye(ncols, dtype=int)[k]) for k in range(ncols)]
    m = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in r] for r in rows])
    return [exact(np.array([sympy.Rational(x) for x in v], dtype=object)) for v in m.nullspace()]


# --------------------------------------------------------------------------
# spaces

@dataclass(frozen=True)
class CandidateField:
    """A vector field near the origin ``o`` used in soliton fits.

    ``lie`` is the endomorphism ``E`` of ``m`` with ``L_V T = T(E., .) +
    T(., E.)`` on invariant 2-tensors; ``value`` is ``V(o)`` and ``kind`` is
    ``"invariant"`` or ``"scaling"``.
    """

    name: str
    kind: str
    value: np.ndarray
    lie: np.ndarray
    gradient: bool | None = None


@dataclass(frozen=True, eq=False)
class ReductiveSpace:
    """Reductive homogeneous space with an invariant almost-Kaehler pair.

    Parameters
    ----------
    name : str
    c : array_like
        Structure constants ``c[i, j, k]`` (rational).
    m_basis : tuple of int
        Indices of the four transverse directions.
    J0, Omega0 : array_like
        Default invariant structure on ``m`` (``g0 = Omega0 @ J0``).
    scaling : tuple
        Derivations of the Lie algebra (``n x n``, preserving ``h``) whose
        automorphism flows are admitted as soliton vector fields.
    scaling_gradient : tuple of bool
        Whether each scaling field is known to be a gradient field.
    """

    name: str
    c: np.ndarray
    m_basis: tuple
    J0: np.ndarray
    Omega0: np.ndarray
    scaling: tuple = ()
    scaling_gradient: tuple = ()
    labels: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "c", exact(self.c))
        object.__setattr__(self, "m_basis", tuple(int(k) for k in self.m_basis))
        object.__setattr__(self, "J0", _coerce(self.J0))
        object.__setattr__(self, "Omega0", _coerce(self.Omega0))
        object.__setattr__(self, "scaling", tuple(exact(d) for d in self.scaling))
        grads = tuple(bool(x) for x in self.scaling_gradient) or (False,) * len(self.scaling)
        object.__setattr__(self, "scaling_gradient", grads)
        self.validate()

    # -- structure -----------------------------------------------------------
    @property
    def dim_g(self) -> int:
        return self.c.shape[0]

    @property
    def dim_h(self) -> int:
        return self.dim_g - 4

    @property
    def h_basis(self) -> tuple:
        return tuple(k for k in range(self.dim_g) if k not in self.m_basis)

    @cached_property
    def cm(self) -> np.ndarray:
        """``[e_i, e_j]_m`` for ``i, j`` in m, shape (4, 4, 4)."""
        mb = list(self.m_basis)
        return self.c[np.ix_(mb, mb, mb)]

    @cached_property
    def ch(self) -> np.ndarray:
        """h-components of ``[e_i, e_j]`` for ``i, j`` in m, shape (4, 4, dim_h)."""
        mb, hb = list(self.m_basis), list(self.h_basis)
        if not hb:
            return np.zeros((4, 4, 0), dtype=object)
        return self.c[np.ix_(mb, mb, hb)]

    @cached_property
    def adh(self) -> np.ndarray:
        """``ad(Z)`` restricted to m for each isotropy basis vector, shape (dim_h, 4, 4)."""
        mb = list(self.m_basis)
        out = np.zeros((self.dim_h, 4, 4), dtype=object)
        for z, hz in enumerate(self.h_basis):
            # (ad Z e_k)^l = c[Z, k, l]
            out[z] = self.c[hz][np.ix_(mb, mb)].T
        return exact(out) if self.dim_h else out

    @cached_property
    def float_arrays(self):
        return (as_float(self.cm), as_float(self.ch).reshape(4, 4, self.dim_h),
                as_float(self.adh).reshape(self.dim_h, 4, 4))

    @property
    def g0(self) -> np.ndarray:
        return self.Omega0 @ self.J0

    def ad_m(self, v) -> np.ndarray:
        """``X -> [v, X]_m`` on m for ``v`` in m (4-vector)."""
        v = _coerce(v) if not isinstance(v, np.ndarray) else v
        return np.einsum("i,ikl->lk", v, self.cm)

    # -- checks --------------------------------------------------------------
    def jacobi_residual(self):
        c = self.c
        # sum over cyclic (i, j, k) of [[e_i, e_j], e_k]
        t = np.einsum("ijl,lkr->ijkr", c, c)
        cyc = t + np.einsum("ijkr->jkir", t) + np.einsum("ijkr->kijr", t)
        return cyc

    def validate(self) -> None:
        n = self.dim_g
        if self.c.shape != (n, n, n) or n < 4:
            raise ValueError("structure constants must have shape (n, n, n) with n >= 4")
        if len(self.m_basis) != 4 or len(set(self.m_basis)) != 4 or not all(0 <= k < n for k in self.m_basis):
            raise ValueError("m_basis must list four distinct indices")
        if not _is_zero(self.c + np.swapaxes(self.c, 0, 1)):
            raise ValueError("structure constants are not antisymmetric")
        if not _is_zero(self.jacobi_residual()):
            raise ValueError("structure constants violate the Jacobi identity")
        hb, mb = list(self.h_basis), list(self.m_basis)
        if hb:
            if not _is_zero(self.c[np.ix_(hb, hb, mb)]):
                raise ValueError("h is not a subalgebra")
            if not _is_zero(self.c[np.ix_(hb, mb, hb)]):
                raise ValueError("the space is not reductive: [h, m] is not contained in m")
        for d in self.scaling:
            self._check_derivation(d)
        check_pair(self, self.Omega0, self.g0)
        if not _is_zero(ce_differential(self, self.Omega0), tol=1e-12):
            raise CompatibilityError(f"Omega0 of space {self.name!r} is not closed")

    def _check_derivation(self, d: np.ndarray) -> None:
        n = self.dim_g
        if d.shape != (n, n):
            raise ValueError("scaling derivations must be n x n")
        # d[k, l]: component k of D e_l
        lhs = np.einsum("ijl,kl->ijk", self.c, d)
        rhs = np.einsum("li,ljk->ijk", d, self.c) + np.einsum("lj,ilk->ijk", d, self.c)
        if not _is_zero(lhs - rhs):
            raise ValueError("scaling matrix is not a derivation")
        hb, mb = list(self.h_basis), list(self.m_basis)
        if hb and not _is_zero(d[np.ix_(mb, hb)]):
            raise ValueError("scaling derivation does not preserve h")

    # -- vector fields -------------------------------------------------------
    def invariant_fields(self) -> list[np.ndarray]:
        """Basis of ad(h)-fixed vectors in m (exact)."""
        rows = []
        for a in self.adh:
            for r in range(4):
                rows.append([a[r, k] for k in range(4)])
        return _nullspace_exact(rows, 4)

    def candidate_fields(self) -> list[CandidateField]:
        out = []
        for k, v in enumerate(self.invariant_fields()):
            out.append(CandidateField(f"invariant_{k}", "invariant", v, -self.ad_m(v)))
        mb = list(self.m_basis)
        for k, d in enumerate(self.scaling):
            out.append(CandidateField(f"scaling_{k}", "scaling", exact(np.zeros(4, dtype=int)),
                                      d[np.ix_(mb, mb)], self.scaling_gradient[k]))
        return out

    def to_json(self) -> dict:
        return {"name": self.name, "params": {k: str(v) for k, v in self.params.items()},
                "dim_g": self.dim_g, "dim_h": self.dim_h, "m_basis": list(self.m_basis),
                "labels": list(self.labels),
                "structure_constants": [[i, j, k, str(self.c[i, j, k])]
                                        for i, j, k in itertools.product(range(self.dim_g), repeat=3)
                                        if self.c[i, j, k] != 0 and i < j]}


def check_pair(space: ReductiveSpace, omega, g):
    """Validate an invariant pair and return ``(Omega, g, J)`` in a common arithmetic.

    Raises
    ------
    DegenerateMetric
        ``g`` is not symmetric positive definite.
    IncompatiblePair
        ``Omega`` is degenerate or not antisymmetric, or ``J = Omega^-1 g`` does not square to -1.
    NotInvariant
        ``Omega`` or ``g`` is not ad(h)-invariant.
    """
    omega, g = _coerce(omega), _coerce(g)
    if omega.dtype != g.dtype:
        omega, g = as_float(omega), as_float(g)
    if omega.shape != (4, 4) or g.shape != (4, 4):
        raise IncompatiblePair("Omega and g must be 4x4")
    gf = as_float(g)
    if not np.all(np.isfinite(gf)) or not _is_zero(g - g.T, 1e-12 * (1 + np.max(np.abs(gf)))):
        raise DegenerateMetric("g is not symmetric")
    if np.min(np.linalg.eigvalsh(gf)) <= 1e-12 * max(1.0, float(np.max(np.abs(gf)))):
        raise DegenerateMetric("g is not positive definite")
    if not _is_zero(omega + omega.T, 1e-12 * (1 + np.max(np.abs(as_float(omega))))):
        raise IncompatiblePair("Omega is not antisymmetric")
    try:
        j = _inv(omega) @ g
    except np.linalg.LinAlgError as exc:
        raise IncompatiblePair("Omega is degenerate") from exc
    scale = 1.0 + float(np.max(np.abs(as_float(j))))
    if not _is_zero(j @ j + np.eye(4, dtype=int), 1e-9 * scale ** 2):
        raise IncompatiblePair("J = Omega^-1 g does not square to -1")
    for a in space.adh:
        a = a if omega.dtype == object else as_float(a)
        if not _is_zero(a.T @ omega + omega @ a, 1e-9) or not _is_zero(a.T @ g + g @ a, 1e-9):
            raise NotInvariant("Omega or g is not ad(h)-invariant")
    return omega, g, j


# --------------------------------------------------------------------------
# Chevalley-Eilenberg differential

def _check_form_invariant(space: ReductiveSpace, form: np.ndarray) -> None:
    k = form.ndim
    for a in space.adh:
        a = a if form.dtype == object else as_float(a)
        # (Z . phi)(X_1..X_k) = -sum_r phi(.., [Z, X_r], ..)
        total = np.zeros(form.shape, dtype=form.dtype) if form.dtype != object else exact(np.zeros(form.shape, dtype=int))
        for r in range(k):
            total = total + np.moveaxis(np.tensordot(form, a, axes=([r], [0])), -1, r)
        if not _is_zero(total, 1e-10 * (1.0 + float(np.max(np.abs(as_float(form)), initial=0.0)))):
            raise NotInvariant("form is not ad(h)-invariant")


def ce_differential(space: ReductiveSpace, form) -> np.ndarray:
    """Chevalley-Eilenberg differential of an invariant k-form on m.

    ``form`` is a fully antisymmetric array of rank k over m (a scalar for
    k = 0), with ``phi(e_i1, ..., e_ik) = form[i1, ..., ik]``.  For invariant
    forms ``d phi(X_0, ..., X_k) = sum_{a<b} (-1)^(a+b) phi([X_a, X_b], X_0,
    .., X_k)`` with the hatted arguments omitted.

    Raises
    ------
    NotInvariant
        If the form is not ad(h)-invariant.
    """
    form = _coerce(form)
    k = form.ndim
    if any(s != 4 for s in form.shape):
        raise ValueError("forms are arrays over the four directions of m")
    if k == 0:
        return exact(np.zeros(4, dtype=int)) if form.dtype == object else np.zeros(4)
    _check_form_invariant(space, form)
    cm = space.cm if form.dtype == object else as_float(space.cm)
    out = np.empty((4,) * (k + 1), dtype=object if form.dtype == object else float)
    for idx in itertools.product(range(4), repeat=k + 1):
        val = 0
        for a in range(k + 1):
            for b in range(a + 1, k + 1):
                rest = idx[:a] + idx[a + 1:b] + idx[b + 1:]
                br = cm[idx[a], idx[b]]
                sub = form[(slice(None),) + rest]
                val = val + (-1) ** (a + b) * np.dot(br, sub)
        out[idx] = val
    return exact(out) if form.dtype == object else out


# --------------------------------------------------------------------------
# curvature

def _curvature4(lam, cm, ch, adh):
    """``r4[i, j, l, k] = (R(e_i, e_j) e_k)^l`` for the invariant connection ``lam``."""
    ll = np.matmul(lam[:, None], lam[None, :])
    r4 = ll - np.swapaxes(ll, 0, 1) - (cm.reshape(16, 4) @ lam.reshape(4, 16)).reshape(4, 4, 4, 4)
    if adh.shape[0]:
        nh = adh.shape[0]
        r4 = r4 - (ch.reshape(16, nh) @ adh.reshape(nh, 16)).reshape(4, 4, 4, 4)
    return r4


def _levi_civita(cm, g, ginv, half):
    a = cm @ g
    w = half * (a.transpose(1, 2, 0) + a.transpose(2, 1, 0))
    return np.swapaxes(half * cm + w @ ginv.T, 1, 2)


def _core(space: ReductiveSpace, omega, g, j):
    ex = omega.dtype == object
    cm, ch, adh = (space.cm, space.ch, space.adh) if ex else space.float_arrays
    half = _half(omega)
    ginv = _inv(g)
    lam = _levi_civita(cm, g, ginv, half)
    nj = np.einsum("ilk,km->ilm", lam, j) - np.einsum("lk,ikm->ilm", j, lam)
    lam_c = lam - half * np.einsum("lk,ikm->ilm", j, nj)
    r4 = _curvature4(lam, cm, ch, adh)
    r4c = _curvature4(lam_c, cm, ch, adh)
    return lam, nj, lam_c, r4, r4c, ginv


@dataclass
class HomogeneousGeometry:
    """Invariant tensors at the origin, as arrays over m.

    ``nijenhuis[k, i, j]`` is ``N(e_i, e_j)^k``; ``rup[l, k, i, j]`` is
    ``(R(e_i, e_j) e_k)^l``; ``lam[i]`` and ``lam_chern[i]`` are the matrices
    of ``nabla_{e_i}`` on invariant fields.
    """

    omega: np.ndarray
    g: np.ndarray
    j: np.ndarray
    lam: np.ndarray
    lam_chern: np.ndarray
    nijenhuis: np.ndarray
    rup: np.ndarray
    riemann: np.ndarray
    ric: np.ndarray
    scal: object
    rho: np.ndarray
    ric_anti: np.ndarray
    rho11: np.ndarray
    exact: bool

    def packet(self) -> CurvaturePacket:
        g, j = as_float(self.g), as_float(self.j)
        riem = as_float(self.riemann)
        wplus, wminus = weyl_blocks(riem, g, j)
        return CurvaturePacket(riem, as_float(self.ric), float(self.scal), wplus, wminus,
                               as_float(self.rho), as_float(self.ric_anti), as_float(self.rho11))

    def flow_rhs(self) -> FlowRHS:
        d_omega = -2 * self.rho
        dg = -2 * (self.rho11 @ self.j) - 2 * self.ric_anti
        dg = _half(dg) * (dg + dg.T)
        dj = _inv(self.omega) @ (dg - d_omega @ self.j)
        return FlowRHS(d_omega, dg, dj)

    @property
    def n_tensor_norm(self) -> float:
        g = as_float(self.g)
        ginv = np.linalg.inv(g)
        n = as_float(self.nijenhuis)
        return float(np.sqrt(abs(np.einsum("kij,lmn,kl,im,jn->", n, n, g, ginv, ginv))))

    @property
    def n_norm2(self) -> float:
        """``|N_1|^2 + |N_2|^2`` in the frame normalization."""
        return (self.n_tensor_norm / conv.NIJENHUIS_TENSOR_C) ** 2

    def curvature_norm(self) -> float:
        g = as_float(self.g)
        ginv = np.linalg.inv(g)
        r = as_float(self.riemann)
        return float(np.sqrt(abs(np.einsum("abcd,efgh,ae,bf,cg,dh->", r, r, ginv, ginv, ginv, ginv))))

    def summary(self) -> dict:
        return {"scal": float(self.scal), "n_norm2": self.n_norm2,
                "nijenhuis": as_float(self.nijenhuis).tolist(), "ric": as_float(self.ric).tolist(),
                "rho": as_float(self.rho).tolist(), "exact": self.exact}


def invariant_geometry(space: ReductiveSpace, omega=None, g=None) -> HomogeneousGeometry:
    """Nijenhuis tensor, Levi-Civita curvature and Chern-Ricci form of an invariant pair.

    Exact rational arithmetic is used when the space and the pair are rational.
    """
    omega = space.Omega0 if omega is None else omega
    g = space.g0 if g is None else g
    omega, g, j = check_pair(space, omega, g)
    lam, nj, lam_c, r4, r4c, _ = _core(space, omega, g, j)
    half = _half(omega)
    # N(X, Y) = (nabla_JX J) Y - (nabla_JY J) X - J (nabla_X J) Y + J (nabla_Y J) X
    t1 = np.einsum("pi,pkj->kij", j, nj)
    t2 = np.einsum("kl,ilj->kij", j, nj)
    n = t1 - np.swapaxes(t1, 1, 2) - t2 + np.swapaxes(t2, 1, 2)
    rup = np.einsum("ijlk->lkij", r4)
    riem = lower_riemann(g, rup)
    ric = np.einsum("lcla->ac", rup)
    ric = half * (ric + ric.T)
    scal = np.trace(_inv(g) @ ric)
    sign = Fraction(int(conv.RHO_TRACE_SIGN)) if omega.dtype == object else conv.RHO_TRACE_SIGN
    rho = sign * half * np.einsum("kl,ijlk->ij", j, r4c)
    rho = half * (rho - rho.T)
    ric_anti = half * (ric - j.T @ ric @ j)
    rho11 = half * (rho + j.T @ rho @ j)
    return HomogeneousGeometry(omega, g, j, lam, lam_c, n, rup, riem, ric, scal, rho, ric_anti, rho11,
                               omega.dtype == object)


# --------------------------------------------------------------------------
# registered spaces

def _zeros_c(n: int) -> np.ndarray:
    return exact(np.zeros((n, n, n), dtype=int))


def _set_bracket(c: np.ndarray, i: int, j: int, vec: dict) -> None:
    for k, v in vec.items():
        c[i, j, k] = Fraction(v)
        c[j, i, k] = -Fraction(v)


def abelian_space(**params) -> ReductiveSpace:
    """R^4 with the standard flat structure and the Euler scaling field."""
    return ReductiveSpace("abelian", _zeros_c(4), (0, 1, 2, 3), exact(J_STD.astype(int)),
                          exact(OMEGA_STD.astype(int)), scaling=(np.eye(4, dtype=int),),
                          scaling_gradient=(True,), labels=("e1", "e2", "e3", "e4"), params=dict(params))


def kodaira_thurston_space(**params) -> ReductiveSpace:
    """Heisenberg x R with ``[e1, e2] = e3``, ``Omega = e1^e3 + e2^e4`` and ``g = sum e_k^2``."""
    c = _zeros_c(4)
    _set_bracket(c, 0, 1, {2: 1})
    omega = exact([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]])
    j = _inv(omega)
    return ReductiveSpace("kodaira_thurston", c, (0, 1, 2, 3), j, omega,
                          scaling=(np.diag([1, 1, 2, 1]),), labels=("e1", "e2", "e3", "e4"),
                          params=dict(params))


# basis order of the affine algebra: alpha_1, alpha_2, alpha_3, alpha_4, beta
AFFINE_LABELS = ("alpha1", "alpha2", "alpha3", "alpha4", "beta")


def affine_mu(coeffs) -> np.ndarray:
    """The 3x3 matrix of the Maurer-Cartan form evaluated on ``sum coeffs[k] e_k``."""
    a1, a2, a3, a4, b = coeffs
    z = 0 * a1
    return np.array([[z, z, z], [a1, a3, b - a4], [a2, -b - a4, -a3]], dtype=object)


def _read_mu(mat: np.ndarray) -> list:
    """Inverse of :func:`affine_mu` on the affine Lie algebra."""
    return [mat[1, 0], mat[2, 0], mat[1, 1], -(mat[1, 2] + mat[2, 1]) / 2, (mat[1, 2] - mat[2, 1]) / 2]


def affine_structure_constants() -> np.ndarray:
    """Structure constants of sl(2, R) x| R^2 read off from matrix commutators."""
    basis = [affine_mu([Fraction(int(k == l)) for k in range(5)]) for l in range(5)]
    c = _zeros_c(5)
    for i in range(5):
        for j in range(5):
            comm = basis[i] @ basis[j] - basis[j] @ basis[i]
            c[i, j] = np.array(_read_mu(comm), dtype=object)
    return c


def _rational_param(x, name: str) -> Fraction | float:
    if isinstance(x, float) and not x.is_integer():
        return x
    try:
        v = _frac(x) if not isinstance(x, float) else Fraction(int(x))
    except (TypeError, ValueError, ZeroDivisionError):
        v = float(x)
    if v == 0:
        raise ValueError(f"parameter {name} must be non-zero")
    return v


def affine_pair(a, b):
    """``Omega_{a,b} = a^2 alpha1^alpha2 + b^2 alpha3^alpha4`` and ``g_{a,b}``."""
    a, b = _rational_param(a, "a"), _rational_param(b, "b")
    p, q = a * a, b * b
    omega = np.array([[0, p, 0, 0], [-p, 0, 0, 0], [0, 0, 0, q], [0, 0, -q, 0]], dtype=object)
    g = np.array([[p, 0, 0, 0], [0, p, 0, 0], [0, 0, q, 0], [0, 0, 0, q]], dtype=object)
    if isinstance(p, float) or isinstance(q, float):
        return omega.astype(float), g.astype(float)
    return exact(omega), exact(g)


def affine_space(a=1, b=1, **params) -> ReductiveSpace:
    """``SL(2, R) x| R^2 / S^1`` with the pair ``(Omega_{a,b}, g_{a,b})``.

    The scaling field is the automorphism flow dilating the translations.
    """
    omega, g = affine_pair(a, b)
    j = _inv(omega) @ g
    return ReductiveSpace("affine", affine_structure_constants(), (0, 1, 2, 3), j, omega,
                          scaling=(np.diag([1, 1, 0, 0, 0]),), labels=AFFINE_LABELS,
                          params={"a": a, "b": b, **params})


def hyperbolic_product_space(**params) -> ReductiveSpace:
    """``(SL(2, R) / SO(2))^2`` as a symmetric space; each factor has curvature -1."""
    # basis X1, X2, Y1, Y2, Z1, Z2 with [X1, X2] = -Z1, [Z1, X1] = X2, [Z1, X2] = -X1
    c = _zeros_c(6)
    for x1, x2, z in ((0, 1, 4), (2, 3, 5)):
        _set_bracket(c, x1, x2, {z: -1})
        _set_bracket(c, z, x1, {x2: 1})
        _set_bracket(c, z, x2, {x1: -1})
    return ReductiveSpace("hyperbolic_product", c, (0, 1, 2, 3), exact(J_STD.astype(int)),
                          exact(OMEGA_STD.astype(int)), labels=("X1", "X2", "Y1", "Y2", "Z1", "Z2"),
                          params=dict(params))


SPACES: dict[str, Callable[..., ReductiveSpace]] = {
    "abelian": abelian_space,
    "kodaira_thurston": kodaira_thurston_space,
    "affine": affine_space,
    "hyperbolic_product": hyperbolic_product_space,
}


def make_space(name: str, **params) -> ReductiveSpace:
    try:
        factory = SPACES[name]
    except KeyError:
        raise ValueError(f"unknown space {name!r}; known: {sorted(SPACES)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# flow

def _float_rhs(space: ReductiveSpace):
    """Return a fast float RHS for ``space`` acting on stacked states.

    The returned function maps ``y = [Omega, g]`` (shape (2, 4, 4)) to
    ``[dOmega, dg]``.

    Only the Ricci contraction of the Levi-Civita curvature and the ``J``-trace
    of the Chern curvature are formed; everything linear in the structure
    constants is precomputed, which keeps the per-call numpy overhead low.
    """
    cm, ch, adh = space.float_arrays
    nh = adh.shape[0]
    # lam[p] = lam0[p] + ginv @ (g.ravel() @ koszul)[p]
    lam0 = 0.5 * np.swapaxes(cm, 1, 2).copy()
    koszul = np.empty((16, 64))
    for n in range(16):
        e = np.zeros(16)
        e[n] = 1.0
        a = cm @ e.reshape(4, 4)
        koszul[n] = (0.5 * (a.transpose(1, 2, 0) + a.transpose(2, 1, 0))).transpose(0, 2, 1).ravel()
    cm_ric = cm.transpose(1, 2, 0).reshape(4, 16)
    diag = np.eye(4).ravel()
    ric_iso = np.einsum("ijz,zik->jk", ch, adh) if nh else np.zeros((4, 4))
    sign = conv.RHO_TRACE_SIGN * 0.5
    # linear part of rho: [cm | ch] acting on the J-traces of (lam_chern_m, ad Z_z)
    rho_lin = sign * np.concatenate([cm.reshape(16, 4), ch.reshape(16, nh)], axis=1)
    adh_flat = adh.reshape(nh, 16)
    inv = np.linalg.inv

    def rhs(y):
        # y[0] = Omega, y[1] = g; returns the same layout
        g = y[1]
        oinv, ginv = inv(y)
        j = oinv @ g
        jt = j.T
        jj = j @ j
        lam = lam0 + ginv @ (g.ravel() @ koszul).reshape(4, 4, 4)
        lam16 = lam.reshape(16, 4)
        # antisymmetric parts of ric cancel in dg below
        ric = (diag @ lam16) @ lam - (lam.reshape(4, 16) + cm_ric) @ lam16 - ric_iso
        lc = lam + 0.5 * (jj @ lam - (j @ lam) @ j)
        lc4 = lc.reshape(4, 16)
        mats = np.concatenate([lc4, adh_flat]) if nh else lc4
        pm = (lc.transpose(0, 2, 1) @ (sign * jt)).reshape(4, 16) @ lc4.T
        # exactly antisymmetric by construction
        rho = pm - pm.T - (rho_lin @ (mats @ jt.ravel())).reshape(4, 4)
        dg = jt @ (ric @ j - rho @ jj) - rho @ j - ric
        out = np.empty((2, 4, 4))
        out[0] = -2.0 * rho
        np.add(dg, dg.T, out=out[1])
        out[1] *= 0.5
        return out

    return rhs


def _rhs_float(space: ReductiveSpace, omega: np.ndarray, g: np.ndarray):
    """Float flow RHS without validation."""
    out = _float_rhs(space)(np.stack([omega, g]))
    return out[0], out[1]


def diagnostics(space: ReductiveSpace, omega, g) -> dict:
    """Scal, |N|^2 and scale-free invariants of an invariant pair.

    The scale-free list divides by the curvature norm ``|Rm|_g``, which has
    the same weight as Scal under ``g -> c g``; it is constant along a flow
    line that moves only by rescaling and automorphisms.
    """
    geo = invariant_geometry(space, as_float(omega), as_float(g))
    scal, n2 = float(geo.scal), geo.n_norm2
    rm = geo.curvature_norm()
    gf = as_float(geo.g)
    ric_eigs = np.sort(np.linalg.eigvals(np.linalg.solve(gf, as_float(geo.ric))).real)
    rho_norm = g_norm2(as_float(geo.rho), gf)
    scale = rm if rm > 1e-12 else 0.0
    inv = 1.0 / scale if scale else 0.0
    invariants = {"scal_over_rm": scal * inv, "n2_over_rm": n2 * inv, "rho_over_rm": rho_norm * inv}
    for k, e in enumerate(ric_eigs):
        invariants[f"ric_eig{k}_over_rm"] = float(e) * inv
    return {"scal": scal, "n_norm2": n2, "rm_norm": rm, "dimensionless": invariants}


@dataclass
class FlowTrajectory:
    """Recorded states of the invariant flow ODE.

    ``states[k]`` is ``(Omega, g)`` at ``times[k]``; ``diagnostics[k]`` holds
    Scal, ``|N|^2`` and the scale-free invariants.
    """

    space: str
    times: list
    states: list
    diagnostics: list
    dt: float
    checks: dict = field(default_factory=dict)

    def coefficient(self, i: int, jdx: int, which: str = "omega") -> np.ndarray:
        k = 0 if which == "omega" else 1
        return np.array([s[k][i, jdx] for s in self.states])

    def state_at(self, t: float):
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded")
        return self.states[k]

    def invariant_drift(self) -> dict:
        """Max deviation of each scale-free invariant from its initial value."""
        first = self.diagnostics[0]["dimensionless"]
        return {k: max(abs(d["dimensionless"][k] - v) for d in self.diagnostics) for k, v in first.items()}

    def csv_header(self) -> list[str]:
        iu = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        ig = [(i, j) for i in range(4) for j in range(i, 4)]
        cols = ["t"] + [f"omega_{i}{j}" for i, j in iu] + [f"g_{i}{j}" for i, j in ig] + ["scal", "n_norm2"]
        cols += sorted(self.diagnostics[0]["dimensionless"]) if self.diagnostics else []
        return cols

    def csv_rows(self) -> list[list[str]]:
        iu = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        ig = [(i, j) for i in range(4) for j in range(i, 4)]
        rows = []
        for t, (om, g), d in zip(self.times, self.states, self.diagnostics):
            vals = [t] + [om[i, j] for i, j in iu] + [g[i, j] for i, j in ig] + [d["scal"], d["n_norm2"]]
            vals += [d["dimensionless"][k] for k in sorted(d["dimensionless"])]
            rows.append([repr(float(v)) for v in vals])
        return rows


def integrate_flow(space: ReductiveSpace, omega0=None, g0=None, T: float = 1.0, dt: float = 1e-3,
                   record_every: int | None = None, with_diagnostics: bool = True) -> FlowTrajectory:
    """Classical RK4 on the coefficients of ``(Omega, g)``.

    ``J = Omega^-1 g`` is recomputed at every stage.  States are recorded
    every ``record_every`` steps (default: 100 records over ``[0, T]``) and at
    ``T``.

    Raises
    ------
    BlowUp
        If the metric stops being positive definite or a coefficient becomes non-finite.
    """
    if not (T > 0 and dt > 0 and math.isfinite(T) and math.isfinite(dt)):
        raise ValueError("T and dt must be positive and finite")
    omega0 = space.Omega0 if omega0 is None else omega0
    g0 = space.g0 if g0 is None else g0
    omega, g, _ = check_pair(space, omega0, g0)
    omega, g = as_float(omega), as_float(g)
    nsteps = max(1, int(round(T / dt)))
    if abs(nsteps * dt - T) > 1e-9 * T:
        nsteps = int(math.ceil(T / dt))
    h = T / nsteps
    if record_every is None:
        record_every = max(1, nsteps // 100)

    times, states = [0.0], [(omega.copy(), g.copy())]
    last_good = 0.0
    rhs = _float_rhs(space)
    y = np.stack([0.5 * (omega - omega.T), 0.5 * (g + g.T)])
    h2, h6 = 0.5 * h, h / 6.0
    for n in range(nsteps):
        try:
            k1 = rhs(y)
            k2 = rhs(y + h2 * k1)
            k3 = rhs(y + h2 * k2)
            k4 = rhs(y + h * k3)
        except np.linalg.LinAlgError:
            raise BlowUp(f"degenerate pair near t = {last_good:.6g}", last_good) from None
        k2 += k3
        k2 *= 2.0
        k2 += k1
        k2 += k4
        # the update keeps Omega and g exactly (anti)symmetric: mirrored
        # entries go through identical float operations
        y = y + h6 * k2
        try:
            if not np.isfinite(y).all():
                raise np.linalg.LinAlgError
            np.linalg.cholesky(y[1])
        except np.linalg.LinAlgError:
            raise BlowUp(f"metric lost positivity at t = {(n + 1) * h:.6g}", last_good) from None
        last_good = (n + 1) * h
        if (n + 1) % record_every == 0 or n + 1 == nsteps:
            times.append((n + 1) * h)
            states.append((y[0].copy(), y[1].copy()))

    checks = {"j_squared": 0.0, "d_omega": 0.0, "min_g_eigenvalue": float("inf")}
    diags = []
    for om, gm in states:
        j = np.linalg.solve(om, gm)
        checks["j_squared"] = max(checks["j_squared"], float(np.max(np.abs(j @ j + np.eye(4)))))
        checks["d_omega"] = max(checks["d_omega"], float(np.max(np.abs(ce_differential(space, om)), initial=0.0)))
        checks["min_g_eigenvalue"] = min(checks["min_g_eigenvalue"], float(np.min(np.linalg.eigvalsh(gm))))
        if with_diagnostics:
            diags.append(diagnostics(space, om, gm))
    return FlowTrajectory(space.name, times, states, diags, h, checks)


# --------------------------------------------------------------------------
# vector fields and solitons

def _full(eta: np.ndarray) -> np.ndarray:
    return np.concatenate([eta, np.conj(eta)], axis=0)


def frame_nijenhuis_from_tensor(n: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """``(N_1, N_2)`` from the Nijenhuis tensor ``n[k, i, j]`` in the unitary coframe ``eta``.

    With ``d eta_i = ... + N_i conj(eta_1) ^ conj(eta_2)`` one has
    ``N_i = 1/4 eta_i(N_J(Z1bar, Z2bar))`` for the dual (0,1)-frame.
    """
    dual = np.linalg.inv(_full(eta))
    v = np.einsum("kij,i,j->k", as_float(n), dual[:, 2], dual[:, 3])
    return 0.25 * (eta @ v)


@dataclass
class VectorDerivative:
    """``d V_i + kappa_ij V_j = (W_ij + Y delta_ij) eta_j + (S_ij + U eps_ij) conj(eta_j)``."""

    U: complex
    S: np.ndarray
    W: np.ndarray
    Y: complex
    V: np.ndarray
    N: np.ndarray
    eta: np.ndarray
    lie_omega: np.ndarray | None = None
    lie_g: np.ndarray | None = None
    residual: float = 0.0

    def to_json(self) -> dict:
        def c(z):
            return [float(np.real(z)), float(np.imag(z))]
        return {"U": c(self.U), "Y": c(self.Y), "S": [[c(z) for z in r] for r in self.S],
                "W": [[c(z) for z in r] for r in self.W], "V": [c(z) for z in self.V],
                "N": [c(z) for z in self.N], "lie_residual": self.residual}


def components_from_nabla(m: np.ndarray, eta: np.ndarray):
    """Split ``m[k, i] = (nabla^C_{e_i} V)^k`` into ``(U, S, W, Y)``."""
    coeff = (eta @ m) @ np.linalg.inv(_full(eta))
    p, pp = coeff[:, :2], coeff[:, 2:]
    y = 0.5 * np.trace(p)
    w = p - y * np.eye(2)
    s = 0.5 * (pp + pp.T)
    u = (pp[0, 1] - pp[1, 0]) / (EPS[0, 1] - EPS[1, 0])
    return complex(u), s, w, complex(y)


def lie_from_components(U, S, W, Y, V, N, eta):
    """``(L_V Omega, L_V g)`` from the decomposition, the Nijenhuis components and ``V_i``.

    ``L_V T(X, Y) = T(A X, Y) + T(X, A Y)`` with ``A X = nabla^C_X V +
    T^C(V, X)`` and ``eta_k(T^C(V, X)) = N_k (conj(eta_1) ^ conj(eta_2))(V, X)``.
    """
    eta = np.asarray(eta)
    eb = np.conj(eta)
    p = W + Y * np.eye(2)
    pp = S + U * EPS + 2.0 * np.outer(N, EPS.T @ np.conj(V))
    a = p @ eta + pp @ eb
    h = np.einsum("ka,kb->ab", a, eb) + np.einsum("ka,kb->ab", eta, np.conj(a))
    return -h.imag, h.real


def lie_omega_display(U, W, Y, V, N, eta) -> np.ndarray:
    """Closed-form ``L_V Omega`` in the invariants.

    ``-(i/2)(W_ij + conj(W_ji)) conj(eta_i)^eta_j + 2 Re(Y) Omega
    - Im((conj(U) + V_i conj(N_i)) eta_1^eta_2)``.
    """
    e, eb = eta, np.conj(eta)
    omega = (0.5j * (wedge(e[0], eb[0]) + wedge(e[1], eb[1]))).real
    out = 2.0 * np.real(Y) * omega - ((np.conj(U) + V @ np.conj(N)) * wedge(e[0], e[1])).imag
    herm = W + np.conj(W).T
    for i in range(2):
        for k in range(2):
            out = out + (-0.5j * herm[i, k] * wedge(eb[i], e[k])).real
    return out


def _unitary(geo: HomogeneousGeometry) -> np.ndarray:
    return unitary_coframe(as_float(geo.g), as_float(geo.omega), as_float(geo.j)).eta


def _combine(candidates: list[CandidateField], coeffs) -> tuple[np.ndarray, np.ndarray]:
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    if len(coeffs) != len(candidates):
        raise ValueError(f"expected {len(candidates)} coefficients, got {len(coeffs)}")
    v = sum((c * as_float(f.value) for c, f in zip(coeffs, candidates)), np.zeros(4))
    e = sum((c * as_float(f.lie) for c, f in zip(coeffs, candidates)), np.zeros((4, 4)))
    return v, e


def _lie_endo(t: np.ndarray, e: np.ndarray) -> np.ndarray:
    return e.T @ t + t @ e


def _decompose_space(space: ReductiveSpace, coeffs, omega=None, g=None, candidates=None) -> VectorDerivative:
    geo = invariant_geometry(space, omega, g)
    cands = space.candidate_fields() if candidates is None else candidates
    coeffs = np.zeros(len(cands)) if coeffs is None else coeffs
    lam_c = as_float(geo.lam_chern)
    m = np.zeros((4, 4))
    for c, f in zip(np.asarray(coeffs, dtype=float), cands):
        if f.kind == "scaling":
            m = m + c * as_float(f.lie)
        else:
            m = m + c * np.einsum("ilk,k->li", lam_c, as_float(f.value))
    v, e = _combine(cands, coeffs)
    eta = _unitary(geo)
    n = frame_nijenhuis_from_tensor(geo.nijenhuis, eta)
    vc = eta @ v
    u, s, w, y = components_from_nabla(m, eta)
    lo, lg = _lie_endo(as_float(geo.omega), e), _lie_endo(as_float(geo.g), e)
    lo2, lg2 = lie_from_components(u, s, w, y, vc, n, eta)
    scale = 1.0 + max(np.max(np.abs(lo)), np.max(np.abs(lg)))
    res = float(max(np.max(np.abs(lo - lo2)), np.max(np.abs(lg - lg2))) / scale)
    if res > DECOMPOSITION_TOL:
        raise InconsistentDecomposition(f"Lie derivatives disagree with the decomposition ({res:.3e})")
    return VectorDerivative(u, s, w, y, vc, n, eta, lo, lg, res)


def _decompose_chart(chart, field_fn, p) -> VectorDerivative:
    from .charts import eval_structure
    from .frames import CoframeField
    from .invariants import _point, chern_gamma_fn, nijenhuis

    p = _point(chart, p)
    g, omega, j = eval_structure(chart, p[0])
    vfn = lambda x: np.asarray(field_fn(np.atleast_2d(x)), dtype=float).reshape(-1, 4)
    v = vfn(p)[0]
    dv = chart.d(vfn)(p)[0]  # dv[k, i] = d_i V^k
    gamma = chern_gamma_fn(chart)(p)[0]
    m = dv + np.einsum("kij,j->ki", gamma, v)
    eta = CoframeField.at(chart, p[0]).eta(p)[0]
    n = frame_nijenhuis_from_tensor(nijenhuis(chart, p[0]), eta)
    vc = eta @ v
    u, s, w, y = components_from_nabla(m, eta)
    dg = chart.d(chart.metric_fn)(p)[0]
    do = chart.d(chart.omega_fn)(p)[0]
    lg = np.einsum("c,abc->ab", v, dg) + g.T @ dv + dv.T @ g
    lo = np.einsum("c,abc->ab", v, do) + dv.T @ omega + omega @ dv
    lo2, lg2 = lie_from_components(u, s, w, y, vc, n, eta)
    scale = 1.0 + max(np.max(np.abs(lo)), np.max(np.abs(lg)))
    res = float(max(np.max(np.abs(lo - lo2)), np.max(np.abs(lg - lg2))) / scale)
    if res > DECOMPOSITION_TOL:
        raise InconsistentDecomposition(f"Lie derivatives disagree with the decomposition ({res:.3e})")
    return VectorDerivative(u, s, w, y, vc, n, eta, lo, lg, res)


def decompose_vector_derivative(target, V=None, point=None, omega=None, g=None,
                                candidates=None) -> VectorDerivative:
    """Decompose the Chern-covariant derivative of a vector field.

    Parameters
    ----------
    target : ReductiveSpace or Chart
    V : array_like or callable
        On a space: coefficients over ``candidates`` (default
        ``space.candidate_fields()``; ``None`` means V = 0).  On a chart: a
        vectorized function returning the coordinate components of V.
    point : array_like, optional
        Chart point (ignored for spaces, which are evaluated at the origin).

    Raises
    ------
    InconsistentDecomposition
        If ``L_V Omega`` or ``L_V g`` computed directly differ from the
        expansion in ``(U, S, W, Y)`` by more than ``1e-3`` (relative).
    """
    if isinstance(target, ReductiveSpace):
        return _decompose_space(target, V, omega, g, candidates)
    if V is None:
        V = lambda x: np.zeros((np.atleast_2d(x).shape[0], 4))
    return _decompose_chart(target, V, point)


@dataclass
class PairInvariants:
    """Second-order invariants of an invariant pair read off from the flow RHS."""

    R: float
    B: complex
    Q: np.ndarray
    A: np.ndarray
    N: np.ndarray
    eta: np.ndarray
    residual: float


def _invariant_basis(eta):
    from .invariants import flow_expansion

    z2, z22 = np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex)
    cols = []

    def add(R=0.0, B=0j, Q=z2, A=z22):
        do, dg = flow_expansion(R, B, Q, A, eta)
        cols.append(np.concatenate([do.ravel(), dg.ravel()]))

    add(R=1.0)
    add(B=1.0)
    add(B=1j)
    add(Q=np.array([[1, 0], [0, -1]], dtype=complex))
    add(Q=np.array([[0, 1], [1, 0]], dtype=complex))
    add(Q=np.array([[0, 1j], [-1j, 0]], dtype=complex))
    for (i, k) in ((0, 0), (0, 1), (1, 1)):
        for ph in (1.0, 1j):
            a = np.zeros((2, 2), dtype=complex)
            a[i, k] = a[k, i] = ph
            add(A=a)
    return np.array(cols).T


def pair_invariants(space: ReductiveSpace, omega=None, g=None, geo: HomogeneousGeometry | None = None) -> PairInvariants:
    """``(R, B, Q, A, N)`` of an invariant pair in its default unitary coframe."""
    geo = invariant_geometry(space, omega, g) if geo is None else geo
    eta = _unitary(geo)
    rhs = geo.flow_rhs()
    target = np.concatenate([as_float(rhs.dOmega).ravel(), as_float(rhs.dg).ravel()])
    basis = _invariant_basis(eta)
    x, *_ = np.linalg.lstsq(basis, target, rcond=None)
    res = float(np.max(np.abs(basis @ x - target))) / (1.0 + float(np.max(np.abs(target))))
    if res > 1e-8:
        raise InconsistentDecomposition(f"flow RHS is not spanned by the invariant expansion ({res:.3e})")
    q = np.array([[x[3], x[4] + 1j * x[5]], [x[4] - 1j * x[5], -x[3]]])
    a = np.array([[x[6] + 1j * x[7], x[8] + 1j * x[9]], [x[8] + 1j * x[9], x[10] + 1j * x[11]]])
    n = frame_nijenhuis_from_tensor(geo.nijenhuis, eta)
    return PairInvariants(float(x[0]), complex(x[1] + 1j * x[2]), q, a, n, eta, res)


@dataclass
class SolitonCertificate:
    """Least-squares soliton fit ``dOmega = lam Omega + L_V Omega``, ``dg = lam g + L_V g``."""

    mode: str
    lam: float
    V: list
    candidates: list
    residual: float
    residual_omega: float
    residual_g: float
    components: VectorDerivative | None
    conditions: dict
    tol: float
    passed: bool

    def to_json(self) -> dict:
        return {"mode": self.mode, "lambda": self.lam, "V": list(self.V),
                "candidates": list(self.candidates), "residual": self.residual,
                "residual_omega": self.residual_omega, "residual_g": self.residual_g,
                "components": self.components.to_json() if self.components is not None else None,
                "conditions": self.conditions, "tol": self.tol, "pass": self.passed,
                "conventions": conv.ledger()}


def _gnorm(t: np.ndarray, frame: np.ndarray) -> float:
    return float(np.linalg.norm(frame.T @ t @ frame))


def _clean(x: float, tol: float = 1e-13) -> float:
    return 0.0 if abs(x) < tol else float(x)


def soliton_residual(space: ReductiveSpace, omega=None, g=None, candidates=None, mode: str = "general",
                     tol: float = 1e-6) -> SolitonCertificate:
    """Fit ``(lam, V)`` to the soliton equations over a finite candidate space.

    ``mode`` is ``"general"``, ``"gradient"`` (V restricted to fields with
    ``d V^flat = 0``) or ``"static"`` (V = 0).  When the fit residual is below
    ``tol`` the soliton relations between ``(Q, R, A, B)`` and ``(W, Y, S, U,
    V, N)`` are evaluated as well.

    Raises
    ------
    EmptyCandidateSpace
        If a non-static fit has no candidate vector fields.
    """
    if mode not in ("general", "gradient", "static"):
        raise ValueError(f"unknown soliton mode {mode!r}")
    geo = invariant_geometry(space, omega, g)
    om, gm = as_float(geo.omega), as_float(geo.g)
    cands = space.candidate_fields() if candidates is None else list(candidates)
    if mode != "static" and not cands:
        raise EmptyCandidateSpace(f"no candidate vector fields for space {space.name!r}")
    if mode == "static":
        cands = []
    conditions: dict = {}
    # restriction matrix: V coefficients = basis @ free parameters
    basis = np.eye(len(cands))
    if mode == "gradient":
        keep = []
        for k, f in enumerate(cands):
            if f.kind == "scaling" and not f.gradient:
                continue
            keep.append(k)
        sub = np.eye(len(cands))[:, keep]
        cons = []
        for k in keep:
            f = cands[k]
            if f.kind == "invariant":
                flat = gm @ as_float(f.value)
                cons.append(ce_differential(space, flat).ravel())
            else:
                cons.append(np.zeros(16))
        cons = np.array(cons).T if cons else np.zeros((16, 0))
        if cons.shape[1]:
            _, sv, vt = np.linalg.svd(cons)
            rank = int(np.sum(sv > 1e-10))
            basis = sub @ vt[rank:].T
        else:
            basis = sub
        if basis.shape[1] == 0:
            raise EmptyCandidateSpace(f"no gradient candidate fields for space {space.name!r}")

    frame = np.linalg.inv(np.linalg.cholesky(gm)).T  # g-orthonormal columns
    rhs = geo.flow_rhs()
    d_om, d_g = as_float(rhs.dOmega), as_float(rhs.dg)

    def vec(to, tg):
        return np.concatenate([(frame.T @ to @ frame).ravel(), (frame.T @ tg @ frame).ravel()])

    cols = [vec(om, gm)]
    for b in range(basis.shape[1]):
        _, e = _combine(cands, basis[:, b])
        cols.append(vec(_lie_endo(om, e), _lie_endo(gm, e)))
    mat = np.array(cols).T
    sol, *_ = np.linalg.lstsq(mat, vec(d_om, d_g), rcond=None)
    lam = float(sol[0])
    coeffs = basis @ sol[1:] if basis.shape[1] else np.zeros(len(cands))
    _, e = _combine(cands, coeffs) if cands else (None, np.zeros((4, 4)))
    r_om = _gnorm(d_om - lam * om - _lie_endo(om, e), frame)
    r_g = _gnorm(d_g - lam * gm - _lie_endo(gm, e), frame)
    residual = max(r_om, r_g)

    comp = decompose_vector_derivative(space, coeffs, omega=om, g=gm, candidates=cands) if cands else None
    if mode == "gradient" and comp is not None:
        v, _ = _combine(cands, coeffs)
        flat = gm @ v
        conditions["d_v_flat"] = float(np.max(np.abs(ce_differential(space, flat)), initial=0.0))
        conditions["U_minus_conjV_N"] = abs(comp.U - np.conj(comp.V) @ comp.N)
        conditions["im_Y"] = abs(comp.Y.imag)
        conditions["im_W"] = float(np.max(np.abs(comp.W - np.conj(comp.W).T))) / 2.0
    if mode == "static":
        conditions["flow_vs_rescaling"] = max(float(np.max(np.abs(d_om - lam * om))),
                                              float(np.max(np.abs(d_g - lam * gm))))
    sol_ok = True
    if residual <= tol:
        conditions.update(_soliton_relations(space, geo, lam, comp))
        sol_ok = all(v <= DECOMPOSITION_TOL for k, v in conditions.items() if k.startswith("relation_"))
    conditions = {k: _clean(float(v)) for k, v in conditions.items()}
    passed = residual <= tol and sol_ok
    return SolitonCertificate(mode, _clean(lam), [_clean(c) for c in coeffs], [f.name for f in cands],
                              float(residual), float(r_om), float(r_g), comp, conditions, tol, passed)


def _soliton_relations(space: ReductiveSpace, geo: HomogeneousGeometry, lam: float, comp) -> dict:
    """Residuals of the relations between the invariants and the vector-field data."""
    inv = pair_invariants(space, geo=geo)
    if comp is None:
        u, s, w, y = 0j, np.zeros((2, 2), complex), np.zeros((2, 2), complex), 0j
        v = np.zeros(2, complex)
    else:
        # recompute in the same coframe as the invariants
        u, s, w, y, v = comp.U, comp.S, comp.W, comp.Y, comp.V
        if not np.allclose(comp.eta, inv.eta):
            raise InconsistentDecomposition("coframe mismatch between invariants and decomposition")
    n = inv.N
    vb = np.conj(v)
    q_pred = -0.25 * 0.5 * (w + np.conj(w).T)
    r_pred = 0.5 * y.real + 0.25 * lam
    a_pred = -0.5 * s + 0.5 * (np.outer(EPS @ vb, n) + np.outer(n, EPS @ vb))
    b_pred = u / 8.0 + (vb @ n) / 8.0
    return {"relation_Q": float(np.max(np.abs(inv.Q - q_pred))),
            "relation_R": abs(inv.R - r_pred),
            "relation_A": float(np.max(np.abs(inv.A - a_pred))),
            "relation_B": abs(inv.B - b_pred)}
