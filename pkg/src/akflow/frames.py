"""Structure equations of a unitary coframe field, solved numerically.

A coframe field ``eta(x)`` (Gram-Schmidt section, optionally rotated by a
constant unitary matrix) is differentiated by finite differences.  The first
structure equation

    d eta_i = -kappa_{i jbar} ^ eta_j + eps_{ij} N_k  conj(eta_j) ^ conj(eta_k)

with ``eps_12 = 1/2`` is solved pointwise for the Chern connection forms
``kappa`` and the Nijenhuis components ``N``; differentiating those a second
time gives the curvature and the covariant derivative of ``N``.

Frame indices: ``theta = (eta_1, eta_2, conj eta_1, conj eta_2)``.  A
2-form is stored by its frame matrix ``F[a, b] = form(e_a, e_b)`` where
``e_a`` is the dual (complex) frame, so ``theta_a ^ theta_b`` has matrix
``E_ab - E_ba``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charts import Chart, pick_second_vector, unitary_coframes_batch
from .errors import DomainError

EPS = np.array([[0.0, 0.5], [-0.5, 0.0]])


def wedge(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...a,...b->...ab", u, v) - np.einsum("...a,...b->...ab", v, u)


def sym(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Symmetric product with ``u . v = (u (x) v + v (x) u) / 2``."""
    return 0.5 * (np.einsum("...a,...b->...ab", u, v) + np.einsum("...a,...b->...ab", v, u))


THETA = np.eye(4, dtype=complex)
ETA = THETA[:2]
ETAB = THETA[2:]


def curl(d_cov: np.ndarray) -> np.ndarray:
    """Exterior derivative of covector fields: ``d_cov[..., b, a] = d_a cov_b``.

    Returns the 2-form matrix ``M[a, b] = d_a cov_b - d_b cov_a``.
    """
    return np.swapaxes(d_cov, -1, -2) - d_cov


@dataclass
class CoframeField:
    """Smooth unitary coframe section on a chart near a base point."""

    chart: Chart
    second: int
    rotation: np.ndarray

    @classmethod
    def at(cls, chart: Chart, p, rotation=None) -> "CoframeField":
        p = np.asarray(p, dtype=float).reshape(1, 4)
        if not np.all(chart.in_domain(p)):
            raise DomainError(f"point outside the domain of chart {chart.name!r}")
        g = chart.metric_fn(p)[0]
        j = chart.j_fn(p)[0]
        rot = np.eye(2, dtype=complex) if rotation is None else np.asarray(rotation, dtype=complex)
        return cls(chart, pick_second_vector(0.5 * (g + g.T), j), rot)

    def rotated(self, u: np.ndarray) -> "CoframeField":
        return CoframeField(self.chart, self.second, np.asarray(u) @ self.rotation)

    def eta(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        g = self.chart.metric_fn(x)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        eta = unitary_coframes_batch(g, self.chart.j_fn(x), self.second)
        return np.einsum("ij,bja->bia", self.rotation, eta)

    def first_order(self, x: np.ndarray) -> dict:
        """Solve the first structure equation at a batch of points."""
        x = np.atleast_2d(x)
        eta = self.eta(x)
        deta = self.chart.d(self.eta)(x)  # (B, 2, 4, 4): [b, i, c, a] = d_a eta_ic
        theta = np.concatenate([eta, eta.conj()], axis=1)  # (B, 4, 4) rows = covectors
        frame = np.linalg.inv(theta)  # columns = dual frame vectors
        m = curl(deta)
        D = np.einsum("bca,bicd,bdf->biaf", frame, m, frame)
        # (1,1) part fixes kappa: coefficient of eta_l ^ conj(eta_k) in d eta_i
        b = D[:, :, :2, 2:]  # b[i, l, k] = kappa_{i lbar}(e_{2+k})
        a = -np.conj(np.transpose(b, (0, 2, 1, 3)))  # a[i, l, m] = kappa_{i lbar}(e_m)
        kap_frame = np.concatenate([a, b], axis=-1)  # kappa_{i lbar}(e_a)
        kappa = np.einsum("bila,bac->bilc", kap_frame, theta)
        # torsion d eta_i = ... + N_i conj(eta_1) ^ conj(eta_2)
        n = D[:, :, 2, 3]
        # (2,0) part must match -kappa_{i jbar} ^ eta_j: a symplectic-torsion check
        pred20 = -a[:, :, 1, 0] + a[:, :, 0, 1]
        torsion20 = np.max(np.abs(D[:, :, 0, 1] - pred20), axis=-1)
        return {"eta": eta, "theta": theta, "frame": frame, "kappa": kappa,
                "kappa_frame": kap_frame, "N": n, "torsion20": torsion20, "D": D}

    def kappa_and_n(self, x: np.ndarray) -> np.ndarray:
        """Packed ``(kappa, N)`` as a ``(B, 18)`` complex array for nested differencing."""
        fo = self.first_order(x)
        nb = fo["N"].shape[0]
        return np.concatenate([fo["kappa"].reshape(nb, 16), fo["N"]], axis=1)


@dataclass
class SecondOrderData:
    """Frame-component data at one point."""

    theta: np.ndarray       # 4x4 complex coframe rows
    frame: np.ndarray       # 4x4 dual frame columns
    kappa: np.ndarray       # 2x2x4 coordinate covectors
    kappa_frame: np.ndarray  # 2x2x4 frame components
    N: np.ndarray           # (2,) complex
    dkappa: np.ndarray      # 2x2 frame 2-forms (4x4 each)
    curvature: np.ndarray   # 2x2 frame 2-forms: d kappa + kappa ^ kappa
    cov_dN: np.ndarray      # (2, 4) frame components of dN_i + kappa_ij N_j + kappa_jj N_i
    torsion20: float
    rho: np.ndarray         # real coordinate 2-form, i * tr d kappa


def second_order(field: CoframeField, p) -> SecondOrderData:
    p = np.asarray(p, dtype=float).reshape(1, 4)
    fo = field.first_order(p)
    packed_d = field.chart.d(field.kappa_and_n)(p)[0]  # (18, 4): [q, a] = d_a packed_q
    dkap = packed_d[:16].reshape(2, 2, 4, 4)  # [i, l, c, a] = d_a kappa_{i lbar, c}
    dn = packed_d[16:]  # (2, 4)
    theta, frame = fo["theta"][0], fo["frame"][0]
    kappa, n = fo["kappa"][0], fo["N"][0]
    dkappa_coord = curl(dkap)
    kk = np.einsum("ika,kjb->ijab", kappa, kappa)
    kk = kk - np.swapaxes(kk, -1, -2)
    phi_coord = dkappa_coord + kk
    to_frame = lambda f: np.einsum("ca,...cd,df->...af", frame, f, frame)
    cov = dn + np.einsum("ija,j->ia", kappa, n) + np.einsum("jja->a", kappa)[None, :] * n[:, None]
    rho = (1j * (dkappa_coord[0, 0] + dkappa_coord[1, 1])).real
    return SecondOrderData(theta=theta, frame=frame, kappa=kappa, kappa_frame=fo["kappa_frame"][0], N=n,
                           dkappa=to_frame(dkappa_coord), curvature=to_frame(phi_coord),
                           cov_dN=cov @ frame, torsion20=float(fo["torsion20"][0]), rho=rho)
