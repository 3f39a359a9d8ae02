"""Convention constants fixed by calibration runs (locked by tests/test_conventions.py).

Every report produced by the CLI embeds :func:`ledger`.
"""

# rho(X, Y) = RHO_TRACE_SIGN * 1/2 tr(J o Rc(X, Y)) gives rho(X, Y) = Ric(JX, Y) on Kaehler charts
RHO_TRACE_SIGN = 1.0

# N_i is the coefficient in d eta_i = -kappa ^ eta + N_i conj(eta_1) ^ conj(eta_2);
# with it |N_1| = NIJENHUIS_C |h(z1)| / sqrt(1 - |z1|^2) on static charts
NIJENHUIS_C = 1.0

# g-norm of the coordinate Nijenhuis tensor divided by sqrt(|N_1|^2 + |N_2|^2)
NIJENHUIS_TENSOR_C = 8.0 * 2.0 ** 0.5

# display = scale * tensor, for the curvature displays written in invariants
RIC11_DISPLAY_SCALE = 0.25   # J-invariant Ricci terms
WPLUS_DISPLAY_SCALE = 4.0    # Lambda^2_+ block of the curvature operator (scalar part included)
WMINUS_DISPLAY_SCALE = -4.0  # traceless Lambda^2_- block
WPLUS_B_SIGN = -1.0          # sign of the B terms in the W+ display

# below this norm the Nijenhuis components are treated as zero
N_VANISH_TOL = 1e-8


def ledger() -> dict:
    return {
        "metric_convention": "g(X,Y) = Omega(X, JY)",
        "rho_trace_sign": RHO_TRACE_SIGN,
        "nijenhuis_c": NIJENHUIS_C,
        "nijenhuis_tensor_c": NIJENHUIS_TENSOR_C,
        "N_normalization": "d eta_i = -kappa_ij ^ eta_j + N_i conj(eta_1) ^ conj(eta_2)",
        "eps12": 0.5,
        "Q_symmetry": "hermitian",
        "ric11_display_scale": RIC11_DISPLAY_SCALE,
        "wplus_display_scale": WPLUS_DISPLAY_SCALE,
        "wminus_display_scale": WMINUS_DISPLAY_SCALE,
        "wplus_b_sign": WPLUS_B_SIGN,
        "symmetric_product": "u.v = (u(x)v + v(x)u)/2",
    }
