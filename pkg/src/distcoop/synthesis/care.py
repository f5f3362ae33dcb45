"""Stabilizing solutions of continuous-time algebraic Riccati equations.

Newton-Kleinman iteration: every step is one Lyapunov solve.  The initial
stabilizing gain comes from a shifted Lyapunov equation (Bass' construction).
"""

import numpy as np

from ..errors import SynthesisError
from .lyapunov import solve_lyapunov

RESIDUAL_RTOL = 1e-8


def spectral_abscissa(m):
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return -np.inf
    return float(np.linalg.eigvals(m).real.max())


def care_residual(a, b, t, p):
    """``A^T P + P A - P B B^T P + T``."""
    pb = p @ b
    return a.T @ p + p @ a - pb @ pb.T + t


def relative_residual(a, b, t, p):
    return float(np.linalg.norm(care_residual(a, b, t, p)) / np.linalg.norm(t))


def initial_stabilizing_gain(a, b):
    """Gain ``K0`` with ``A - B K0`` Hurwitz.

    Solves ``(A + beta I) Z + Z (A + beta I)^T = 2 B B^T`` with ``-(A + beta I)``
    Hurwitz; then ``(A - B B^T Z^-1) Z + Z (.)^T = -2 beta Z``.
    """
    n = a.shape[0]
    if spectral_abscissa(a) < 0:
        return np.zeros((b.shape[1], n))
    beta = 1.0 + max(0.0, -float(np.linalg.eigvals(a).real.min()))
    shifted = -(a + beta * np.eye(n))
    z = solve_lyapunov(shifted, 2.0 * b @ b.T)
    try:
        k0 = np.linalg.solve(z, b).T
    except np.linalg.LinAlgError as exc:
        raise SynthesisError("pair (A, B) is not controllable; no initial stabilizing gain") from exc
    if spectral_abscissa(a - b @ k0) >= 0:
        raise SynthesisError("pair (A, B) is not stabilizable; Bass construction failed")
    return k0


def solve_care(a, b, t, maxiter=100):
    """Stabilizing solution of ``A^T P + P A - P B B^T P + T = 0``.

    Raises
    ------
    SynthesisError
        If ``(A, B)`` is not stabilizable, the iteration stalls, or the final
        residual exceeds ``1e-8 * ||T||_F`` by more than rounding allows.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    t = 0.5 * (t + t.T)
    if np.linalg.eigvalsh(t).min() <= 0:
        raise SynthesisError("weight T must be symmetric positive definite")

    k = initial_stabilizing_gain(a, b)
    p_prev = None
    last_change = np.inf
    for _ in range(maxiter):
        closed = a - b @ k
        p = solve_lyapunov(closed.T, t + k.T @ k)
        k = b.T @ p
        if p_prev is not None:
            change = np.linalg.norm(p - p_prev)
            size = np.linalg.norm(p)
            if change <= 1e-14 * size:
                break
            # quadratic convergence has stopped: rounding level reached
            if change < 1e-9 * size and change >= 0.5 * last_change:
                break
            last_change = change
        p_prev = p
    else:
        raise SynthesisError("Newton-Kleinman iteration did not converge",
                             residual=relative_residual(a, b, t, p))

    res = care_residual(a, b, t, p)
    res_norm = np.linalg.norm(res)
    pb = p @ b
    # rounding floor: the individual terms can dwarf a tiny T
    scale = np.linalg.norm(t) + np.linalg.norm(a.T @ p) * 2 + np.linalg.norm(pb @ pb.T)
    if res_norm > RESIDUAL_RTOL * np.linalg.norm(t) and res_norm > 1e3 * np.finfo(float).eps * scale:
        raise SynthesisError(f"CARE residual {res_norm:.3e} too large", residual=res_norm / np.linalg.norm(t))
    if spectral_abscissa(a - b @ b.T @ p) >= 0:
        raise SynthesisError("CARE solution is not stabilizing")
    return p


def solve_dual_care(a, c, t2):
    """Stabilizing ``Q`` of ``Q A^T + A Q - Q C^T C Q + T2 = 0``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1, a.shape[0])
    return solve_care(a.T, c.T, t2)
