"""Dense Lyapunov solvers: ``A X + X A^T + Q = 0``."""

import numpy as np

from ..errors import SynthesisError

KRON_MAX_N = 12


def solve_lyapunov_kron(a, q):
    """Solve through the vectorized ``(A (+) A) vec(X) = -vec(Q)`` system.

    Works for any ``A`` without eigenvalue pairs summing to zero.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(A X) = (A kron I) vec(X), vec(X A^T) = (I kron A) vec(X)
    op = np.kron(a, eye) + np.kron(eye, a)
    try:
        x = np.linalg.solve(op, -q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SynthesisError("singular Lyapunov operator (eigenvalues of A sum to zero)") from exc
    return x.reshape(n, n)


def solve_lyapunov_sign(a, q, maxiter=100, rtol=None):
    """Matrix sign-function iteration with determinant scaling.

    ``A`` must be Hurwitz.
    """
    a = np.asarray(a, dtype=float)
    g = np.asarray(q, dtype=float).copy()
    n = a.shape[0]
    rtol = 10 * n * np.finfo(float).eps if rtol is None else rtol
    z = a.copy()
    for _ in range(maxiter):
        z_inv = np.linalg.inv(z)
        _, logdet = np.linalg.slogdet(z)
        c = np.exp(-logdet / n)
        z_new = 0.5 * (c * z + z_inv / c)
        g = 0.5 * (c * g + (z_inv @ g @ z_inv.T) / c)
        err = np.linalg.norm(z_new - z, 1) / max(np.linalg.norm(z_new, 1), 1.0)
        z = z_new
        if err <= rtol:
            # two extra unscaled steps polish the converged sign
            for _ in range(2):
                z_inv = np.linalg.inv(z)
                g = 0.5 * (g + z_inv @ g @ z_inv.T)
                z = 0.5 * (z + z_inv)
            break
    else:
        raise SynthesisError(f"sign iteration did not converge in {maxiter} steps")
    if not np.allclose(z, -np.eye(n), atol=1e-6):
        raise SynthesisError("sign iteration did not converge to -I; A is not Hurwitz")
    return 0.5 * g


def solve_lyapunov(a, q):
    """Solve ``A X + X A^T + Q = 0``; symmetric ``Q`` gives symmetric ``X``."""
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    if a.shape[0] <= KRON_MAX_N:
        x = solve_lyapunov_kron(a, q)
    else:
        x = solve_lyapunov_sign(a, q)
    if np.allclose(q, q.T, rtol=0, atol=1e-14 * max(1.0, np.abs(q).max())):
        x = 0.5 * (x + x.T)
    return x
