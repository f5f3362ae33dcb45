"""Centralized gain design from a pair of Riccati equations.

``K = -B^T P1`` and ``F = -Q1 C^T``, with ``T1`` shrunk until the coupling
inequality ``lmin(T2)/lmax(Q1) > k1 + ||B B^T||^2 ||P1||^2 / k1`` holds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..errors import PreconditionError, SynthesisError
from ..plant import PlantModel
from .care import solve_care, solve_dual_care, spectral_abscissa

log = logging.getLogger(__name__)

HURWITZ_TOL = 1e-9
RANK_RTOL = 1e-8
T1_SHRINK = 10.0
T1_FLOOR = 1e-10
# fallback grid of decades applied to T1 and T2, and the margin it must reach
SEARCH_T1_DECADES = range(-10, 5)
SEARCH_T2_DECADES = range(-6, 7)
SEARCH_MARGIN = 1e-6
# last resort: Nelder-Mead over full weight matrices, seeded restarts
WEIGHT_SEARCH_RESTARTS = 8
WEIGHT_SEARCH_MAXFEV = 2500
WEIGHT_SEARCH_SEED = 0


@dataclass(frozen=True, eq=False)
class GainSet:
    controller_gains: tuple
    estimator_gains: tuple
    P1: np.ndarray | None = None
    Q1: np.ndarray | None = None
    T1: np.ndarray | None = None
    T2: np.ndarray | None = None
    kappa1: float | None = None
    certificate: str | None = None  # "kappa", "direct-search", "weight-search" or "observer-only"

    @property
    def stacked_K(self) -> np.ndarray:
        return np.vstack(self.controller_gains)

    @property
    def stacked_F(self) -> np.ndarray:
        return np.hstack(self.estimator_gains)

    def bbar(self, plant: PlantModel) -> np.ndarray:
        """``[B_1 K_1, ..., B_N K_N]`` (n x Nn)."""
        return np.hstack([b @ k for b, k in zip(plant.inputs, self.controller_gains)])

    def closed_loops(self, plant: PlantModel) -> dict[str, np.ndarray]:
        a = plant.A
        bk = plant.B_stacked @ self.stacked_K
        fc = self.stacked_F @ plant.C_stacked
        return {"A+BK": a + bk, "A+FC": a + fc, "A+BK+FC": a + bk + fc}

    def max_difference(self, other: "GainSet") -> float:
        diffs = [np.abs(a - b).max(initial=0.0) for a, b in zip(self.controller_gains, other.controller_gains)]
        diffs += [np.abs(a - b).max(initial=0.0) for a, b in zip(self.estimator_gains, other.estimator_gains)]
        return float(max(diffs))

    @classmethod
    def from_stacked(cls, plant: PlantModel, K: np.ndarray, F: np.ndarray, **meta) -> "GainSet":
        p_off = np.concatenate([[0], np.cumsum(plant.input_dims)]).astype(int)
        m_off = plant.output_offsets
        ks = tuple(K[p_off[i]:p_off[i + 1]] for i in range(plant.n_nodes))
        fs = tuple(F[:, m_off[i]:m_off[i + 1]] for i in range(plant.n_nodes))
        return cls(ks, fs, **meta)


@dataclass(frozen=True, eq=False)
class SynthesisWeights:
    T1: np.ndarray
    T2: np.ndarray
    kappa: float | None = None
    grow_T2: bool = True
    max_T2_growth: float = 1e8
    fallback: bool = True

    def __post_init__(self):
        for name in ("T1", "T2"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be square and symmetric")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, m)
        if self.kappa is not None and self.kappa <= 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class LmiReport:
    margins: tuple[float, float, float]

    @property
    def feasible(self) -> bool:
        return all(m < 0 for m in self.margins)

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return tuple(m < 0 for m in self.margins)


def is_hurwitz(m, tol: float = HURWITZ_TOL) -> bool:
    return spectral_abscissa(m) < -tol


def numerical_rank(m) -> int:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int((s > RANK_RTOL * s[0]).sum()) if s[0] > 0 else 0


def controllability_matrix(a, b) -> np.ndarray:
    n = a.shape[0]
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(a, c) -> np.ndarray:
    return controllability_matrix(a.T, c.T).T


def _sym_max_eig(m) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).max())


def check_lmis(plant: PlantModel, P, Q, gains: GainSet) -> LmiReport:
    """Largest eigenvalue of each of the three design LMIs (feasible iff all < 0)."""
    a = plant.A
    b = plant.B_stacked
    c = plant.C_stacked
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = a.shape[0]
    if P.shape != (n, n) or Q.shape != (n, n):
        raise ValueError(f"P and Q must be {n}x{n}, got {P.shape} and {Q.shape}")
    bk = b @ gains.stacked_K
    lmi1 = a @ P + P @ a.T - b @ b.T
    lmi2 = Q @ a + a.T @ Q - c.T @ c
    lmi3 = lmi2 + Q @ bk + bk.T @ Q
    return LmiReport((_sym_max_eig(lmi1), _sym_max_eig(lmi2), _sym_max_eig(lmi3)))


def kappa_condition(T2, Q1, bbt_norm: float, p1_norm: float, kappa1: float | None = None):
    """Return ``(lhs, rhs, kappa1)`` of the coupling inequality.

    Without an explicit ``kappa1`` the minimizer ``||B B^T|| ||P1||`` is used.
    """
    lhs = float(np.linalg.eigvalsh(T2).min() / np.linalg.eigvalsh(Q1).max())
    if kappa1 is None:
        kappa1 = bbt_norm * p1_norm
        if kappa1 <= 0:
            kappa1 = 0.5 * lhs
    rhs = kappa1 + (bbt_norm ** 2) * (p1_norm ** 2) / kappa1
    return lhs, rhs, kappa1


def check_assumptions(plant: PlantModel, need_control: bool = True) -> None:
    n = plant.n
    if need_control:
        r = numerical_rank(controllability_matrix(plant.A, plant.B_stacked))
        if r < n:
            raise PreconditionError(f"(A, B) not controllable: controllability rank {r} < {n}")
    r = numerical_rank(observability_matrix(plant.A, plant.C_stacked))
    if r < n:
        raise PreconditionError(f"(A, C) not observable: observability rank {r} < {n}")


def _shrink_t1(a, b, T1, T2, Q1, kappa):
    """Largest ``T1 / 10^k`` meeting the coupling inequality, or None."""
    bbt_norm = float(np.linalg.norm(b @ b.T, 2))
    t1 = T1.copy()
    while True:
        P1 = solve_care(a, b, t1)
        lhs, rhs, k1 = kappa_condition(T2, Q1, bbt_norm, float(np.linalg.norm(P1, 2)), kappa)
        if lhs > rhs:
            return t1, P1, k1
        if np.linalg.eigvalsh(t1).max() / T1_SHRINK < T1_FLOOR:
            return None
        t1 = t1 / T1_SHRINK


def select_t1(plant: PlantModel, weights: SynthesisWeights):
    """Shrink ``T1`` (and, if allowed, grow ``T2``) until the coupling inequality holds.

    Returns ``(T1, T2, P1, Q1, kappa1)``.
    """
    a, b, c = plant.A, plant.B_stacked, plant.C_stacked
    T2 = weights.T2
    growth = 1.0
    while True:
        Q1 = solve_dual_care(a, c, T2)
        found = _shrink_t1(a, b, weights.T1, T2, Q1, weights.kappa)
        if found is not None:
            t1, P1, k1 = found
            return t1, T2, P1, Q1, k1
        if not weights.grow_T2 or growth * 10 > weights.max_T2_growth:
            raise SynthesisError(
                f"coupling inequality fails even at T1 = {T1_FLOOR:g} I "
                f"(T2 grown by {growth:g}); A likely has unstable modes that bound ||P1|| from below"
            )
        growth *= 10
        T2 = weights.T2 * growth
        log.info("coupling inequality unmet at T1 floor; growing T2 by %g", growth)
        try:
            solve_dual_care(a, c, T2)
        except SynthesisError as exc:
            raise SynthesisError(f"coupling inequality unmet; growing T2 further breaks the dual CARE ({exc})") from None


def _direct_search(plant: PlantModel, weights: SynthesisWeights):
    """Scale ``T1`` and ``T2`` by powers of ten, nearest decades first, until
    ``A + BK + FC`` is Hurwitz with margin.  Returns ``(T1, T2, P1, Q1)`` or None.

    ``A + BK`` and ``A + FC`` are Hurwitz for any weights (stabilizing CARE
    solutions); only the combined loop needs checking.
    """
    a, b, c = plant.A, plant.B_stacked, plant.C_stacked
    p_cache, q_cache = {}, {}

    def solve(cache, k, fn, mat, base):
        if k not in cache:
            try:
                cache[k] = fn(a, mat, base * 10.0 ** k)
            except SynthesisError:
                cache[k] = None
        return cache[k]

    pairs = sorted(((i, j) for i in SEARCH_T1_DECADES for j in SEARCH_T2_DECADES),
                   key=lambda ij: (abs(ij[0]) + abs(ij[1]), ij))
    for i, j in pairs:
        P1 = solve(p_cache, i, solve_care, b, weights.T1)
        Q1 = solve(q_cache, j, solve_dual_care, c, weights.T2)
        if P1 is None or Q1 is None:
            continue
        if spectral_abscissa(a - b @ b.T @ P1 - Q1 @ c.T @ c) < -SEARCH_MARGIN:
            return weights.T1 * 10.0 ** i, weights.T2 * 10.0 ** j, P1, Q1
    return None


class _Found(Exception):
    def __init__(self, v):
        self.v = v


def _weight_search(plant: PlantModel, weights: SynthesisWeights):
    """Optimize ``T1 = W1 L1 L1^T W1^T`` and ``T2 = W2 L2 L2^T W2^T`` (``W`` the
    Cholesky factors of the given weights, ``L`` lower triangular with
    log-diagonal) to push the abscissa of ``A + BK + FC`` below the margin.

    Returns ``(T1, T2, P1, Q1)`` or None.
    """
    a, b, c = plant.A, plant.B_stacked, plant.C_stacked
    n = a.shape[0]
    w1, w2 = np.linalg.cholesky(weights.T1), np.linalg.cholesky(weights.T2)
    tril = np.tril_indices(n)
    diag = np.arange(n)
    nt = len(tril[0])

    def weight(w, v):
        lo = np.zeros((n, n))
        lo[tril] = v
        lo[diag, diag] = np.exp(lo[diag, diag])
        m = w @ lo
        return m @ m.T

    def solve(v):
        t1, t2 = weight(w1, v[:nt]), weight(w2, v[nt:])
        return t1, t2, solve_care(a, b, t1), solve_dual_care(a, c, t2)

    def objective(v):
        try:
            *_, P1, Q1 = solve(v)
        except (SynthesisError, np.linalg.LinAlgError):
            return 1e6
        val = spectral_abscissa(a - b @ b.T @ P1 - Q1 @ c.T @ c)
        if val < -10 * SEARCH_MARGIN:
            raise _Found(v.copy())
        return val

    rng = np.random.default_rng(WEIGHT_SEARCH_SEED)
    for k in range(WEIGHT_SEARCH_RESTARTS):
        v0 = np.zeros(2 * nt) if k == 0 else 2.0 * rng.standard_normal(2 * nt)
        try:
            minimize(objective, v0, method="Nelder-Mead",
                     options={"maxfev": WEIGHT_SEARCH_MAXFEV, "maxiter": WEIGHT_SEARCH_MAXFEV})
        except _Found as hit:
            return solve(hit.v)
    return None


def design_gains(plant: PlantModel, weights: SynthesisWeights) -> GainSet:
    """Controller and estimator gains meeting all three Hurwitz conditions.

    The coupling inequality is tried first (shrinking ``T1``, then growing
    ``T2``).  It is only sufficient, and with unstable ``A`` it can be out of
    reach; then, unless ``weights.fallback`` is off, ``T1`` and ``T2`` are
    rescaled by decades until the three closed loops are Hurwitz
    (``certificate="direct-search"``), and failing that full weight matrices
    are optimized (``certificate="weight-search"``).  Plants that admit no
    stable observer-based compensator (not strongly stabilizable) still fail.

    For a plant without inputs only ``F`` is designed (``K`` has zero rows).

    Raises
    ------
    PreconditionError
        Collective controllability or observability fails.
    SynthesisError
        Neither route yields three Hurwitz closed loops.
    """
    n = plant.n
    if weights.T1.shape != (n, n) or weights.T2.shape != (n, n):
        raise ValueError(f"weights must be {n}x{n}")
    has_inputs = sum(plant.input_dims) > 0
    check_assumptions(plant, need_control=has_inputs)
    a, b, c = plant.A, plant.B_stacked, plant.C_stacked

    if has_inputs:
        try:
            t1, t2, P1, Q1, k1 = select_t1(plant, weights)
            certificate = "kappa"
        except SynthesisError as exc:
            if not weights.fallback:
                raise
            found, certificate = _direct_search(plant, weights), "direct-search"
            if found is None:
                found, certificate = _weight_search(plant, weights), "weight-search"
            if found is None:
                raise SynthesisError(f"{exc}; no T1/T2 scaling on the search grid and no optimized weight "
                                     f"pair makes all three closed loops Hurwitz") from None
            log.info("coupling inequality unreachable; gains from %s (%s)", certificate, exc)
            t1, t2, P1, Q1 = found
            k1 = None
        K = -b.T @ P1
    else:
        t1, t2, k1, certificate = None, weights.T2, None, "observer-only"
        P1 = None
        Q1 = solve_dual_care(a, c, t2)
        K = np.zeros((0, n))
    F = -Q1 @ c.T
    gains = GainSet.from_stacked(plant, K, F, P1=P1, Q1=Q1, T1=t1, T2=t2, kappa1=k1, certificate=certificate)
    for name, m in gains.closed_loops(plant).items():
        if has_inputs or name == "A+FC":
            if not is_hurwitz(m):
                raise SynthesisError(f"{name} is not Hurwitz (spectral abscissa {spectral_abscissa(m):.3e})")
    return gains


def feasibility_report(plant: PlantModel, gains: GainSet) -> dict:
    """Spectral abscissas of the closed loops and the three LMI margins."""
    report = {name: spectral_abscissa(m) for name, m in gains.closed_loops(plant).items()}
    if gains.P1 is not None and gains.Q1 is not None:
        lmis = check_lmis(plant, np.linalg.inv(gains.P1), np.linalg.inv(gains.Q1), gains)
        report.update({f"LMI{k + 1}": v for k, v in enumerate(lmis.margins)})
    return report
