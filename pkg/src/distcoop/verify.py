"""Verification suites run by ``distcoop verify`` and the acceptance tests.

Each suite returns a :class:`SuiteResult`; :func:`run_all` collects them.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import GraphError, LocalityError, SynthesisError
from .graph import (
    DirectedGraph,
    block_grounded_laplacian,
    find_diagonal_g,
    grounded_laplacian,
    is_nonsingular_m_matrix,
    is_strongly_connected,
    ring,
)
from .node import Mode, NeighborView, NodeConstants, node_derivative, stacked_output_estimator
from .plant import PlantModel
from .sim import ClosedLoop, IntegratorSettings, NodeParams, Scenario, error_oracle, integrate, node_states_at
from .synthesis.care import relative_residual, spectral_abscissa
from .synthesis.design import GainSet, SynthesisWeights, check_assumptions, design_gains

ORACLE_TOL = 1e-6
HURWITZ_MARGIN = -1e-6
CARE_RTOL = 1e-8


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


# ---------------------------------------------------------------- graph enumeration

def _offdiag_positions(n):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def _decode(codes, n):
    pos = _offdiag_positions(n)
    adj = np.zeros((len(codes), n, n), dtype=np.int8)
    for b, (i, j) in enumerate(pos):
        adj[:, i, j] = (codes >> b) & 1
    return adj


def _strongly_connected_mask(adj):
    """Vectorized strong connectivity over a stack of adjacency matrices."""
    n = adj.shape[1]
    reach = (adj | np.eye(n, dtype=np.int8)[None]).astype(np.int32)
    for _ in range(max(1, int(np.ceil(np.log2(n))) + 1)):
        reach = np.minimum(reach @ reach, 1)
    return reach.reshape(len(adj), -1).min(axis=1) == 1


def strongly_connected_classes(n: int) -> np.ndarray:
    """One representative per isomorphism class of strongly connected digraphs on ``n`` nodes.

    Enumerates all ``2^(n(n-1))`` labeled digraphs (n <= 5), keeps the strongly
    connected ones and reduces each to the minimum code over all relabelings.
    """
    if not 2 <= n <= 5:
        raise ValueError("exhaustive enumeration supports 2..5 nodes")
    pos = _offdiag_positions(n)
    k = len(pos)
    codes = np.arange(2 ** k, dtype=np.int64)
    sc = codes[_strongly_connected_mask(_decode(codes, n))]
    index = {p: b for b, p in enumerate(pos)}
    chunk = 7
    n_chunks = (k + chunk - 1) // chunk
    canon = np.full(sc.shape, np.iinfo(np.int64).max)
    for perm in itertools.permutations(range(n)):
        new_bit = np.array([index[(perm[i], perm[j])] for i, j in pos])
        out = np.zeros_like(sc)
        for c in range(n_chunks):
            bits = np.arange(c * chunk, min((c + 1) * chunk, k))
            values = np.arange(2 ** len(bits))
            table = np.zeros(len(values), dtype=np.int64)
            for t, b in enumerate(bits):
                table |= ((values >> t) & 1).astype(np.int64) << new_bit[b]
            out |= table[(sc >> (c * chunk)) & (2 ** len(bits) - 1)]
        np.minimum(canon, out, out=canon)
    return _decode(np.unique(canon), n)


def random_strongly_connected(rng: np.random.Generator, n_min=2, n_max=12) -> DirectedGraph:
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        p = rng.uniform(0.15, 0.6)
        adj = (rng.random((n, n)) < p).astype(int)
        np.fill_diagonal(adj, 0)
        g = DirectedGraph(adj)
        if is_strongly_connected(g):
            return g


def _m_matrix_checks(g: DirectedGraph, dims) -> str | None:
    for j in range(g.n_nodes):
        lj = grounded_laplacian(g, j)
        if not is_nonsingular_m_matrix(lj):
            return f"L^{j} not a non-singular M-matrix for {g!r}"
    if not is_nonsingular_m_matrix(block_grounded_laplacian(g, dims)):
        return f"block grounded Laplacian not a non-singular M-matrix for {g!r}"
    return None


def m_matrix_sweep(max_exhaustive: int = 5, n_random: int = 200, seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    counts = {}
    for n in range(2, max_exhaustive + 1):
        reps = strongly_connected_classes(n)
        counts[n] = len(reps)
        for adj in reps:
            g = DirectedGraph(adj.astype(int))
            dims = rng.integers(1, 3, size=n)
            msg = _m_matrix_checks(g, dims)
            if msg:
                return SuiteResult("grounded-m-matrix", False, msg, time.perf_counter() - t0)
    for _ in range(n_random):
        g = random_strongly_connected(rng)
        msg = _m_matrix_checks(g, rng.integers(1, 4, size=g.n_nodes))
        if msg:
            return SuiteResult("grounded-m-matrix", False, msg, time.perf_counter() - t0)
    detail = f"classes per size {counts}, plus {n_random} random graphs on <= 12 nodes"
    return SuiteResult("grounded-m-matrix", True, detail, time.perf_counter() - t0)


def diagonal_certificate_check(n_random: int = 200, seed: int = 1) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_random):
        g = random_strongly_connected(rng)
        for j in range(g.n_nodes):
            m = grounded_laplacian(g, j)
            G = find_diagonal_g(m)
            if np.any(np.diag(G) <= 0):
                return SuiteResult("diagonal-G-certificate", False, "non-positive diagonal", time.perf_counter() - t0)
            worst = min(worst, float(np.linalg.eigvalsh(G @ m + m.T @ G).min()))
    ok = worst > 0
    return SuiteResult("diagonal-G-certificate", ok, f"min eig(G L^j + L^j' G) = {worst:.3e}", time.perf_counter() - t0)


# ---------------------------------------------------------------- synthesis

def random_triple(rng: np.random.Generator, n_max: int = 6, N_max: int = 4) -> PlantModel:
    """Random collectively controllable and observable multi-channel plant."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        N = int(rng.integers(1, N_max + 1))
        A = rng.normal(size=(n, n)) * rng.uniform(0.2, 1.5)
        B = [rng.normal(size=(n, int(rng.integers(1, 3)))) for _ in range(N)]
        C = [rng.normal(size=(int(rng.integers(1, 3)), n)) for _ in range(N)]
        plant = PlantModel(A, B, C)
        try:
            check_assumptions(plant)
        except Exception:
            continue
        return plant


def synthesis_suite(n_cases: int = 100, seed: int = 2) -> SuiteResult:
    """Three Hurwitz conditions and CARE residuals on random triples."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_abscissa = -np.inf
    worst_residual = 0.0
    worst_scipy = 0.0
    infeasible = []
    for case in range(n_cases):
        plant = random_triple(rng)
        n = plant.n
        try:
            gains = design_gains(plant, SynthesisWeights(np.eye(n), np.eye(n)))
        except SynthesisError:
            infeasible.append(case)
            continue
        for m in gains.closed_loops(plant).values():
            worst_abscissa = max(worst_abscissa, spectral_abscissa(m))
        a, b, c = plant.A, plant.B_stacked, plant.C_stacked
        r1 = relative_residual(a, b, gains.T1, gains.P1)
        r2 = relative_residual(a.T, c.T, gains.T2, gains.Q1)
        worst_residual = max(worst_residual, r1, r2)
        ref = sla.solve_continuous_are(a, b, gains.T1, np.eye(b.shape[1]))
        worst_scipy = max(worst_scipy, float(np.linalg.norm(ref - gains.P1) / np.linalg.norm(ref)))
    ok = not infeasible and worst_abscissa < HURWITZ_MARGIN and worst_residual <= CARE_RTOL
    detail = (f"{n_cases} triples, {len(infeasible)} with no gain set found {infeasible}: worst spectral abscissa "
              f"{worst_abscissa:.3e}, worst relative CARE residual {worst_residual:.2e}, worst deviation from "
              f"scipy {worst_scipy:.2e}")
    return SuiteResult("synthesis-hurwitz-and-care", ok, detail, time.perf_counter() - t0)


# ---------------------------------------------------------------- regression scenario

def regression_scenario(mode: str | Mode = Mode.NOMINAL, t_final: float = 10.0, dt: float = 1e-3,
                        record_every: int = 10) -> Scenario:
    """The canonical 3-node, two-state scenario on a directed 3-cycle.

    Stable plant, one input and one output per node, no node able to observe
    or control the plant alone.
    """
    A = np.array([[0.0, 1.0], [-1.0, -0.3]])
    B = [np.array([[0.0], [1.0]]), np.array([[1.0], [0.0]]), np.array([[1.0], [1.0]])]
    C = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[1.0, -1.0]])]
    plant = PlantModel(A, B, C)
    gains = design_gains(plant, SynthesisWeights(np.eye(2), np.eye(2)))
    mode = Mode(mode)
    gamma0 = 1.2 if mode.robust else 0.5
    params = NodeParams(mode, mu=0.5, epsilon=0.1, gamma0=gamma0,
                        x_hat0=np.array([[0.5, 0.0], [0.0, -1.0], [1.0, 1.0]]),
                        y_hat0=np.array([[0.2, -0.4, 0.0], [1.0, 0.0, 0.5], [0.0, 0.3, -0.2]]))
    return Scenario(ring(3), plant, gains, params, np.array([1.0, -2.0]),
                    IntegratorSettings(dt, t_final, "rk4", record_every))


def oracle_regression(s: Scenario | None = None) -> SuiteResult:
    t0 = time.perf_counter()
    s = s or regression_scenario()
    res = error_oracle(s, integrate(s))
    ok = res.max_deviation <= ORACLE_TOL
    return SuiteResult("error-oracle-regression", ok, f"max deviation {res.max_deviation:.3e} (bound {ORACLE_TOL:g})",
                       time.perf_counter() - t0)


class FlippedAnchorLoop(ClosedLoop):
    """Deliberate fault: the measurement term of the innovation enters with the wrong sign."""

    def zeta(self, y_hat, y):
        return self.deg * y_hat - self.adj @ y_hat - self.pin * (y_hat - y)

    def rhs(self, t, z):
        x = z[self.sl_x]
        y_hat = z[self.sl_y].reshape(self.N, self.m)
        x_hat = z[self.sl_xh].reshape(self.N, self.n)
        gamma = z[self.sl_g]
        zeta = self.zeta(y_hat, self.measurements(x, t))
        psi = self.mu * ((zeta * zeta) @ self.select)
        d_y = x_hat @ self.c_abar_T - (gamma[:, None] + psi @ self.select.T) * zeta
        d_xh = x_hat @ self.est_T - y_hat @ self.F_T
        d_x = self.A @ x + self.bbar @ z[self.sl_xh]
        d_g = psi.sum(axis=1)
        if self.mode.robust:
            d_g = d_g - self.eps * (gamma - 1.0) ** 2
        return np.concatenate([d_x, d_y.ravel(), d_xh.ravel(), d_g])


def mutation_check() -> SuiteResult:
    """The oracle regression must catch a sign flip of the anchor term."""
    t0 = time.perf_counter()
    s = regression_scenario(t_final=2.0)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            traj = integrate(s, FlippedAnchorLoop(s))
        dev = error_oracle(s, traj).max_deviation
    except ArithmeticError:
        dev = np.inf
    ok = dev > ORACLE_TOL
    return SuiteResult("mutation-anchor-sign", ok, f"faulty run deviates by {dev:.3e} (must exceed {ORACLE_TOL:g})",
                       time.perf_counter() - t0)


def self_loop_rejection() -> SuiteResult:
    adj = ring(3).adjacency.copy()
    adj[1, 1] = 1
    try:
        DirectedGraph(adj)
    except GraphError as exc:
        return SuiteResult("self-loop-rejection", True, f"rejected: {exc}")
    return SuiteResult("self-loop-rejection", False, "a_ii = 1 was accepted")


# ---------------------------------------------------------------- node-level checks

def _random_node_setup(rng, mode=Mode.NOMINAL):
    g = random_strongly_connected(rng, 2, 6)
    N = g.n_nodes
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    B = [rng.normal(size=(n, 1)) for _ in range(N)]
    C = [rng.normal(size=(int(rng.integers(1, 3)), n)) for _ in range(N)]
    plant = PlantModel(A, B, C)
    K = tuple(rng.normal(size=(1, n)) for _ in range(N))
    F = tuple(rng.normal(size=(n, c.shape[0])) for c in C)
    gains = GainSet(K, F)
    s = Scenario(g, plant, gains, NodeParams(mode, mu=float(rng.uniform(0.01, 1.0)), epsilon=0.1,
                                              gamma0=1.5 if Mode(mode).robust else 0.7),
                 rng.normal(size=n))
    cl = ClosedLoop(s)
    z = rng.normal(size=cl.size)
    z[cl.sl_g] = np.abs(z[cl.sl_g]) + (1.5 if Mode(mode).robust else 0.0)
    return s, cl, z


def locality_fuzz(n_cases: int = 200, seed: int = 3) -> SuiteResult:
    """Views hide non-neighbors, and reading through them raises."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        s, cl, z = _random_node_setup(rng)
        states = node_states_at(cl, z)
        x = z[cl.sl_x]
        ys = [c @ x for c in s.plant.outputs]
        adj = s.graph.adjacency
        for i in range(cl.N):
            view = NeighborView.gather(i, adj, [st.y_hat for st in states], ys)
            allowed = set(np.flatnonzero(adj[i]).tolist())
            if set(view.neighbor_estimates) != allowed or set(view.measurements) != allowed:
                return SuiteResult("locality-fuzz", False, f"node {i} sees more than its neighbors",
                                   time.perf_counter() - t0)
            for m in set(range(cl.N)) - allowed:
                try:
                    view.estimate(m, 0)
                except LocalityError:
                    pass
                else:
                    return SuiteResult("locality-fuzz", False, f"node {i} read node {m}", time.perf_counter() - t0)
            # a node whose view misses a neighbor cannot evaluate its derivative
            if allowed:
                drop = min(allowed)
                crippled = NeighborView(i, {k: v for k, v in view.neighbor_estimates.items() if k != drop},
                                        view.own_measurement,
                                        {k: v for k, v in view.measurements.items() if k != drop})
                consts = NodeConstants.from_design(s.plant, s.gains, i)
                try:
                    node_derivative(i, states[i], crippled, s.gains, consts, cl.mu, adj[i])
                except LocalityError:
                    pass
                else:
                    return SuiteResult("locality-fuzz", False, f"node {i} ran without neighbor {drop}",
                                       time.perf_counter() - t0)
    return SuiteResult("locality-fuzz", True, f"{n_cases} random networks", time.perf_counter() - t0)


def stacked_equality(n_cases: int = 200, seed: int = 4) -> SuiteResult:
    """Stacked output-estimator form equals the per-pair assembly bit for bit."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        s, cl, z = _random_node_setup(rng)
        states = node_states_at(cl, z)
        x = z[cl.sl_x]
        ys = [c @ x for c in s.plant.outputs]
        adj = s.graph.adjacency
        for i in range(cl.N):
            view = NeighborView.gather(i, adj, [st.y_hat for st in states], ys)
            consts = NodeConstants.from_design(s.plant, s.gains, i)
            pair = np.concatenate(node_derivative(i, states[i], view, s.gains, consts, cl.mu, adj[i]).d_y_hat)
            stacked = stacked_output_estimator(i, states[i], view, consts, cl.mu, adj[i])
            worst = max(worst, float(np.abs(pair - stacked).max()))
    ok = worst == 0.0
    return SuiteResult("stacked-vs-per-pair", ok, f"max difference {worst:.3e} over {n_cases} networks",
                       time.perf_counter() - t0)


def gain_monotonicity() -> SuiteResult:
    """Nominal gains never decrease; robust gains never drop below 1."""
    t0 = time.perf_counter()
    s = regression_scenario(Mode.NOMINAL, t_final=5.0, record_every=1)
    tr = integrate(s)
    worst_step = float(np.diff(tr.gammas, axis=0).min())
    r = regression_scenario(Mode.ROBUST, t_final=5.0, record_every=1)
    tr_r = integrate(r)
    floor = float(tr_r.gammas.min())
    ok = worst_step >= -1e-12 and floor >= 1.0 - 1e-9
    return SuiteResult("gain-monotonicity-and-floor", ok,
                       f"nominal min step {worst_step:.3e}; robust min gain {floor:.12f}", time.perf_counter() - t0)


SUITES = {
    "m-matrix": m_matrix_sweep,
    "diagonal-g": diagonal_certificate_check,
    "synthesis": synthesis_suite,
    "locality": locality_fuzz,
    "monotonicity": gain_monotonicity,
    "stacked": stacked_equality,
    "oracle": oracle_regression,
    "mutation": mutation_check,
    "self-loop": self_loop_rejection,
}


def run_all(names=None, report=None) -> list[SuiteResult]:
    results = []
    for name in names or SUITES:
        res = SUITES[name]()
        results.append(res)
        if report is not None:
            report(res)
    return results
