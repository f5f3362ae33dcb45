"""Closed-loop simulation of the plant and all node estimators.

The whole network is integrated as one stacked ODE
``z = [x, yhat (N x m), xhat (N x n), gamma (N)]`` with a fixed-step
integrator.  :func:`network_derivative_by_nodes` evaluates the same right-hand
side node by node through :mod:`distcoop.node`; the vectorized form in
:class:`ClosedLoop` is what :func:`integrate` uses for speed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, PreconditionError
from .graph import DirectedGraph, grounded_laplacian, is_strongly_connected, laplacian
from .integrators import METHODS, get_stepper, n_steps_for
from .node import (
    Mode,
    NeighborView,
    NodeConstants,
    NodeState,
    baseline_fixed_gain_derivative,
    node_derivative,
    pure_observer_derivative,
)
from .plant import PlantModel
from .synthesis.design import GainSet

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 1e-3
    t_final: float = 10.0
    method: str = "rk4"
    record_every: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.dt, self.t_final)


@dataclass(frozen=True, eq=False)
class NodeParams:
    mode: Mode = Mode.NOMINAL
    mu: float = 0.01
    epsilon: float = 0.01
    gamma0: np.ndarray | float | None = None
    x_hat0: np.ndarray | None = None
    y_hat0: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.mode.robust and not self.epsilon > 0:
            raise ValueError("epsilon must be positive in robust modes")


@dataclass(frozen=True, eq=False)
class Scenario:
    graph: DirectedGraph
    plant: PlantModel
    gains: GainSet
    params: NodeParams
    x0: np.ndarray
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        N, n = self.graph.n_nodes, self.plant.n
        if self.plant.n_nodes != N:
            raise ValueError(f"plant has {self.plant.n_nodes} channels but graph has {N} nodes")
        if not is_strongly_connected(self.graph):
            raise PreconditionError("communication graph must be strongly connected")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ValueError(f"x0 has length {x0.size}, expected {n}")
        object.__setattr__(self, "x0", x0)
        if len(self.gains.estimator_gains) != N:
            raise ValueError("gain set does not match the number of nodes")
        g0 = self.gamma0
        if self.params.mode.robust and np.any(g0 <= 1.0):
            raise ValueError("robust modes require every initial gain > 1")
        if np.any(g0 < 0):
            raise ValueError("initial gains must be nonnegative")

    @property
    def m(self) -> int:
        return int(self.plant.output_offsets[-1])

    @property
    def gamma0(self) -> np.ndarray:
        g = self.params.gamma0
        if g is None:
            g = 1.01 if self.params.mode.robust else 0.0
        return np.broadcast_to(np.asarray(g, dtype=float), (self.graph.n_nodes,)).copy()

    @property
    def x_hat0(self) -> np.ndarray:
        N, n = self.graph.n_nodes, self.plant.n
        if self.params.x_hat0 is None:
            return np.zeros((N, n))
        return np.broadcast_to(np.asarray(self.params.x_hat0, dtype=float), (N, n)).copy()

    @property
    def y_hat0(self) -> np.ndarray:
        N = self.graph.n_nodes
        if self.params.y_hat0 is None:
            return np.zeros((N, self.m))
        return np.broadcast_to(np.asarray(self.params.y_hat0, dtype=float), (N, self.m)).copy()

    def with_integrator(self, **changes) -> "Scenario":
        fields = dict(dt=self.integrator.dt, t_final=self.integrator.t_final,
                      method=self.integrator.method, record_every=self.integrator.record_every)
        fields.update(changes)
        return Scenario(self.graph, self.plant, self.gains, self.params, self.x0, IntegratorSettings(**fields))


# closed loops up to this many states use dense linear operators
DENSE_OPERATOR_LIMIT = 400


class ClosedLoop:
    """Vectorized right-hand side of the plant plus every node."""

    def __init__(self, s: Scenario):
        self.scenario = s
        plant, gains, g = s.plant, s.gains, s.graph
        self.N, self.n, self.m = g.n_nodes, plant.n, s.m
        N, n, m = self.N, self.n, self.m
        self.mode = s.params.mode
        self.mu = float(s.params.mu)
        self.eps = float(s.params.epsilon)
        self.floor = self.mode.gain_floor
        adj = g.adjacency.astype(float)
        offs = plant.output_offsets
        owner = np.repeat(np.arange(N), np.diff(offs))
        self.select = np.zeros((m, N))
        self.select[np.arange(m), owner] = 1.0
        self.deg = adj.sum(axis=1)[:, None]
        self.adj = adj
        self.pin = adj[:, owner]

        A = plant.A
        C = plant.C_stacked
        F = gains.stacked_F
        if self.mode.observer_only or sum(plant.input_dims) == 0:
            bk = np.zeros((n, n))
            self.bbar = np.zeros((n, N * n))
            self.k_blocks = [np.zeros((p, n)) for p in plant.input_dims]
        else:
            bk = plant.B_stacked @ gains.stacked_K
            self.bbar = gains.bbar(plant)
            self.k_blocks = list(gains.controller_gains)
        a_bar = A + bk
        self.A = A
        self.C = C
        self.c_abar_T = (C @ a_bar).T.copy()
        self.est_T = (a_bar + F @ C).T.copy()
        self.F_T = F.T.copy()
        self.sl_x = slice(0, n)
        self.sl_y = slice(n, n + N * m)
        self.sl_xh = slice(n + N * m, n + N * m + N * n)
        self.sl_g = slice(n + N * m + N * n, n + N * m + N * n + N)
        self.size = self.sl_g.stop
        self.omega = plant.process_noise
        self.has_nu = plant.measurement_noise is not None

        self.pin_flat = self.pin.ravel()
        self.dense = self.size <= DENSE_OPERATOR_LIMIT
        if self.dense:
            # small loops: one matvec per linear block beats many tiny array ops
            eye_N = np.eye(N)
            zeta_op = np.zeros((N * m, self.size))
            zeta_op[:, self.sl_x] = -self.pin_flat[:, None] * np.kron(np.ones((N, 1)), C)
            zeta_op[:, self.sl_y] = np.kron(np.diag(self.deg[:, 0]) - adj, np.eye(m)) + np.diag(self.pin_flat)
            lin_op = np.zeros((n + N * m + N * n, self.size))
            lin_op[self.sl_x, self.sl_x] = A
            lin_op[self.sl_x, self.sl_xh] = self.bbar
            lin_op[self.sl_y, self.sl_xh] = np.kron(eye_N, C @ a_bar)
            lin_op[self.sl_xh, self.sl_y] = np.kron(eye_N, -F)
            lin_op[self.sl_xh, self.sl_xh] = np.kron(eye_N, a_bar + F @ C)
            self.zeta_op, self.lin_op = zeta_op, lin_op

    def pack(self, x, y_hat, x_hat, gamma) -> np.ndarray:
        return np.concatenate([np.ravel(x), np.ravel(y_hat), np.ravel(x_hat), np.ravel(gamma)]).astype(float)

    def unpack(self, z):
        return (z[self.sl_x], z[self.sl_y].reshape(self.N, self.m),
                z[self.sl_xh].reshape(self.N, self.n), z[self.sl_g])

    def initial_state(self) -> np.ndarray:
        s = self.scenario
        return self.pack(s.x0, s.y_hat0, s.x_hat0, s.gamma0)

    def measurements(self, x, t) -> np.ndarray:
        y = self.C @ x
        if self.has_nu:
            y = y + self.scenario.plant.nu_stacked(t)
        return y

    def zeta(self, y_hat, y) -> np.ndarray:
        """Consensus innovations of every pair, shape (N, m)."""
        return self.deg * y_hat - self.adj @ y_hat + self.pin * (y_hat - y)

    def rhs(self, t, z):
        if self.dense:
            return self._rhs_dense(t, z)
        x = z[self.sl_x]
        y_hat = z[self.sl_y].reshape(self.N, self.m)
        x_hat = z[self.sl_xh].reshape(self.N, self.n)
        gamma = z[self.sl_g]
        y = self.measurements(x, t)
        zeta = self.zeta(y_hat, y)
        psi = self.mu * ((zeta * zeta) @ self.select)
        d_y = x_hat @ self.c_abar_T - (gamma[:, None] + psi @ self.select.T) * zeta
        d_xh = x_hat @ self.est_T - y_hat @ self.F_T
        d_x = self.A @ x + self.bbar @ z[self.sl_xh]
        if self.omega is not None:
            d_x = d_x + self.omega(t)
        d_g = psi.sum(axis=1)
        if self.mode.robust:
            d_g = d_g - self.eps * (gamma - 1.0) ** 2
        return np.concatenate([d_x, d_y.ravel(), d_xh.ravel(), d_g])

    def _rhs_dense(self, t, z):
        zeta = self.zeta_op @ z
        if self.has_nu:
            zeta -= self.pin_flat * np.tile(self.scenario.plant.nu_stacked(t), self.N)
        gamma = z[self.sl_g]
        psi = self.mu * ((zeta * zeta).reshape(self.N, self.m) @ self.select)
        out = self.lin_op @ z
        out[self.sl_y] -= (gamma[:, None] + psi @ self.select.T).ravel() * zeta
        if self.omega is not None:
            out[self.sl_x] += self.omega(t)
        d_g = psi.sum(axis=1)
        if self.mode.robust:
            d_g = d_g - self.eps * (gamma - 1.0) ** 2
        return np.concatenate([out, d_g])

    def inputs(self, x_hat) -> np.ndarray:
        if not self.k_blocks:
            return np.zeros(0)
        return np.concatenate([k @ xh for k, xh in zip(self.k_blocks, x_hat)])


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    plant_states: np.ndarray  # (S, n)
    y_hats: np.ndarray  # (S, N, m)
    x_hats: np.ndarray  # (S, N, n)
    gammas: np.ndarray  # (S, N)
    inputs: np.ndarray  # (S, sum p)
    min_gamma_step: float = 0.0

    def __len__(self):
        return len(self.times)


def _check_finite(z, t):
    peak = np.abs(z).max()
    if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
        raise DivergenceError(f"state diverged at t = {t:.6g} (max |z| = {peak:.3e})", time=t)


def integrate(s: Scenario, loop: ClosedLoop | None = None) -> Trajectory:
    """Fixed-step integration of the closed loop; bit-reproducible.

    ``loop`` substitutes a prebuilt (possibly modified) right-hand side; the
    verification harness uses it for fault injection.

    Raises
    ------
    DivergenceError
        When any state component becomes non-finite or exceeds 1e12.
    """
    cl = loop if loop is not None else ClosedLoop(s)
    settings = s.integrator
    step = get_stepper(settings.method)
    dt, every = settings.dt, settings.record_every
    n_steps = settings.n_steps
    z = cl.initial_state()
    sl_g = cl.sl_g
    floor = cl.floor
    samples_t, samples_z = [0.0], [z.copy()]
    min_gamma_step = np.inf
    for k in range(n_steps):
        t = k * dt
        z_new = step(cl.rhs, t, z, dt)
        g_new = z_new[sl_g]
        np.maximum(g_new, floor, out=g_new)
        d = (g_new - z[sl_g]).min()
        if d < min_gamma_step:
            min_gamma_step = d
        z = z_new
        if (k + 1) % every == 0 or k + 1 == n_steps:
            _check_finite(z, (k + 1) * dt)
            samples_t.append((k + 1) * dt)
            samples_z.append(z.copy())
        elif k % 97 == 0:
            _check_finite(z, (k + 1) * dt)
    return _trajectory_from_samples(cl, np.array(samples_t), np.array(samples_z), float(min_gamma_step))


def _trajectory_from_samples(cl: ClosedLoop, times, zs, min_gamma_step=0.0) -> Trajectory:
    S = len(times)
    x = zs[:, cl.sl_x]
    y_hat = zs[:, cl.sl_y].reshape(S, cl.N, cl.m)
    x_hat = zs[:, cl.sl_xh].reshape(S, cl.N, cl.n)
    gam = zs[:, cl.sl_g]
    u = np.array([cl.inputs(xh) for xh in x_hat])
    return Trajectory(times, x, y_hat, x_hat, gam, u, min_gamma_step)


def node_states_at(cl: ClosedLoop, z) -> list[NodeState]:
    _, y_hat, x_hat, gamma = cl.unpack(z)
    offs = cl.scenario.plant.output_offsets
    return [NodeState([y_hat[i, offs[j]:offs[j + 1]].copy() for j in range(cl.N)], x_hat[i].copy(),
                      float(gamma[i]), cl.mode) for i in range(cl.N)]


def network_derivative_by_nodes(s: Scenario, t: float, z: np.ndarray) -> np.ndarray:
    """Stacked derivative assembled from per-node local computations."""
    cl = ClosedLoop(s)
    x, _, x_hat, _ = cl.unpack(z)
    plant, gains = s.plant, s.gains
    states = node_states_at(cl, z)
    ys = [plant.outputs[j] @ x + plant.nu(j, t) for j in range(cl.N)]
    adjacency = s.graph.adjacency
    d_y, d_xh, d_g, us = [], [], [], []
    for i, st in enumerate(states):
        view = NeighborView.gather(i, adjacency, [ns.y_hat for ns in states], ys)
        if cl.mode.observer_only:
            nd = pure_observer_derivative(i, st, view, gains.estimator_gains, plant.A, plant.outputs,
                                          cl.mu, adjacency[i], cl.eps)
            us.append(np.zeros((plant.input_dims[i],)))
        else:
            consts = NodeConstants.from_design(plant, gains, i)
            nd = node_derivative(i, st, view, gains, consts, cl.mu, adjacency[i], cl.eps)
            us.append(nd.u)
        d_y.append(np.concatenate(nd.d_y_hat))
        d_xh.append(nd.d_x_hat)
        d_g.append(nd.d_gamma)
    dx = plant.A @ x + plant.omega(t)
    for b, u in zip(plant.inputs, us):
        if b.shape[1]:
            dx = dx + b @ u
    return np.concatenate([dx, np.concatenate(d_y), np.concatenate(d_xh), np.array(d_g)])


# ---------------------------------------------------------------- error oracle

@dataclass(frozen=True)
class OracleResult:
    times: np.ndarray
    x_tilde: np.ndarray  # (S, N*n)
    zeta: np.ndarray  # (S, N, m): zeta[:, i, block j] = zeta_ij
    gammas: np.ndarray
    max_deviation: float
    deviation_x: float
    deviation_zeta: float
    deviation_gamma: float


def closed_loop_error_matrix(plant: PlantModel, gains: GainSet, observer_only: bool = False) -> np.ndarray:
    """``I_N (x) (A + F C + B K) - 1_N (x) [B_1 K_1, ..., B_N K_N]``."""
    N = plant.n_nodes
    A, C, F = plant.A, plant.C_stacked, gains.stacked_F
    if observer_only or sum(plant.input_dims) == 0:
        bk = np.zeros_like(A)
        bbar = np.zeros((plant.n, N * plant.n))
    else:
        bk = plant.B_stacked @ gains.stacked_K
        bbar = gains.bbar(plant)
    return np.kron(np.eye(N), A + F @ C + bk) - np.kron(np.ones((N, 1)), bbar)


def error_oracle(s: Scenario, traj: Trajectory) -> OracleResult:
    """Integrate the estimation-error dynamics on their own and compare.

    The oracle state is ``(x_tilde, zeta^1..zeta^N, gamma)``; output errors
    are recovered as ``ytilde^j = (L^j (x) I)^-1 zeta^j``.  Only the initial
    condition is taken from the scenario.
    """
    plant, gains, g = s.plant, s.gains, s.graph
    if plant.noisy:
        raise PreconditionError("error oracle needs a noise-free plant")
    N, n = g.n_nodes, plant.n
    mode = s.params.mode
    mu, eps = float(s.params.mu), float(s.params.epsilon)
    offs = plant.output_offsets
    dims = plant.output_dims
    A_cl = closed_loop_error_matrix(plant, gains, mode.observer_only)
    F = gains.stacked_F
    if mode.observer_only or sum(plant.input_dims) == 0:
        a_bar = plant.A.copy()
        bbar = np.zeros((n, N * n))
    else:
        a_bar = plant.A + plant.B_stacked @ gains.stacked_K
        bbar = gains.bbar(plant)

    lj = [grounded_laplacian(g, j) for j in range(N)]
    alpha = [g.adjacency[:, j].astype(float)[:, None] for j in range(N)]
    zeta_ops, drive_ops, inv_ops = [], [], []
    for j in range(N):
        cj = plant.outputs[j]
        eye = np.eye(dims[j])
        zeta_ops.append(np.kron(lj[j], eye))
        inv_ops.append(np.linalg.inv(np.kron(lj[j], eye)))
        drive_ops.append(np.kron(lj[j], cj @ a_bar) - np.kron(alpha[j], cj @ bbar))
    # yhat - y stacked node-major -> xtilde drive -(I_N (x) F) ytilde
    f_big = np.kron(np.eye(N), F)

    def split(w):
        xt = w[:N * n]
        zetas = []
        off = N * n
        for j in range(N):
            size = N * dims[j]
            zetas.append(w[off:off + size])
            off += size
        return xt, zetas, w[off:]

    def ytilde_node_major(zetas):
        yt = np.zeros((N, offs[-1]))
        for j in range(N):
            yt[:, offs[j]:offs[j + 1]] = (inv_ops[j] @ zetas[j]).reshape(N, dims[j])
        return yt.reshape(-1)

    def f(t, w):
        xt, zetas, gam = split(w)
        d_zetas = []
        psi_sum = np.zeros(N)
        for j in range(N):
            zj = zetas[j].reshape(N, dims[j])
            psi_j = mu * (zj * zj).sum(axis=1)
            psi_sum += psi_j
            gain = np.kron(lj[j] @ np.diag(gam + psi_j), np.eye(dims[j]))
            d_zetas.append(-gain @ zetas[j] + drive_ops[j] @ xt)
        d_xt = A_cl @ xt - f_big @ ytilde_node_major(zetas)
        d_g = psi_sum
        if mode.robust:
            d_g = d_g - eps * (gam - 1.0) ** 2
        return np.concatenate([d_xt] + d_zetas + [d_g])

    x0 = s.x0
    y_tilde0 = s.y_hat0 - (plant.C_stacked @ x0)[None, :]
    xt0 = (s.x_hat0 - x0[None, :]).reshape(-1)
    zeta0 = [zeta_ops[j] @ y_tilde0[:, offs[j]:offs[j + 1]].reshape(-1) for j in range(N)]
    w = np.concatenate([xt0] + zeta0 + [s.gamma0])

    settings = s.integrator
    step = get_stepper(settings.method)
    floor = mode.gain_floor
    times, ws = [0.0], [w.copy()]
    for k in range(settings.n_steps):
        w = step(f, k * settings.dt, w, settings.dt)
        w[-N:] = np.maximum(w[-N:], floor)
        if (k + 1) % settings.record_every == 0 or k + 1 == settings.n_steps:
            times.append((k + 1) * settings.dt)
            ws.append(w.copy())
    times = np.array(times)
    ws = np.array(ws)

    S = len(times)
    xt_o = ws[:, :N * n]
    zeta_o = np.zeros((S, N, offs[-1]))
    gam_o = ws[:, -N:]
    for k in range(S):
        _, zetas, _ = split(ws[k])
        for j in range(N):
            zeta_o[k, :, offs[j]:offs[j + 1]] = zetas[j].reshape(N, dims[j])

    if len(traj.times) != S or not np.allclose(traj.times, times):
        raise ValueError("trajectory sampling does not match the scenario integrator settings")
    xt_p = (traj.x_hats - traj.plant_states[:, None, :]).reshape(S, -1)
    zeta_p = primal_zeta(s, traj)
    dev_x = float(np.abs(xt_o - xt_p).max())
    dev_z = float(np.abs(zeta_o - zeta_p).max())
    dev_g = float(np.abs(gam_o - traj.gammas).max())
    return OracleResult(times, xt_o, zeta_o, gam_o, max(dev_x, dev_z, dev_g), dev_x, dev_z, dev_g)


def primal_zeta(s: Scenario, traj: Trajectory) -> np.ndarray:
    """Consensus innovations reconstructed from the recorded output estimates."""
    g = s.graph
    adj = g.adjacency.astype(float)
    offs = s.plant.output_offsets
    owner = np.repeat(np.arange(g.n_nodes), np.diff(offs))
    pin = adj[:, owner]
    deg = adj.sum(axis=1)[:, None]
    out = np.empty_like(traj.y_hats)
    for k in range(len(traj.times)):
        y = s.plant.C_stacked @ traj.plant_states[k] + s.plant.nu_stacked(traj.times[k])
        yh = traj.y_hats[k]
        out[k] = deg * yh - adj @ yh + pin * (yh - y)
    return out


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class Metrics:
    times: np.ndarray
    state_norm: np.ndarray
    est_error: np.ndarray  # (S, N)
    avg_est_error: np.ndarray
    output_err: np.ndarray  # (S, N, N)
    gain_final: np.ndarray
    residual_bound: float


def extract_metrics(traj: Trajectory, s: Scenario) -> Metrics:
    N, n = s.graph.n_nodes, s.plant.n
    err = traj.x_hats - traj.plant_states[:, None, :]
    est = np.linalg.norm(err, axis=2)
    avg = np.abs(err).sum(axis=(1, 2)) / (N * n)
    offs = s.plant.output_offsets
    S = len(traj.times)
    out_err = np.zeros((S, N, N))
    for k in range(S):
        y = s.plant.C_stacked @ traj.plant_states[k] + s.plant.nu_stacked(traj.times[k])
        diff = traj.y_hats[k] - y[None, :]
        for j in range(N):
            out_err[k, :, j] = np.linalg.norm(diff[:, offs[j]:offs[j + 1]], axis=1)
    norm = np.linalg.norm(traj.plant_states, axis=1)
    t_end = traj.times[-1]
    tail = traj.times >= 0.9 * t_end
    residual = float((norm[tail] ** 2).max())
    return Metrics(traj.times, norm, est, avg, out_err, traj.gammas[-1].copy(), residual)


# ---------------------------------------------------------------- fixed-gain baseline

@dataclass(frozen=True, eq=False)
class BaselineParams:
    """Global inputs of the fixed-coupling estimator.

    ``observer_gains[i]`` multiplies the innovation ``y_i - C_i xhat_i``.
    """

    gamma: float
    coupling_gains: tuple  # P_i
    observer_gains: tuple  # F_i


def integrate_baseline(s: Scenario, bp: BaselineParams) -> Trajectory:
    """Run the fixed-gain estimator in place of the adaptive one.

    The plant keeps the controller ``u_i = K_i xhat_i`` unless the scenario is
    a pure-observer one.  The trajectory's ``gammas`` column holds the fixed
    coupling gain.
    """
    plant, g = s.plant, s.graph
    N, n = g.n_nodes, plant.n
    observer_only = s.params.mode.observer_only or sum(plant.input_dims) == 0
    bbar = np.zeros((n, N * n)) if observer_only else s.gains.bbar(plant)
    adjacency = g.adjacency
    A = plant.A

    def f(t, w):
        x = w[:n]
        xh = w[n:].reshape(N, n)
        bu = bbar @ w[n:]
        dx = A @ x + bu + plant.omega(t)
        d = [baseline_fixed_gain_derivative(i, xh, plant.outputs[i] @ x + plant.nu(i, t),
                                            bp.coupling_gains[i], bp.observer_gains[i], bp.gamma, bu,
                                            A, plant.outputs[i], adjacency[i]) for i in range(N)]
        return np.concatenate([dx] + d)

    settings = s.integrator
    step = get_stepper(settings.method)
    w = np.concatenate([s.x0, s.x_hat0.reshape(-1)])
    times, ws = [0.0], [w.copy()]
    for k in range(settings.n_steps):
        w = step(f, k * settings.dt, w, settings.dt)
        if (k + 1) % settings.record_every == 0 or k + 1 == settings.n_steps:
            _check_finite(w, (k + 1) * settings.dt)
            times.append((k + 1) * settings.dt)
            ws.append(w.copy())
        elif k % 97 == 0:
            _check_finite(w, (k + 1) * settings.dt)
    ws = np.array(ws)
    S = len(times)
    x_hat = ws[:, n:].reshape(S, N, n)
    if observer_only:
        u = np.zeros((S, sum(plant.input_dims)))
    else:
        u = np.array([np.concatenate([k @ xh_i for k, xh_i in zip(s.gains.controller_gains, xh)]) for xh in x_hat])
    return Trajectory(np.array(times), ws[:, :n], np.zeros((S, N, s.m)), x_hat,
                      np.full((S, N), float(bp.gamma)), u)


def integrate_plant(plant: PlantModel, x0, settings: IntegratorSettings) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop run of ``dx/dt = A x + w(t)`` with no nodes attached."""
    A = plant.A
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.n,):
        raise ValueError(f"x0 has length {x0.size}, expected {plant.n}")

    def f(t, x):
        return A @ x + plant.omega(t)

    step = get_stepper(settings.method)
    x = x0.copy()
    times, xs = [0.0], [x.copy()]
    for k in range(settings.n_steps):
        x = step(f, k * settings.dt, x, settings.dt)
        if (k + 1) % settings.record_every == 0 or k + 1 == settings.n_steps:
            _check_finite(x, (k + 1) * settings.dt)
            times.append((k + 1) * settings.dt)
            xs.append(x.copy())
    return np.array(times), np.array(xs)
