"""Consensus flows that let every node recover ``B``, ``C`` and a common ``T1``,
and the fully distributed gain design built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError, SynthesisError
from ..graph import DirectedGraph, is_strongly_connected, laplacian
from ..integrators import get_stepper, n_steps_for
from ..plant import PlantModel
from .design import GainSet, SynthesisWeights, design_gains, select_t1

FLOW_DT = 1e-3
FLOW_TOL = 1e-12
FLOW_MAX_TIME = 2000.0


@dataclass(frozen=True)
class FlowResult:
    times: np.ndarray
    values: np.ndarray  # (samples, N, *shape)
    converged: bool

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _run_linear_flow(lap, pin, target, x0, dt, t_final, tol, record_every, method):
    """Integrate ``dX = -L X - pin * (X - target)`` on ``X`` of shape (N, k)."""
    step = get_stepper(method)
    if pin is None:
        def f(t, x):
            return -(lap @ x)
    else:
        def f(t, x):
            return -(lap @ x) - pin * (x - target)

    n = n_steps_for(dt, t_final)
    x = np.array(x0, dtype=float)
    times, values = [0.0], [x.copy()]
    converged = False
    for k in range(n):
        x_new = step(f, k * dt, x, dt)
        change = np.abs(x_new - x).max(initial=0.0)
        x = x_new
        last = k + 1 == n
        if tol is not None and change < tol * dt:
            converged = True
            last = True
        if (k + 1) % record_every == 0 or last:
            times.append((k + 1) * dt)
            values.append(x.copy())
        if last:
            break
    return np.array(times), np.array(values), converged


def consensus_matrix_flow(g: DirectedGraph, initials, dt: float, t_final: float,
                          anchor: tuple[int, np.ndarray] | None = None,
                          tol: float | None = None, record_every: int = 1,
                          method: str = "rk4") -> FlowResult:
    """Matrix-valued consensus flow over ``g``.

    With ``anchor=(j, value)`` every node ``i`` with ``a_ij = 1`` is pinned to
    ``value``; all nodes converge to it.  Without an anchor the plain
    Laplacian flow converges to a left-Perron-weighted average of the
    initial values.  ``tol`` stops the run once ``max |dX/dt| < tol``.
    """
    if not is_strongly_connected(g):
        raise PreconditionError("consensus flow needs a strongly connected graph")
    init = np.asarray(initials, dtype=float)
    if init.shape[0] != g.n_nodes:
        raise ValueError(f"need one initial value per node ({g.n_nodes}), got {init.shape[0]}")
    shape = init.shape[1:]
    x0 = init.reshape(g.n_nodes, -1)
    lap = laplacian(g)
    pin = target = None
    if anchor is not None:
        j, value = anchor
        if not 0 <= j < g.n_nodes:
            raise IndexError(f"anchor node {j} out of range")
        target = np.asarray(value, dtype=float).reshape(1, -1)
        if target.shape[1] != x0.shape[1]:
            raise ValueError(f"anchor value has shape {np.shape(value)}, expected {shape}")
        pin = g.adjacency[:, j].astype(float)[:, None]
    times, values, conv = _run_linear_flow(lap, pin, target, x0, dt, t_final, tol, record_every, method)
    return FlowResult(times, values.reshape((len(times), g.n_nodes) + shape), conv)


def recover_plant_matrices(g: DirectedGraph, plant: PlantModel, dt: float = FLOW_DT,
                           t_final: float = FLOW_MAX_TIME, tol: float | None = FLOW_TOL,
                           method: str = "rk4"):
    """Run every ``B_j`` and ``C_j`` estimation flow at once.

    Node ``i`` starts from its own ``B_i``, ``C_i`` and zeros elsewhere.
    Returns ``(B_hat, C_hat, times)`` with ``B_hat[i]`` the n x sum(p) and
    ``C_hat[i]`` the sum(m) x n estimate held by node ``i``.
    """
    if not is_strongly_connected(g):
        raise PreconditionError("consensus flow needs a strongly connected graph")
    N = g.n_nodes
    n = plant.n
    columns, pins, x0 = [], [], []
    for j in range(N):
        for mat in (plant.inputs[j], plant.outputs[j]):
            flat = mat.reshape(-1)
            columns.append(flat)
            pins.append(np.repeat(g.adjacency[:, j].astype(float)[:, None], flat.size, axis=1))
            start = np.zeros((N, flat.size))
            start[j] = flat
            x0.append(start)
    target = np.concatenate(columns)[None, :]
    pin = np.hstack(pins)
    init = np.hstack(x0)
    times, values, conv = _run_linear_flow(laplacian(g), pin, target, init, dt, t_final, tol, 10 ** 9, method)
    if tol is not None and not conv:
        raise SynthesisError(f"B/C recovery flow did not settle within t = {t_final}")
    final = values[-1]
    b_hat, c_hat = [], []
    for i in range(N):
        off = 0
        bs, cs = [], []
        for j in range(N):
            b, c = plant.inputs[j], plant.outputs[j]
            bs.append(final[i, off:off + b.size].reshape(b.shape))
            off += b.size
            cs.append(final[i, off:off + c.size].reshape(c.shape))
            off += c.size
        b_hat.append(np.hstack(bs) if bs else np.zeros((n, 0)))
        c_hat.append(np.vstack(cs))
    return b_hat, c_hat, times


@dataclass(frozen=True, eq=False)
class DistributedDesignRun:
    gains: GainSet
    node_gains: tuple
    t1_selected: tuple
    t1_consensus: np.ndarray  # (N, n, n)
    b_hat: tuple
    c_hat: tuple

    @property
    def node_disagreement(self) -> float:
        return max(self.gains.max_difference(gs) for gs in self.node_gains)


def run_distributed_design(g: DirectedGraph, plant: PlantModel, per_node_T1, T2, dt: float = FLOW_DT,
                   tol: float = FLOW_TOL, max_time: float = FLOW_MAX_TIME,
                   kappa: float | None = None) -> DistributedDesignRun:
    """Distributed gain design, executed for every node.

    1. fix ``T2``; 2. recover ``B`` and ``C`` by anchored consensus;
    3. each node shrinks its own ``T1`` until the coupling inequality holds;
    4. average the ``T1`` values by Laplacian consensus;
    5. each node solves the two Riccati equations on the consensus ``T1``.
    """
    N = g.n_nodes
    if len(per_node_T1) != N:
        raise ValueError(f"need {N} per-node T1 matrices, got {len(per_node_T1)}")
    T2 = np.asarray(T2, dtype=float)

    if N == 1:
        b_hat, c_hat = [plant.B_stacked], [plant.C_stacked]
    else:
        b_hat, c_hat, _ = recover_plant_matrices(g, plant, dt=dt, t_final=max_time, tol=tol)

    local_plants = [PlantModel(plant.A, _split_cols(b_hat[i], plant.input_dims),
                               _split_rows(c_hat[i], plant.output_dims)) for i in range(N)]
    selected = []
    for i in range(N):
        t1_i, t2_i, *_ = select_t1(local_plants[i], SynthesisWeights(per_node_T1[i], T2, kappa, grow_T2=False))
        selected.append(t1_i)

    if N == 1:
        consensus = np.array(selected)
    else:
        flow = consensus_matrix_flow(g, np.array(selected), dt, max_time, tol=tol, record_every=10 ** 9)
        if not flow.converged:
            raise SynthesisError(f"T1 consensus flow did not settle within t = {max_time}")
        consensus = flow.final

    node_gains = []
    for i in range(N):
        t1_star = 0.5 * (consensus[i] + consensus[i].T)
        node_gains.append(design_gains(local_plants[i], SynthesisWeights(t1_star, T2, kappa, grow_T2=False)))
    return DistributedDesignRun(node_gains[0], tuple(node_gains), tuple(selected), consensus,
                         tuple(b_hat), tuple(c_hat))


def distributed_design(g: DirectedGraph, plant: PlantModel, per_node_T1, T2, **kwargs) -> GainSet:
    """Gain set produced by the distributed design (identical at every node up to flow tolerance)."""
    return run_distributed_design(g, plant, per_node_T1, T2, **kwargs).gains


def _split_cols(m, widths):
    off = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    return tuple(m[:, off[k]:off[k + 1]] for k in range(len(widths)))


def _split_rows(m, heights):
    off = np.concatenate([[0], np.cumsum(heights)]).astype(int)
    return tuple(m[off[k]:off[k + 1]] for k in range(len(heights)))
