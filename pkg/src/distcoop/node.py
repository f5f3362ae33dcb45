"""Per-node estimator and controller dynamics.

Every derivative here sees only the node's own state plus a
:class:`NeighborView`.  Asking the view for a node outside the in-neighbor
set raises :class:`~distcoop.errors.LocalityError`, so locality is enforced
by construction rather than by convention.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import LocalityError


class Mode(str, enum.Enum):
    NOMINAL = "nominal"
    ROBUST = "robust"
    PURE_OBSERVER = "pure-observer"
    PURE_OBSERVER_ROBUST = "pure-observer-robust"

    @property
    def robust(self) -> bool:
        return self in (Mode.ROBUST, Mode.PURE_OBSERVER_ROBUST)

    @property
    def observer_only(self) -> bool:
        return self in (Mode.PURE_OBSERVER, Mode.PURE_OBSERVER_ROBUST)

    @property
    def gain_floor(self) -> float:
        return 1.0 if self.robust else 0.0


@dataclass
class NodeState:
    """Estimator internals of one node.

    ``y_hat[j]`` is the node's estimate of ``y_j`` (length ``m_j``); in the
    pure-observer modes the same slots hold the output estimates and
    ``gamma`` holds the observer gain.
    """

    y_hat: list
    x_hat: np.ndarray
    gamma: float
    mode: Mode = Mode.NOMINAL

    @property
    def y_hat_stacked(self) -> np.ndarray:
        return np.concatenate(self.y_hat)


@dataclass
class NeighborView:
    """What node ``i`` may read: in-neighbors' output estimates and the
    measurements of the nodes it hears from."""

    node: int
    neighbor_estimates: Mapping[int, Sequence[np.ndarray]]
    own_measurement: np.ndarray
    measurements: Mapping[int, np.ndarray] = field(default_factory=dict)

    def estimate(self, m: int, j: int) -> np.ndarray:
        try:
            return self.neighbor_estimates[m][j]
        except KeyError:
            raise LocalityError(f"node {self.node} has no estimate from node {m} (not a neighbor)") from None

    def measurement(self, j: int) -> np.ndarray:
        try:
            return self.measurements[j]
        except KeyError:
            raise LocalityError(f"node {self.node} does not receive y_{j}") from None

    @classmethod
    def gather(cls, i: int, adjacency: np.ndarray, y_hats: Sequence[Sequence[np.ndarray]],
               measurements: Sequence[np.ndarray]) -> "NeighborView":
        """Slice the network data down to what node ``i`` is allowed to see."""
        nbrs = np.flatnonzero(adjacency[i]).tolist()
        return cls(
            node=i,
            neighbor_estimates={m: y_hats[m] for m in nbrs},
            own_measurement=measurements[i],
            measurements={m: measurements[m] for m in nbrs},
        )


@dataclass
class NodeDerivative:
    d_y_hat: list
    d_x_hat: np.ndarray
    d_gamma: float
    zeta: list
    psi: np.ndarray
    u: np.ndarray


@dataclass(frozen=True, eq=False)
class NodeConstants:
    """Model data every node holds after the gain design.

    ``bk`` is ``B K`` (zero for the pure observer), ``k_own`` the node's own
    ``K_i``.
    """

    A: np.ndarray
    outputs: tuple
    estimator_gains: tuple
    bk: np.ndarray
    k_own: np.ndarray | None = None

    @property
    def a_bar(self) -> np.ndarray:
        return self.A + self.bk

    @classmethod
    def from_design(cls, plant, gains, i: int) -> "NodeConstants":
        bk = plant.B_stacked @ gains.stacked_K if gains.stacked_K.size else np.zeros_like(plant.A)
        return cls(plant.A, plant.outputs, tuple(gains.estimator_gains), bk, gains.controller_gains[i])

    @classmethod
    def observer(cls, A, outputs, estimator_gains) -> "NodeConstants":
        A = np.asarray(A, dtype=float)
        return cls(A, tuple(outputs), tuple(estimator_gains), np.zeros_like(A), None)


def consensus_innovation(i: int, j: int, own: np.ndarray, neighbors: NeighborView,
                         adjacency_row: np.ndarray) -> np.ndarray:
    """``sum_m a_im (yhat_ij - yhat_mj) + a_ij (yhat_ij - y_j)``."""
    zeta = np.zeros_like(own, dtype=float)
    for m in np.flatnonzero(adjacency_row):
        zeta = zeta + adjacency_row[m] * (own - neighbors.estimate(int(m), j))
    if adjacency_row[j]:
        zeta = zeta + adjacency_row[j] * (own - neighbors.measurement(j))
    return zeta


def _estimator_derivative(i, s, nv, consts, mu, epsilon, adjacency_row, robust):
    a_bar = consts.a_bar
    n_nodes = len(consts.outputs)
    zeta, psi = [], np.zeros(n_nodes)
    d_y = []
    for j in range(n_nodes):
        z = consensus_innovation(i, j, s.y_hat[j], nv, adjacency_row)
        zeta.append(z)
        psi[j] = mu * float(z @ z)
    for j in range(n_nodes):
        d_y.append(-(s.gamma + psi[j]) * zeta[j] + consts.outputs[j] @ (a_bar @ s.x_hat))
    d_x = a_bar @ s.x_hat
    for j in range(n_nodes):
        d_x = d_x + consts.estimator_gains[j] @ (consts.outputs[j] @ s.x_hat - s.y_hat[j])
    d_gamma = float(psi.sum())
    if robust:
        d_gamma = -epsilon * (s.gamma - 1.0) ** 2 + d_gamma
    return d_y, d_x, d_gamma, zeta, psi


def node_derivative(i: int, s: NodeState, nv: NeighborView, gains, consts: NodeConstants,
                    mu: float, adjacency_row: np.ndarray, epsilon: float = 0.0) -> NodeDerivative:
    """Right-hand side of the adaptive output estimator, state estimator and
    local controller of node ``i`` (nominal or robust gain law)."""
    mode = Mode(s.mode)
    if mode.observer_only:
        raise ValueError("use pure_observer_derivative for pure-observer modes")
    if len(s.y_hat) != len(consts.outputs):
        raise ValueError(f"node {i} holds {len(s.y_hat)} output estimates, expected {len(consts.outputs)}")
    d_y, d_x, d_g, zeta, psi = _estimator_derivative(i, s, nv, consts, mu, epsilon, adjacency_row, mode.robust)
    k_own = consts.k_own if consts.k_own is not None else gains.controller_gains[i]
    return NodeDerivative(d_y, d_x, d_g, zeta, psi, k_own @ s.x_hat)


def pure_observer_derivative(i: int, s: NodeState, nv: NeighborView, estimator_gains, A,
                             outputs, mu: float, adjacency_row: np.ndarray,
                             epsilon: float = 0.0) -> NodeDerivative:
    """The estimator with ``B K`` removed and no control output."""
    mode = Mode(s.mode)
    if not mode.observer_only:
        raise ValueError("pure_observer_derivative needs a pure-observer mode")
    consts = NodeConstants.observer(A, outputs, estimator_gains)
    d_y, d_x, d_g, zeta, psi = _estimator_derivative(i, s, nv, consts, mu, epsilon, adjacency_row, mode.robust)
    return NodeDerivative(d_y, d_x, d_g, zeta, psi, np.zeros(0))


def stacked_output_estimator(i: int, s: NodeState, nv: NeighborView, consts: NodeConstants,
                             mu: float, adjacency_row: np.ndarray) -> np.ndarray:
    """All output-estimate derivatives of node ``i`` in one stacked expression.

    ``-(gamma I + Psi_i) [sum_m (yhat_i - yhat_m) + A_i (yhat_i - y)] + C Abar xhat_i``
    """
    dims = [c.shape[0] for c in consts.outputs]
    own = s.y_hat_stacked
    disagreement = np.zeros_like(own)
    for m in np.flatnonzero(adjacency_row):
        other = np.concatenate([nv.estimate(int(m), j) for j in range(len(dims))])
        disagreement = disagreement + adjacency_row[m] * (own - other)
    # A_i (yhat_i - y): only the channels node i hears from contribute
    for j in range(len(dims)):
        if adjacency_row[j]:
            lo = sum(dims[:j])
            sl = slice(lo, lo + dims[j])
            disagreement[sl] = disagreement[sl] + adjacency_row[j] * (own[sl] - nv.measurement(j))
    psi_rep = np.empty_like(own)
    start = 0
    for j, d in enumerate(dims):
        block = disagreement[start:start + d]
        psi_rep[start:start + d] = mu * float(block @ block)
        start += d
    drive = np.concatenate([c @ (consts.a_bar @ s.x_hat) for c in consts.outputs])
    return -(s.gamma + psi_rep) * disagreement + drive


def baseline_fixed_gain_derivative(i: int, x_hats: Sequence[np.ndarray], y_i: np.ndarray, P_i, F_i,
                                   gamma: float, bu: np.ndarray, A, C_i, adjacency_row) -> np.ndarray:
    """Fixed-coupling estimator
    ``A xhat_i + F_i (y_i - C_i xhat_i) + gamma P_i sum_j a_ij (xhat_j - xhat_i) + B u``.

    ``gamma`` and the stacked input ``B u`` are global quantities supplied by
    the caller.
    """
    xi = np.asarray(x_hats[i], dtype=float)
    coupling = np.zeros_like(xi)
    for j in np.flatnonzero(adjacency_row):
        coupling = coupling + adjacency_row[j] * (np.asarray(x_hats[j], dtype=float) - xi)
    return A @ xi + F_i @ (y_i - C_i @ xi) + gamma * (P_i @ coupling) + bu


def baseline_error_matrix(A, outputs, F_list, P_list, lap, gamma) -> np.ndarray:
    """``I (x) A - blkdiag(F) blkdiag(C) - gamma blkdiag(P) (L (x) I_n)``."""
    A = np.asarray(A, dtype=float)
    N = len(outputs)
    n = A.shape[0]
    f_diag = block_diag(*F_list)
    c_diag = block_diag(*outputs)
    p_diag = block_diag(*P_list)
    return np.kron(np.eye(N), A) - f_diag @ c_diag - gamma * p_diag @ np.kron(lap, np.eye(n))
