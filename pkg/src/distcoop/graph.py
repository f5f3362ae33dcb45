"""Directed communication graphs, Laplacians and M-matrix utilities.

Node indices are 0-based throughout the Python API.  ``adjacency[i, j] == 1``
means node ``i`` receives information from node ``j`` (edge ``j -> i``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError, SynthesisError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Unweighted digraph without self-loops."""

    adjacency: np.ndarray
    n_nodes: int = field(init=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=np.int64, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] == 0:
            raise GraphError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
        if not np.all((adj == 0) | (adj == 1)):
            raise GraphError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise GraphError("self-loops are not allowed (a_ii must be 0)")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "n_nodes", adj.shape[0])

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[int]]) -> "DirectedGraph":
        """Build from ``(source, destination)`` pairs (0-based)."""
        adj = np.zeros((n_nodes, n_nodes), dtype=np.int64)
        for edge in edges:
            if len(edge) != 2:
                raise GraphError(f"edge must be a (source, destination) pair, got {edge!r}")
            src, dst = int(edge[0]), int(edge[1])
            if not (0 <= src < n_nodes and 0 <= dst < n_nodes):
                raise GraphError(f"edge {edge!r} references a node outside 0..{n_nodes - 1}")
            if src == dst:
                raise GraphError(f"self-loop on node {src} is not allowed")
            adj[dst, src] = 1
        return cls(adj)

    def edges(self) -> list[tuple[int, int]]:
        """``(source, destination)`` pairs in row-major order of the adjacency."""
        dst, src = np.nonzero(self.adjacency)
        return sorted(zip(src.tolist(), dst.tolist()), key=lambda e: (e[1], e[0]))

    def neighbors(self, i: int) -> list[int]:
        """Nodes that ``i`` receives from."""
        return np.flatnonzero(self.adjacency[i]).tolist()

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())

    def __repr__(self):
        return f"DirectedGraph(n_nodes={self.n_nodes}, edges={self.edges()})"


@dataclass(frozen=True)
class LaplacianBundle:
    laplacian: np.ndarray
    grounded: tuple[np.ndarray, ...]
    block_grounded: np.ndarray


def laplacian(g: DirectedGraph) -> np.ndarray:
    adj = g.adjacency
    lap = np.diag(adj.sum(axis=1)) - adj
    return lap.astype(float)


def grounded_laplacian(g: DirectedGraph, anchor: int) -> np.ndarray:
    """``L + diag(a_1j, ..., a_Nj)`` for anchor node ``j``."""
    if not 0 <= anchor < g.n_nodes:
        raise IndexError(f"anchor {anchor} out of range for {g.n_nodes} nodes")
    return laplacian(g) + np.diag(g.adjacency[:, anchor].astype(float))


def block_grounded_laplacian(g: DirectedGraph, output_dims: Sequence[int]) -> np.ndarray:
    """The stacked matrix ``L kron I_m + blockdiag(A_1, ..., A_N)``.

    ``A_i = diag(a_i1 I_{m_1}, ..., a_iN I_{m_N})`` and ``m = sum(output_dims)``.
    """
    dims = [int(d) for d in output_dims]
    if len(dims) != g.n_nodes:
        raise ValueError(f"need one output dimension per node ({g.n_nodes}), got {len(dims)}")
    m = sum(dims)
    lap = laplacian(g)
    blocks = []
    for i in range(g.n_nodes):
        blocks.append(np.repeat(g.adjacency[i].astype(float), dims))
    a_hat = np.diag(np.concatenate(blocks)) if m else np.zeros((0, 0))
    return np.kron(lap, np.eye(m)) + a_hat


def laplacian_bundle(g: DirectedGraph, output_dims: Sequence[int] | None = None) -> LaplacianBundle:
    dims = output_dims if output_dims is not None else [1] * g.n_nodes
    return LaplacianBundle(
        laplacian=laplacian(g),
        grounded=tuple(grounded_laplacian(g, j) for j in range(g.n_nodes)),
        block_grounded=block_grounded_laplacian(g, dims),
    )


def _reachable(adj_out: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj_out.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        k = stack.pop()
        for nxt in np.flatnonzero(adj_out[k]):
            if not seen[nxt]:
                seen[nxt] = True
                stack.append(nxt)
    return seen


def is_strongly_connected(g: DirectedGraph) -> bool:
    # adjacency[i, j] = 1 is an edge j -> i, so the transpose lists successors
    forward = _reachable(g.adjacency.T, 0)
    backward = _reachable(g.adjacency, 0)
    return bool(forward.all() and backward.all())


def is_nonsingular_m_matrix(m: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    off = m - np.diag(np.diag(m))
    if m.shape[0] > 1 and off.max() > tol:
        return False
    return bool(np.linalg.eigvals(m).real.min() > tol)


def _sym_min_eig(g_diag: np.ndarray, m: np.ndarray) -> float:
    gm = g_diag[:, None] * m
    return float(np.linalg.eigvalsh(gm + gm.T).min())


def find_diagonal_g(m: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = 500) -> np.ndarray:
    """Positive diagonal ``G`` with ``G M + M^T G`` positive definite.

    Tries ``G = diag(p / q)`` with ``p = M^-T 1`` and ``q = M^-1 1`` first and
    falls back to coordinate ascent on ``log diag(G)``.

    Raises
    ------
    SynthesisError
        If no certificate is found, which means ``M`` is not a non-singular
        M-matrix within tolerance.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    ones = np.ones(n)
    try:
        p = np.linalg.solve(m.T, ones)
        q = np.linalg.solve(m, ones)
    except np.linalg.LinAlgError:
        p = q = None
    if p is not None and np.all(p > 0) and np.all(q > 0):
        cand = p / q
        if _sym_min_eig(cand, m) > tol:
            return np.diag(cand)

    logg = np.zeros(n)
    best = _sym_min_eig(np.exp(logg), m)
    step = 1.0
    for _ in range(max_iter):
        if best > tol:
            break
        improved = False
        for k in range(n):
            for direction in (step, -step):
                trial = logg.copy()
                trial[k] += direction
                trial -= trial.max()
                val = _sym_min_eig(np.exp(trial), m)
                if val > best:
                    logg, best, improved = trial, val, True
                    break
        if not improved:
            step *= 0.5
            if step < 1e-12:
                break
    if best > tol:
        return np.diag(np.exp(logg))
    raise SynthesisError(
        f"no diagonal G found (best min eigenvalue {best:.3e}); matrix is not a non-singular M-matrix",
        residual=best,
    )


def ring(n_nodes: int) -> DirectedGraph:
    """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
    return DirectedGraph.from_edges(n_nodes, [(k, (k + 1) % n_nodes) for k in range(n_nodes)])


def geometric_graph(coords: np.ndarray, radius: float) -> DirectedGraph:
    """Bidirected graph linking nodes closer than ``radius``."""
    coords = np.asarray(coords, dtype=float)
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    adj = (dist < radius).astype(np.int64)
    np.fill_diagonal(adj, 0)
    return DirectedGraph(adj)


def random_geometric_graph(n_nodes: int, radius: float, side: float, seed: int,
                           max_tries: int = 1000) -> tuple[DirectedGraph, np.ndarray, int]:
    """Seeded random geometric graph, re-drawn until strongly connected.

    Returns the graph, node coordinates and the seed that produced them.
    """
    for k in range(max_tries):
        s = seed + k
        coords = np.random.default_rng(s).uniform(0.0, side, size=(n_nodes, 2))
        g = geometric_graph(coords, radius)
        if is_strongly_connected(g):
            return g, coords, s
    raise GraphError(f"no strongly connected geometric graph after {max_tries} seeds starting at {seed}")
