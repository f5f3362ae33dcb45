import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distcoop.errors import LocalityError
from distcoop.graph import DirectedGraph, laplacian, ring
from distcoop.node import (
    Mode,
    NeighborView,
    NodeConstants,
    NodeState,
    baseline_error_matrix,
    baseline_fixed_gain_derivative,
    consensus_innovation,
    node_derivative,
    pure_observer_derivative,
    stacked_output_estimator,
)
from distcoop.sim import network_derivative_by_nodes, node_states_at
from distcoop.synthesis.care import spectral_abscissa
from distcoop.synthesis.design import GainSet
from distcoop.verify import _random_node_setup


def test_innovation_zero_at_consensus():
    nv = NeighborView(0, {1: [np.array([1.0, 2.0])]}, np.zeros(2), {1: np.zeros(2)})
    row = np.array([0, 1])
    np.testing.assert_array_equal(consensus_innovation(0, 0, np.array([1.0, 2.0]), nv, row), [0, 0])


def test_innovation_single_neighbor():
    nv = NeighborView(0, {1: [np.array([0.0, 0.0]), np.array([2.0, 5.0])]}, np.zeros(1), {1: np.zeros(1)})
    row = np.array([0, 1])
    # target j = 1 is heard directly, so the anchor term joins in; use j = 0 with a_00 = 0
    np.testing.assert_array_equal(consensus_innovation(0, 0, np.array([1.0, 0.0]), nv, row), [1, 0])


def test_innovation_anchor_term_only():
    y1 = np.array([1.0, 1.0])
    nv = NeighborView(0, {1: [None, np.array([1.0, 3.0])]}, np.zeros(1), {1: y1})
    row = np.array([0, 1])
    np.testing.assert_array_equal(consensus_innovation(0, 1, np.array([1.0, 3.0]), nv, row), [0, 2])


def test_missing_neighbor_raises():
    nv = NeighborView(0, {}, np.zeros(1), {})
    with pytest.raises(LocalityError):
        consensus_innovation(0, 0, np.zeros(1), nv, np.array([0, 1]))


def _scalar_network(mode=Mode.NOMINAL):
    """Two nodes, scalar plant, each hearing the other."""
    A = np.array([[0.5]])
    C = (np.array([[1.0]]), np.array([[2.0]]))
    F = (np.array([[-1.0]]), np.array([[-0.5]]))
    K = (np.array([[-1.0]]), np.array([[-2.0]]))
    consts = NodeConstants(A, C, F, np.array([[-3.0]]), K[0])
    return consts, GainSet(K, F)


def test_consensus_kills_adaptive_term():
    consts, gains = _scalar_network()
    y = [np.array([0.3]), np.array([0.6])]
    s = NodeState([y[0].copy(), y[1].copy()], np.zeros(1), 4.0)
    nv = NeighborView(0, {1: [y[0].copy(), y[1].copy()]}, y[0], {1: y[1]})
    d = node_derivative(0, s, nv, gains, consts, mu=0.1, adjacency_row=np.array([0, 1]))
    np.testing.assert_array_equal(np.concatenate(d.d_y_hat), [0.0, 0.0])
    expected = sum(f @ (0 - yj) for f, yj in zip(consts.estimator_gains, y))
    np.testing.assert_allclose(d.d_x_hat, expected, rtol=0, atol=0)
    assert d.d_gamma == 0.0
    np.testing.assert_array_equal(d.u, [0.0])


def test_psi_with_example_mu():
    consts, gains = _scalar_network()
    # zeta_00 = 1 from disagreement with the neighbor; zeta_01 = 0
    s = NodeState([np.array([1.0]), np.array([0.0])], np.zeros(1), 0.0)
    nv = NeighborView(0, {1: [np.array([0.0]), np.array([0.0])]}, np.zeros(1), {1: np.array([0.0])})
    d = node_derivative(0, s, nv, gains, consts, mu=0.003, adjacency_row=np.array([0, 1]))
    assert d.psi[0] == pytest.approx(0.003, abs=1e-18)
    assert d.d_gamma == pytest.approx(0.003, abs=1e-18)


def test_robust_gain_decay():
    consts, gains = _scalar_network()
    y = [np.array([0.0]), np.array([0.0])]
    s = NodeState([y[0].copy(), y[1].copy()], np.zeros(1), 2.0, Mode.ROBUST)
    nv = NeighborView(0, {1: [y[0].copy(), y[1].copy()]}, y[0], {1: y[1]})
    d = node_derivative(0, s, nv, gains, consts, mu=0.1, adjacency_row=np.array([0, 1]), epsilon=0.01)
    assert d.d_gamma == pytest.approx(-0.01, abs=1e-18)


def test_pure_observer_equals_zero_gain_controller():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s, cl, z = _random_node_setup(rng)
        states = node_states_at(cl, z)
        x = z[cl.sl_x]
        ys = [c @ x for c in s.plant.outputs]
        adj = s.graph.adjacency
        for i in range(cl.N):
            view = NeighborView.gather(i, adj, [st.y_hat for st in states], ys)
            n = s.plant.n
            consts = NodeConstants(s.plant.A, s.plant.outputs, s.gains.estimator_gains, np.zeros((n, n)),
                                   np.zeros((1, n)))
            a = node_derivative(i, states[i], view, s.gains, consts, cl.mu, adj[i])
            obs_state = NodeState(states[i].y_hat, states[i].x_hat, states[i].gamma, Mode.PURE_OBSERVER)
            b = pure_observer_derivative(i, obs_state, view, s.gains.estimator_gains, s.plant.A,
                                         s.plant.outputs, cl.mu, adj[i])
            for u, v in zip(a.d_y_hat, b.d_y_hat):
                np.testing.assert_array_equal(u, v)
            np.testing.assert_array_equal(a.d_x_hat, b.d_x_hat)
            assert a.d_gamma == b.d_gamma
            assert b.u.size == 0


def test_observer_locked_on():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    C = (np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    F = (np.array([[-1.0], [0.0]]), np.array([[0.0], [-1.0]]))
    x = np.array([0.4, -0.2])
    ys = [c @ x for c in C]
    s = NodeState([ys[0].copy(), ys[1].copy()], x.copy(), 1.0, Mode.PURE_OBSERVER)
    nv = NeighborView(0, {1: [ys[0].copy(), ys[1].copy()]}, ys[0], {1: ys[1]})
    d = pure_observer_derivative(0, s, nv, F, A, C, 0.01, np.array([0, 1]))
    np.testing.assert_array_equal(d.d_x_hat, A @ x)


def test_observer_psi_value():
    A = np.zeros((1, 1))
    C = (np.array([[1.0]]), np.array([[1.0]]))
    F = (np.array([[-1.0]]), np.array([[-1.0]]))
    s = NodeState([np.array([3.0]), np.array([0.0])], np.zeros(1), 1.0, Mode.PURE_OBSERVER)
    nv = NeighborView(0, {1: [np.array([0.0]), np.array([0.0])]}, np.zeros(1), {1: np.array([0.0])})
    d = pure_observer_derivative(0, s, nv, F, A, C, 0.01, np.array([0, 1]))
    assert d.psi[0] == pytest.approx(0.09, abs=1e-17)


def test_mode_guards():
    consts, gains = _scalar_network()
    s = NodeState([np.zeros(1), np.zeros(1)], np.zeros(1), 0.0, Mode.PURE_OBSERVER)
    nv = NeighborView(0, {1: [np.zeros(1), np.zeros(1)]}, np.zeros(1), {1: np.zeros(1)})
    with pytest.raises(ValueError):
        node_derivative(0, s, nv, gains, consts, 0.1, np.array([0, 1]))
    s.mode = Mode.NOMINAL
    with pytest.raises(ValueError):
        pure_observer_derivative(0, s, nv, consts.estimator_gains, consts.A, consts.outputs, 0.1, np.array([0, 1]))


def test_stacked_form_examples():
    rng = np.random.default_rng(5)
    s, cl, z = _random_node_setup(rng)
    states = node_states_at(cl, z)
    x = z[cl.sl_x]
    ys = [c @ x for c in s.plant.outputs]
    adj = s.graph.adjacency
    view = NeighborView.gather(0, adj, [st.y_hat for st in states], ys)
    consts = NodeConstants.from_design(s.plant, s.gains, 0)
    pair = np.concatenate(node_derivative(0, states[0], view, s.gains, consts, cl.mu, adj[0]).d_y_hat)
    np.testing.assert_array_equal(pair, stacked_output_estimator(0, states[0], view, consts, cl.mu, adj[0]))

    # all innovations zero: only the model drive remains
    own = states[0]
    agree = [[own.y_hat[j].copy() for j in range(cl.N)] for _ in range(cl.N)]
    ys_agree = [own.y_hat[j].copy() for j in range(cl.N)]
    view0 = NeighborView.gather(0, adj, agree, ys_agree)
    drive = np.concatenate([c @ (consts.a_bar @ own.x_hat) for c in consts.outputs])
    np.testing.assert_array_equal(stacked_output_estimator(0, own, view0, consts, cl.mu, adj[0]), drive)


def test_gamma_scaling_doubles_consensus_term():
    rng = np.random.default_rng(6)
    s, cl, z = _random_node_setup(rng)
    states = node_states_at(cl, z)
    x = z[cl.sl_x]
    ys = [c @ x for c in s.plant.outputs]
    adj = s.graph.adjacency
    view = NeighborView.gather(0, adj, [st.y_hat for st in states], ys)
    consts = NodeConstants.from_design(s.plant, s.gains, 0)
    drive = np.concatenate([c @ (consts.a_bar @ states[0].x_hat) for c in consts.outputs])
    # mu = 0 makes Psi vanish
    st1 = NodeState(states[0].y_hat, states[0].x_hat, 1.5)
    st2 = NodeState(states[0].y_hat, states[0].x_hat, 3.0)
    t1 = stacked_output_estimator(0, st1, view, consts, 0.0, adj[0]) - drive
    t2 = stacked_output_estimator(0, st2, view, consts, 0.0, adj[0]) - drive
    np.testing.assert_allclose(t2, 2 * t1, rtol=1e-14, atol=1e-14)


def test_baseline_examples():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    C = np.array([[1.0, 0.0]])
    F = np.array([[1.0], [0.5]])
    P = np.eye(2)
    x = np.array([1.0, 2.0])
    bu = np.array([0.1, -0.2])
    row = np.array([0, 1, 1])
    d = baseline_fixed_gain_derivative(0, [x, x, x], C @ x, P, F, 7.0, bu, A, C, row)
    np.testing.assert_allclose(d, A @ x + bu, rtol=0, atol=1e-15)
    xh = [np.array([0.0, 0.0]), np.array([1.0, 1.0]), np.array([2.0, 0.0])]
    d0 = baseline_fixed_gain_derivative(0, xh, C @ x, P, F, 0.0, np.zeros(2), A, C, row)
    np.testing.assert_allclose(d0, A @ xh[0] + F @ (C @ x - C @ xh[0]))


def test_baseline_stacked_matrix_needs_large_gamma():
    # unstable plant; node 3 has no sensor, so decoupled observers cannot converge
    A = np.diag([0.2, 0.3])
    C = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.zeros((1, 2))]
    F = [2 * c.T for c in C]
    P = [np.eye(2)] * 3
    lap = laplacian(ring(3))
    # frozen from an eigenvalue scan of the stacked error matrix over gamma
    assert spectral_abscissa(baseline_error_matrix(A, C, F, P, lap, 0.0)) == pytest.approx(0.3)
    assert spectral_abscissa(baseline_error_matrix(A, C, F, P, lap, 0.5)) == pytest.approx(0.0364169545, rel=1e-8)
    assert spectral_abscissa(baseline_error_matrix(A, C, F, P, lap, 1.0)) == pytest.approx(-0.0819660113, rel=1e-8)
    assert spectral_abscissa(baseline_error_matrix(A, C, F, P, lap, 10.0)) < 0


def test_locality_under_non_neighbor_perturbation():
    rng = np.random.default_rng(7)
    for _ in range(30):
        s, cl, z = _random_node_setup(rng)
        adj = s.graph.adjacency
        x = z[cl.sl_x]
        ys = [c @ x for c in s.plant.outputs]
        states = node_states_at(cl, z)
        for i in range(cl.N):
            consts = NodeConstants.from_design(s.plant, s.gains, i)
            view = NeighborView.gather(i, adj, [st.y_hat for st in states], ys)
            ref = node_derivative(i, states[i], view, s.gains, consts, cl.mu, adj[i])
            outsiders = [m for m in range(cl.N) if m != i and not adj[i, m]]
            bumped = [[y.copy() for y in st.y_hat] for st in states]
            ys_b = [y.copy() for y in ys]
            for m in outsiders:
                bumped[m] = [y + rng.normal(size=y.shape) * 100 for y in bumped[m]]
                ys_b[m] = ys_b[m] + 100.0
            view_b = NeighborView.gather(i, adj, bumped, ys_b)
            got = node_derivative(i, states[i], view_b, s.gains, consts, cl.mu, adj[i])
            np.testing.assert_array_equal(np.concatenate(got.d_y_hat), np.concatenate(ref.d_y_hat))
            np.testing.assert_array_equal(got.d_x_hat, ref.d_x_hat)
            assert got.d_gamma == ref.d_gamma


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(list(Mode)))
def test_per_node_assembly_matches_vectorized(seed, mode):
    rng = np.random.default_rng(seed)
    s, cl, z = _random_node_setup(rng, mode)
    ref = cl.rhs(0.3, z)
    got = network_derivative_by_nodes(s, 0.3, z)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_psi_nonnegative_and_sums(seed):
    rng = np.random.default_rng(seed)
    s, cl, z = _random_node_setup(rng)
    states = node_states_at(cl, z)
    x = z[cl.sl_x]
    ys = [c @ x for c in s.plant.outputs]
    adj = s.graph.adjacency
    derivs = []
    for i in range(cl.N):
        view = NeighborView.gather(i, adj, [st.y_hat for st in states], ys)
        derivs.append(node_derivative(i, states[i], view, s.gains, NodeConstants.from_design(s.plant, s.gains, i),
                                      cl.mu, adj[i]))
    for j in range(cl.N):
        zeta_j = np.concatenate([d.zeta[j] for d in derivs])
        total = sum(d.psi[j] for d in derivs)
        assert all(d.psi[j] >= 0 for d in derivs)
        assert total == pytest.approx(cl.mu * float(zeta_j @ zeta_j), rel=1e-12, abs=1e-300)


def test_graph_helper_direction():
    # node 0 hearing node 1 only
    g = DirectedGraph.from_edges(2, [(1, 0)])
    view = NeighborView.gather(0, g.adjacency, [[np.zeros(1)], [np.ones(1)]], [np.zeros(1), np.ones(1)])
    assert set(view.neighbor_estimates) == {1}
    view1 = NeighborView.gather(1, g.adjacency, [[np.zeros(1)], [np.ones(1)]], [np.zeros(1), np.ones(1)])
    assert view1.neighbor_estimates == {}
