import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.graph.schedule import (
    GraphSchedule,
    bound_dominated,
    consensus_deviation,
    consensus_deviations,
    matrix_power_product,
    mean_consensus_deviation,
    regime_bound,
    regime_label,
    schedule_summary,
)
from app.graph.topology import (
    AdjacencyMatrix,
    Topology,
    identity_matrix,
    metropolis_weights,
    mixing_bound,
    named_topology,
    random_connected_topology,
    read_edge_list,
    static_deviation_bound,
)
from app.services.rng import stream
from app.utils.errors import DisconnectedGraph, EmptyGraph, GraphError, IndexOrder

families = st.sampled_from(["complete", "ring", "path", "star"])


def test_named_topology_edge_counts():
    assert len(named_topology("complete", 5).edges) == 10
    assert len(named_topology("ring", 5).edges) == 5
    assert len(named_topology("path", 5).edges) == 4
    assert len(named_topology("star", 5).edges) == 4
    assert named_topology("ring", 2).edges == frozenset({(0, 1)})


def test_unknown_family_rejected():
    with pytest.raises(GraphError):
        named_topology("torus", 4)


def test_self_loop_and_range_rejected():
    with pytest.raises(GraphError):
        Topology(m=3, edges=frozenset({(1, 1)}))
    with pytest.raises(GraphError):
        Topology(m=3, edges=frozenset({(0, 3)}))


def test_disconnected_graph_has_no_weights():
    with pytest.raises(DisconnectedGraph):
        metropolis_weights(Topology(m=3, edges=frozenset({(0, 1)})))


def test_empty_adjacency_rejected():
    with pytest.raises(EmptyGraph):
        AdjacencyMatrix(np.zeros((0, 0)))


@given(families, st.integers(min_value=1, max_value=9))
def test_metropolis_weights_are_doubly_stochastic(family, m):
    a = metropolis_weights(named_topology(family, m))
    assert np.allclose(a.w.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(a.w.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(a.w, a.w.T)
    assert np.all(np.diag(a.w) > 0)
    assert a.support_within(named_topology(family, m))
    assert 0 < a.nu <= 1
    assert a.delta == pytest.approx(1 - a.nu / (4 * m * m))


def test_ring_weights_are_one_third():
    a = metropolis_weights(named_topology("ring", 4))
    assert a.w[0, 1] == pytest.approx(1 / 3)
    assert a.w[0, 2] == 0.0
    assert a.nu == pytest.approx(1 / 3)


def test_random_topology_is_connected_and_seeded():
    first = random_connected_topology(7, 0.2, stream(3, 7))
    second = random_connected_topology(7, 0.2, stream(3, 7))
    assert first.connected
    assert first.edges == second.edges


def test_read_edge_list(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("# square\n4\n0 1\n1 2\n2 3\n3 0\n")
    topology = read_edge_list(path)
    assert topology.m == 4
    assert topology.edges == named_topology("ring", 4).edges


def test_power_product_identity_and_order(ring4):
    schedule = GraphSchedule.static(ring4)
    assert np.array_equal(matrix_power_product(schedule, 5, 5), np.eye(4))
    assert np.allclose(matrix_power_product(schedule, 0, 3), np.linalg.matrix_power(ring4.w, 3))
    with pytest.raises(IndexOrder):
        matrix_power_product(schedule, 4, 3)


def test_power_product_converges_to_average(ring4):
    product = matrix_power_product(GraphSchedule.static(ring4), 0, 400)
    assert np.allclose(product, np.full((4, 4), 0.25), atol=1e-10)


@pytest.mark.parametrize("family", ["complete", "ring", "path", "star"])
@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_static_deviation_within_bound(family, m):
    a = metropolis_weights(named_topology(family, m))
    deviations = consensus_deviations(GraphSchedule.static(a), 200)
    assert np.all(deviations <= static_deviation_bound(m, a.nu))


def test_single_agent_has_no_deviation():
    schedule = GraphSchedule.static(identity_matrix(1))
    assert consensus_deviation(schedule, 0, 50) == 0.0
    assert static_deviation_bound(1, 1.0) == 0.0


def test_deviation_rejects_bad_agent(ring4):
    with pytest.raises(IndexOrder):
        consensus_deviation(GraphSchedule.static(ring4), 4, 10)


def test_bernoulli_extremes(ring4):
    never = GraphSchedule.bernoulli(ring4, 0.0, seed=1)
    always = GraphSchedule.bernoulli(ring4, 1.0, seed=1)
    assert not any(never.active(tau) for tau in range(100))
    assert all(always.active(tau) for tau in range(100))
    assert np.array_equal(never.weights_at(3), np.eye(4))


def test_bernoulli_schedule_is_reproducible(ring4):
    a = GraphSchedule.bernoulli(ring4, 0.3, seed=9)
    b = GraphSchedule.bernoulli(ring4, 0.3, seed=9)
    pattern = [a.active(tau) for tau in range(3000)]
    assert pattern == [b.active(tau) for tau in range(3000)]
    assert 0.25 < np.mean(pattern) < 0.35


def test_replications_get_independent_switches(ring4):
    base = GraphSchedule.bernoulli(ring4, 0.5, seed=2)
    first, second = base.for_replication(0), base.for_replication(1)
    assert [first.active(t) for t in range(200)] != [second.active(t) for t in range(200)]
    static = GraphSchedule.static(ring4)
    assert static.for_replication(5) is static


def test_schedule_rejects_bad_probability(ring4):
    with pytest.raises(GraphError):
        GraphSchedule.bernoulli(ring4, 1.5, seed=0)
    with pytest.raises(IndexOrder):
        GraphSchedule.static(ring4).active(-1)


def test_regime_labels():
    assert regime_label(8, 0.0) == "none"
    assert regime_label(8, 0.05) == "infrequent"
    assert regime_label(8, 0.25) == "frequent"
    assert regime_label(8, 1.0) == "frequent"


def test_regime_bound_branches():
    nu = 1 / 3
    assert regime_bound(8, 0.0, nu) == math.inf
    assert regime_bound(8, 0.05, nu) == pytest.approx(4 * 8 ** 3 / nu)
    expected = (16 * 64 * math.log(8) + 8 * 64 * math.log(0.5)) / (0.5 * nu)
    assert regime_bound(8, 0.5, nu) == pytest.approx(expected)
    with pytest.raises(GraphError):
        regime_bound(1, 0.5, nu)


def test_bound_domination_flag():
    # just above 2/m the frequent formula exceeds 4 m^3 / nu
    assert bound_dominated(8, 0.25, 1 / 3)
    assert not bound_dominated(8, 0.05, 1 / 3)


@pytest.mark.parametrize("lam", [0.05, 0.25, 0.5, 1.0])
def test_switching_deviation_within_regime_bound(lam):
    a = metropolis_weights(named_topology("ring", 8))
    observed = mean_consensus_deviation(a, lam, 150, seeds=range(20))
    assert np.all(observed <= regime_bound(8, lam, a.nu))


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.05, 0.25, 0.5, 1.0])
def test_switching_deviation_within_regime_bound_full(lam):
    a = metropolis_weights(named_topology("ring", 8))
    observed = mean_consensus_deviation(a, lam, 500, seeds=range(100))
    assert np.all(observed <= regime_bound(8, lam, a.nu))


def test_mixing_bound_decreases():
    values = [mixing_bound(4, 1 / 3, t) for t in (0, 10, 100)]
    assert values[0] == 4
    assert values[0] > values[1] > values[2]


def test_schedule_summary(ring4):
    summary = schedule_summary(GraphSchedule.bernoulli(ring4, 0.0, seed=0), horizon=10)
    assert summary["m"] == 4
    assert summary["mode"] == "bernoulli"
    assert summary["active_fraction"] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.integers(min_value=1, max_value=40))
def test_deviation_agrees_with_direct_products(m, t):
    schedule = GraphSchedule.static(metropolis_weights(named_topology("path", m)))
    direct = sum(
        np.abs(matrix_power_product(schedule, k, t) - 1.0 / m).sum(axis=1) for k in range(1, t + 1)
    )
    assert np.allclose(consensus_deviations(schedule, t), direct, atol=1e-9)
