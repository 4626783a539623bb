import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zkpcn.topology import (
    ChannelSpec,
    Network,
    TopologyError,
    apply_capacity_factor,
    generate_synthetic,
    initial_split,
    k_hop_view,
    median_capacity,
    parse_snapshot,
)


def path_abc():
    return parse_snapshot("channel A B 10\nchannel B C 20\n")


def test_minimal_snapshot():
    net = parse_snapshot("# two nodes\nchannel A B 10\n")
    assert net.nodes == ("A", "B")
    assert len(net.channels) == 1
    assert net.channels[0].capacity == 10


def test_duplicate_node_ids_merge():
    net = parse_snapshot("channel A B 10\nchannel A C 5\nnode A\n")
    assert net.nodes == ("A", "B", "C")
    assert net.adjacency["A"] == (0, 1)


def test_zero_capacity_rejected():
    with pytest.raises(TopologyError, match="A-B"):
        parse_snapshot("channel A B 0\n")


def test_malformed_line_reports_line_number():
    with pytest.raises(TopologyError, match="line 2"):
        parse_snapshot("channel A B 1\nchannel A B\n")


def test_self_loop_rejected():
    with pytest.raises(TopologyError):
        parse_snapshot("channel A A 3\n")


def test_round_trip_text():
    net = generate_synthetic(30, 60, seed=3)
    assert parse_snapshot(net.to_text()).channels == net.channels


def test_adjacency_consistent():
    net = generate_synthetic(50, 120, seed=2)
    for node, chans in net.adjacency.items():
        for c in chans:
            assert node in (net.channels[c].a, net.channels[c].b)
    assert sum(len(v) for v in net.adjacency.values()) == 2 * len(net.channels)


def test_synthetic_two_nodes():
    net = generate_synthetic(2, 1, "const:10", seed=7)
    assert len(net.channels) == 1
    assert net.channels[0].capacity == 10


def test_synthetic_deterministic():
    a = generate_synthetic(200, 500, seed=7)
    b = generate_synthetic(200, 500, seed=7)
    assert a.to_text() == b.to_text()


def test_synthetic_large_is_connected_and_hub_heavy():
    net = generate_synthetic(1000, 4000, seed=1)
    assert len(net.channels) == 4000
    assert net.is_connected()
    degrees = np.array([len(net.adjacency[n]) for n in net.nodes])
    assert degrees.max() >= 5 * np.median(degrees)
    pairs = {frozenset((c.a, c.b)) for c in net.channels}
    assert len(pairs) == 4000


def test_synthetic_unsatisfiable():
    with pytest.raises(TopologyError):
        generate_synthetic(4, 7)
    with pytest.raises(TopologyError):
        generate_synthetic(10, 5)


def test_capacity_factor():
    net = parse_snapshot("channel A B 10\n")
    assert apply_capacity_factor(net, 1) == net
    assert apply_capacity_factor(net, 25).channels[0].capacity == 250
    big = generate_synthetic(40, 80, seed=1)
    assert apply_capacity_factor(big, 7).capacities.sum() == 7 * big.capacities.sum()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9))
def test_capacity_factor_composes(a, b):
    net = generate_synthetic(12, 20, seed=5)
    assert apply_capacity_factor(net, a * b) == apply_capacity_factor(apply_capacity_factor(net, a), b)


@pytest.mark.parametrize("caps, expected", [([10], 10), ([1, 2, 3], 2), ([1, 2, 3, 4], 2), ([4, 1, 3, 2], 2)])
def test_median_capacity(caps, expected):
    nodes = [f"v{i}" for i in range(len(caps) + 1)]
    chans = [ChannelSpec(i, nodes[i], nodes[i + 1], c) for i, c in enumerate(caps)]
    assert median_capacity(Network.build(nodes, chans)) == expected


def test_median_empty():
    with pytest.raises(TopologyError):
        median_capacity(Network.build(["A"], []))


def test_k_hop_view_path():
    net = path_abc()
    assert set(k_hop_view(net, "A", 1).channels) == {0}
    assert set(k_hop_view(net, "A", 2).channels) == {0, 1}
    assert k_hop_view(net, "A", 10).channels == {0: 10, 1: 20}


def test_k_hop_view_unknown_owner():
    with pytest.raises(TopologyError):
        k_hop_view(path_abc(), "Z", 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_k_hop_view_monotone_and_bounded(seed, k):
    net = generate_synthetic(25, 40, seed=seed)
    owner = net.nodes[seed % 25]
    small, big = k_hop_view(net, owner, k), k_hop_view(net, owner, k + 1)
    assert set(small.channels) <= set(big.channels)
    dist = net.bfs_distances(owner)
    for cid in small.channels:
        c = net.channels[cid]
        assert dist[c.a] <= k and dist[c.b] <= k


def test_initial_split_rounding():
    assert initial_split(ChannelSpec(0, "A", "B", 11)) == (5, 6)
    assert initial_split(ChannelSpec(0, "B", "A", 11)) == (6, 5)
    assert sum(initial_split(ChannelSpec(0, "x", "y", 1))) == 1


def test_edge_index_directions():
    net = path_abc()
    ei = net.edges
    assert ei.node_path((0, 2)) == (0, 1, 2)
    assert ei.node_path((3, 1)) == (2, 1, 0)
