import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cscgame.errors import ConfigurationError
from cscgame.netmodel import (
    NetworkTopology,
    generate_sap_user_topology,
    generate_topology,
    load_fixture,
    make_topology,
    neighbors,
    sample_active_set,
)
from cscgame.utility import TRAFFIC_PRESETS

from conftest import pairwise_neighbors


def test_single_cell_has_no_edges():
    topo = generate_topology(1, 1)
    assert topo.edges() == []
    assert neighbors(topo, 0) == frozenset()


def test_two_close_cells_share_one_edge():
    topo = make_topology([(10, 10), (20, 10)], interference_radius=30)
    assert topo.edges() == [(0, 1)]
    assert neighbors(topo, 0) == {1}
    assert neighbors(topo, 1) == {0}


def test_edge_requires_strictly_smaller_distance():
    topo = make_topology([(0, 0), (30, 0)], interference_radius=30)
    assert topo.edges() == []


def test_generation_is_deterministic():
    a = generate_topology(42, 9, region=(100, 100), interference_radius=30)
    b = generate_topology(42, 9, region=(100, 100), interference_radius=30)
    assert a.graph == b.graph
    assert np.array_equal(a.positions, b.positions)
    assert a == b


def test_neighbors_match_pairwise_recomputation():
    topo = generate_topology(42, 9, region=(100, 100), interference_radius=30)
    oracle = pairwise_neighbors([c.position for c in topo.cells], 30)
    assert [set(neighbors(topo, i)) for i in range(9)] == oracle


def test_unknown_cell_is_a_lookup_error():
    topo = generate_topology(0, 3)
    with pytest.raises(KeyError):
        neighbors(topo, 3)


def test_zero_channels_rejected():
    with pytest.raises(ConfigurationError):
        generate_topology(0, 3, channels=0)


@pytest.mark.parametrize("lam", [0.0, -0.1, 1.5])
def test_active_prob_outside_unit_interval(lam):
    with pytest.raises(ConfigurationError, match="active_prob"):
        generate_topology(0, 3, active_prob=lam)


def test_all_active_when_lambda_is_one():
    topo = generate_topology(3, 6)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert sample_active_set(topo, rng) == frozenset(range(6))


@pytest.mark.parametrize("lam, tol", [(0.5, 0.01), (0.05, 3 * np.sqrt(0.05 * 0.95 / 100_000))])
def test_inclusion_frequency(lam, tol):
    topo = generate_topology(3, 2, active_prob=lam)
    rng = np.random.default_rng(7)
    m = 100_000
    hits = sum(0 in sample_active_set(topo, rng) for _ in range(m))
    assert abs(hits / m - lam) <= tol


def test_per_cell_active_prob_marginals():
    lams = [0.2, 0.5, 0.9]
    topo = generate_topology(5, 3, active_prob=lams)
    rng = np.random.default_rng(11)
    m = 100_000
    counts = np.zeros(3)
    for _ in range(m):
        for c in sample_active_set(topo, rng):
            counts[c] += 1
    sigma = np.sqrt(np.array(lams) * (1 - np.array(lams)) / m)
    assert np.all(np.abs(counts / m - lams) <= 3 * sigma)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    n=st.integers(1, 25),
    radius=st.floats(1.0, 80.0),
)
def test_graph_symmetric_and_irreflexive(seed, n, radius):
    topo = generate_topology(seed, n, interference_radius=radius)
    for i, nb in enumerate(topo.graph):
        assert i not in nb
        for j in nb:
            assert i in topo.graph[j]
    assert [set(s) for s in topo.graph] == pairwise_neighbors([c.position for c in topo.cells], radius)


def test_json_round_trip():
    topo = generate_topology(9, 7, channels=3, active_prob=0.4, bandwidth_hz=[1e6, 2e6, 5e5])
    back = NetworkTopology.from_json(topo.to_json())
    assert back == topo
    assert back.graph == topo.graph
    doc = json.loads(topo.to_json())
    assert set(doc) == {"cells", "channels", "interference_radius_m", "region"}


def test_malformed_document():
    with pytest.raises(ConfigurationError):
        NetworkTopology.from_dict({"cells": [{"id": 0}], "channels": [], "region": [1, 1]})


def test_position_outside_region():
    with pytest.raises(ConfigurationError, match="outside"):
        make_topology([(150, 10)], region=(100, 100))


def test_subgraph_keeps_only_listed_edges():
    topo = make_topology([(0, 0), (10, 0), (20, 0)], interference_radius=30)
    sub = topo.subgraph_topology({(0, 1)})
    assert sub.edges() == [(0, 1)]
    assert topo.edges() == [(0, 1), (0, 2), (1, 2)]


def test_fixture_loads():
    topo = load_fixture("fig6_topology")
    assert topo.n_cells == 8
    assert (4, 5) in topo.edges()


def test_sap_user_topology_counts():
    classes = [TRAFFIC_PRESETS[k] for k in ("skype-group", "skype-hd", "skype-general")]
    su = generate_sap_user_topology(0, classes=classes)
    assert len(su.saps) == 12
    assert len(su.fixed_users) == 78
    assert len(su.flexible_users) == 20
    for u in su.flexible_users:
        assert len(u.candidate_saps) == 2
    assert generate_sap_user_topology(0, classes=classes) == su
