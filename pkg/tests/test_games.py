import math

import numpy as np
import pytest

from cscgame.errors import ConfigurationError
from cscgame.gamecore import best_response, enumerate_pure_ne, is_pure_ne
from cscgame.games import (
    AssociationGameSpec,
    SpectrumAccessGameSpec,
    build_association_game,
    build_hierarchical_stages,
    build_spectrum_game,
    cluster_topology,
    robust_spectrum_game,
)
from cscgame.netmodel import Sap, SapUserTopology, User, generate_topology, load_fixture, make_topology
from cscgame.utility import TRAFFIC_PRESETS

from conftest import brute_force_ne

SQ3 = math.sqrt(3)


# spectrum access


def test_isolated_cell_gets_noise_limited_rate():
    topo = make_topology([(50, 50)], channels=2)
    g = build_spectrum_game(SpectrumAccessGameSpec(topo, "none"))
    snr = 10 ** ((20 - 35) / 10) / 1e-10
    assert g.utility(0, (1,)) == pytest.approx(math.log2(1 + snr), rel=1e-12)


def test_robust_with_full_activity_equals_static(rng):
    topo = generate_topology(4, 7, region=(60, 60), channels=3)
    robust = build_spectrum_game(SpectrumAccessGameSpec(topo, "none", robust=True))
    static = build_spectrum_game(SpectrumAccessGameSpec(topo, "none"))
    for _ in range(50):
        p = robust.random_profile(rng)
        for n in range(7):
            assert robust.utility(n, p) == pytest.approx(static.utility(n, p), rel=1e-12)


def test_expected_rate_on_three_cell_clique():
    # equilateral triangle of side 10 m, every pair interferes; value from a hand enumeration of 4 states
    topo = make_topology([(0, 0), (10, 0), (5, 5 * SQ3)], channels=2, active_prob=0.5)
    g = build_spectrum_game(SpectrumAccessGameSpec(topo, "none", robust=True, scope="own"))
    assert g.utility(0, (0, 0, 0)) == pytest.approx(3.852668913312921, rel=1e-12)
    # leaving the shared channel can only help
    assert g.utility(0, (1, 0, 0)) > g.utility(0, (0, 0, 0))


def test_local_scope_adds_neighbour_payoffs(rng):
    topo = generate_topology(4, 7, region=(60, 60), channels=3, active_prob=0.6)
    g = robust_spectrum_game(topo)
    for _ in range(20):
        p = g.random_profile(rng)
        for n in range(7):
            expect = g.payoff(n, p) + sum(g.payoff(j, p) for j in topo.graph[n])
            assert g.utility(n, p) == pytest.approx(expect, rel=1e-12)


def test_realize_mean_matches_expectation():
    topo = make_topology([(0, 0), (10, 0), (5, 5 * SQ3)], channels=2, active_prob=0.5)
    g = build_spectrum_game(SpectrumAccessGameSpec(topo, "none", robust=True, scope="own"))
    rng = np.random.default_rng(3)
    draws = np.array([g.realize((0, 0, 0), rng)[0] for _ in range(40_000)])
    assert abs(draws.mean() - 3.852668913312921) < 4 * draws.std() / math.sqrt(len(draws))


def test_monte_carlo_fallback_close_to_exact():
    pos = [(50 + 5 * math.cos(t), 50 + 5 * math.sin(t)) for t in np.linspace(0, 2 * math.pi, 7)[:-1]]
    topo = make_topology(pos, channels=1, active_prob=0.5)
    exact = build_spectrum_game(SpectrumAccessGameSpec(topo, "none", robust=True))
    mc = build_spectrum_game(SpectrumAccessGameSpec(topo, "none", robust=True, exact_limit=2, mc_samples=20_000))
    p = (0,) * 6
    assert mc.utility(0, p) == pytest.approx(exact.utility(0, p), abs=4 * max(mc.mc_stderr.values()))


def test_missing_traffic_is_configuration_error():
    topo = generate_topology(0, 3)
    with pytest.raises(ConfigurationError, match="traffic"):
        SpectrumAccessGameSpec(topo, "linear")
    with pytest.raises(ConfigurationError):
        SpectrumAccessGameSpec(topo, "linear", traffic=(TRAFFIC_PRESETS["g711"],))


def test_satisfaction_utilities_bounded(rng):
    topo = generate_topology(2, 6, channels=3)
    traffic = tuple(TRAFFIC_PRESETS["wmv"] for _ in range(6))
    for kind in ("linear", "sigmoid", "concave"):
        g = build_spectrum_game(SpectrumAccessGameSpec(topo, kind, traffic=traffic))
        for _ in range(10):
            u = g.utilities(g.random_profile(rng))
            assert np.all((u >= 0) & (u <= 1))


# user association


def _assoc(saps, users, kind):
    return build_association_game(AssociationGameSpec(SapUserTopology(tuple(saps), tuple(users)), kind))


def test_lone_user_tie_picks_lowest_sap():
    tc = TRAFFIC_PRESETS["skype-hd"]
    g = _assoc([Sap(0, 5e6), Sap(1, 5e6)], [User(0, tc, (0, 1))], "discrete_qoe")
    assert best_response(g, (1,), 0) == 0
    assert g.rate(0, (0,)) == 5e6


def test_same_qoe_level_is_indifferent():
    # flexible user sees 600 kbps on SAP 0 (shared) or 900 kbps on SAP 1: both Poor
    tc = TRAFFIC_PRESETS["skype-group"]
    users = [User(0, tc, (0,)), User(1, tc, (0, 1))]
    saps = [Sap(0, 1.2e6), Sap(1, 0.9e6)]
    discrete = _assoc(saps, users, "discrete_qoe")
    assert discrete.rate(0, (0,)) == 6e5 and discrete.rate(0, (1,)) == 9e5
    assert discrete.utility(0, (0,)) == discrete.utility(0, (1,))
    raw = _assoc(saps, users, "raw_throughput_max")
    assert raw.utility(0, (1,)) > raw.utility(0, (0,))
    cont = _assoc(saps, users, "continuous_throughput")
    assert cont.utility(0, (1,)) > cont.utility(0, (0,))


def test_equal_split_recount():
    tc = TRAFFIC_PRESETS["skype-general"]
    users = [User(i, tc, (0, 1)) for i in range(5)]
    g = _assoc([Sap(0, 3e6), Sap(1, 2e6)], users, "raw_throughput_max")
    p = (0, 1, 0, 0, 1)
    assert [g.rate(i, p) for i in range(5)] == [1e6, 1e6, 1e6, 1e6, 1e6]
    p = (1, 1, 1, 1, 0)
    assert g.rate(4, p) == 3e6
    assert g.rate(0, p) == 0.5e6
    assert list(g.user_rates(p)) == [0.5e6] * 4 + [3e6]


def test_continuous_equilibria_are_discrete_equilibria():
    rng = np.random.default_rng(8)
    classes = [TRAFFIC_PRESETS[k] for k in ("skype-group", "skype-hd", "skype-general")]
    for _ in range(10):
        saps = [Sap(s, float(rng.uniform(2e6, 8e6))) for s in range(3)]
        users = []
        for u in range(8):
            fixed = rng.random() < 0.4
            cands = (int(rng.integers(3)),) if fixed else tuple(sorted(rng.choice(3, 2, replace=False).tolist()))
            users.append(User(u, classes[int(rng.integers(3))], cands))
        cont = _assoc(saps, users, "continuous_throughput")
        disc = _assoc(saps, users, "discrete_qoe")
        ne_c = set(enumerate_pure_ne(cont))
        assert ne_c == brute_force_ne(cont)
        assert ne_c <= set(enumerate_pure_ne(disc))


def test_user_levels_cover_all_users():
    tc = TRAFFIC_PRESETS["skype-hd"]
    g = _assoc([Sap(0, 3e6)], [User(0, tc, (0,)), User(1, tc, (0,))], "discrete_qoe")
    assert len(g.user_levels(())) == 2


# clustering


def test_edgeless_topology_gives_singletons():
    topo = make_topology([(10, 10), (50, 50), (90, 90)])
    cs = cluster_topology(topo)
    assert sorted(map(sorted, cs.clusters)) == [[0], [1], [2]]
    cs.check(topo)


def test_star_hub_is_header():
    topo = make_topology([(50, 50), (30, 50), (70, 50), (50, 30), (50, 70)], interference_radius=25)
    cs = cluster_topology(topo)
    assert cs.headers == (0,)
    assert cs.clusters == (frozenset(range(5)),)


def test_fixture_clusters():
    topo = load_fixture("fig6_topology")
    cs = cluster_topology(topo)
    cs.check(topo)
    assert cs.headers == (2, 5)
    assert cs.clusters == (frozenset({0, 1, 2, 3, 4}), frozenset({5, 6, 7}))


@pytest.mark.parametrize("seed", range(10))
def test_clusters_partition_random_topologies(seed):
    topo = generate_topology(seed, 30, region=(150, 150), interference_radius=30)
    cluster_topology(topo).check(topo)


# hierarchical stages


def test_singleton_clusters_reduce_to_flat_game(rng):
    topo = make_topology([(10, 10), (50, 50), (90, 90)], channels=3)
    spec = SpectrumAccessGameSpec(topo, "none")
    plan = build_hierarchical_stages(topo, spec, cluster_topology(topo))
    hg = plan.header_game((0, 0, 0))
    flat = plan.full_game
    for _ in range(10):
        p = flat.random_profile(rng)
        hp = tuple(p[h] for h in plan.clusters.headers)
        assert hg.lift(hp) == tuple(p)
        for k, h in enumerate(plan.clusters.headers):
            assert hg.utility(k, hp) == flat.utility(h, p)
    assert plan.member_games((0, 1, 2)) == []
    assert plan.residual_conflicts((0, 0, 0)) == []


def test_disconnected_cliques_have_no_stage3():
    pos = [(10, 10), (15, 10), (12, 14), (80, 80), (85, 80), (82, 84)]
    topo = make_topology(pos, channels=3)
    plan = build_hierarchical_stages(topo, SpectrumAccessGameSpec(topo, "none"), cluster_topology(topo))
    assert len(plan.clusters.clusters) == 2
    assert plan.inter_edges == []
    assert plan.residual_conflicts((0,) * 6) == []


def test_member_games_bar_header_channel():
    topo = load_fixture("fig6_topology")
    plan = build_hierarchical_stages(topo, SpectrumAccessGameSpec(topo, "none"), cluster_topology(topo))
    games = plan.member_games((1, 2))
    assert [g.cells for g in games] == [[0, 1, 2, 3, 4], [5, 6, 7]]
    assert games[0].action_sets[2] == (1,)
    assert games[0].action_sets[0] == (0, 2)
    assert games[1].action_sets[0] == (2,)
    assert games[1].action_sets[1] == (0, 1)


def test_stage3_learners_are_conflicting_cut_edges(rng):
    topo = generate_topology(11, 20, region=(100, 100), interference_radius=30, channels=3)
    plan = build_hierarchical_stages(topo, SpectrumAccessGameSpec(topo, "none"), cluster_topology(topo))
    owner = {m: k for k, c in enumerate(plan.clusters.clusters) for m in c}
    cut = sorted((i, j) for i in range(20) for j in topo.graph[i] if i < j and owner[i] != owner[j])
    assert cut, "instance should have inter-cluster edges"
    for _ in range(20):
        p = plan.full_game.random_profile(rng)
        expect = [(i, j) for i, j in cut if p[i] == p[j]]
        assert plan.residual_conflicts(p) == expect
        g3 = plan.stage3_game(p)
        learners = {c for e in expect for c in e}
        assert {n for n in range(20) if g3.sizes[n] > 1} == learners


def test_member_game_equilibria(rng):
    topo = load_fixture("fig6_topology").with_active_prob(0.7)
    spec = SpectrumAccessGameSpec(topo, "none", robust=True, scope="local")
    plan = build_hierarchical_stages(topo, spec, cluster_topology(topo))
    for mg in plan.member_games((0, 1)):
        ne = enumerate_pure_ne(mg)
        assert ne and set(ne) == brute_force_ne(mg)
        assert all(is_pure_ne(mg, p) for p in ne)
