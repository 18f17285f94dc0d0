"""Concrete games: spectrum access (demand-aware / robust), user association,
and the cluster-based hierarchical decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .gamecore import DETERMINISTIC_TOL, EXPECTATION_TOL, Game, restrict
from .netmodel import NetworkTopology, SapUserTopology
from .utility import (
    DEFAULT_LINK_DISTANCE_M,
    DEFAULT_NOISE_DBM,
    DEFAULT_PATHLOSS_EXPONENT,
    TrafficClass,
    dbm_to_mw,
    mos_score,
    qoe_level,
    received_power_dbm,
    satisfaction_array,
)

SPECTRUM_KINDS = ("linear", "sigmoid", "concave", "none")
ASSOCIATION_KINDS = ("discrete_qoe", "continuous_throughput", "raw_throughput_max")


# --- spectrum access ----------------------------------------------------------


@dataclass(frozen=True)
class SpectrumAccessGameSpec:
    """Channel-selection game over a topology.

    ``scope="own"``: a cell's utility is its own (expected) satisfaction or rate.
    ``scope="local"``: the cell maximizes the sum over its closed neighbourhood,
    which makes the game an exact potential game whose potential is the network
    total; this is the scope used for the robust game.
    """

    topo: NetworkTopology
    satisfaction_kind: str = "none"
    traffic: tuple[TrafficClass, ...] | None = None
    robust: bool = False
    scope: str = "own"
    noise_dbm: float = DEFAULT_NOISE_DBM
    pathloss_exponent: float = DEFAULT_PATHLOSS_EXPONENT
    link_distance_m: float = DEFAULT_LINK_DISTANCE_M
    rate_unit_bps: float = 1e6
    exact_limit: int = 20
    mc_samples: int = 4096
    mc_seed: int = 0

    def __post_init__(self):
        if self.satisfaction_kind not in SPECTRUM_KINDS:
            raise ConfigurationError(f"satisfaction_kind must be one of {SPECTRUM_KINDS}")
        if self.scope not in ("own", "local"):
            raise ConfigurationError("scope must be 'own' or 'local'")
        if self.satisfaction_kind != "none":
            if self.traffic is None:
                raise ConfigurationError("traffic: a traffic class per cell is required for satisfaction utilities")
            if len(self.traffic) != self.topo.n_cells:
                raise ConfigurationError(
                    f"traffic: expected {self.topo.n_cells} classes, got {len(self.traffic)}"
                )


class RadioModel:
    """Per-cell signal power and pairwise interference gains (mW) on graph edges."""

    def __init__(self, topo: NetworkTopology, noise_dbm, pathloss_exponent, link_distance_m):
        n = topo.n_cells
        self.signal = np.array(
            [
                received_power_dbm(c.tx_power_dbm, link_distance_m, pathloss_exponent)
                for c in topo.cells
            ]
        )
        self.signal = dbm_to_mw(self.signal)
        self.noise = float(dbm_to_mw(noise_dbm))
        self.gain = np.zeros((n, n))
        for i in range(n):
            for j in topo.graph[i]:
                rx = received_power_dbm(topo.cells[j].tx_power_dbm, topo.distance(i, j), pathloss_exponent)
                self.gain[i, j] = 10.0 ** (rx / 10.0)
        self.bandwidths = topo.bandwidths

    def rates(self, channels: np.ndarray, active: np.ndarray) -> np.ndarray:
        co = channels[:, None] == channels[None, :]
        interference = (self.gain * co) @ active.astype(float)
        r = self.bandwidths[channels] * np.log2(1.0 + self.signal / (self.noise + interference))
        return np.where(active, r, 0.0)


class SpectrumGame(Game):
    def __init__(self, spec: SpectrumAccessGameSpec):
        self.spec = spec
        topo = spec.topo
        self.topo = topo
        self.radio = RadioModel(topo, spec.noise_dbm, spec.pathloss_exponent, spec.link_distance_m)
        self.kind = spec.satisfaction_kind
        if spec.traffic is not None:
            self._d = np.array([t.demand_bps for t in spec.traffic])
            self._c = np.array([t.sigmoid_slope for t in spec.traffic])
            self._alpha = np.array([t.concave_alpha for t in spec.traffic])
        else:
            self._d = self._c = self._alpha = np.ones(topo.n_cells)
        self._lam = topo.active_probs if spec.robust else np.ones(topo.n_cells)
        self._nbrs = [sorted(nb) for nb in topo.graph]
        self._cache: dict = {}
        self.mc_stderr: dict = {}
        self._adj = topo.adjacency.astype(float)

        if spec.scope == "own":
            deps = list(topo.graph)
        else:
            deps = []
            for i, nb in enumerate(topo.graph):
                two_hop = set(nb)
                for j in nb:
                    two_hop |= topo.graph[j]
                two_hop.discard(i)
                deps.append(frozenset(two_hop))

        own_bound = np.array([self._own_bound(i) for i in range(topo.n_cells)])
        bound = own_bound if spec.scope == "own" else own_bound + self._adj @ own_bound
        self.own_bound = own_bound
        super().__init__(
            [tuple(ch.id for ch in topo.channels)] * topo.n_cells,
            self._utility_of,
            neighbor_sets=deps,
            payoff=self._own_payoff,
            realize=self._realize,
            payoff_bound=bound,
            ne_tolerance=EXPECTATION_TOL if spec.robust else DETERMINISTIC_TOL,
            name=f"spectrum[{self.kind},{'robust' if spec.robust else 'static'},{spec.scope}]",
        )

    # values of the per-cell transform applied to a rate in bps
    def _transform(self, cell: int, rates: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.asarray(rates, dtype=float) / self.spec.rate_unit_bps
        return satisfaction_array(self.kind, rates, self._d[cell], self._c[cell], self._alpha[cell])

    def _own_bound(self, cell: int) -> float:
        if self.kind != "none":
            return 1.0
        best = self.radio.bandwidths.max() * math.log2(1.0 + self.radio.signal[cell] / self.radio.noise)
        return best / self.spec.rate_unit_bps

    def _expected_own(self, cell: int, channel: int, co: tuple[int, ...]) -> float:
        key = (cell, channel, co)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        k = len(co)
        bw = self.radio.bandwidths[channel]
        sig, noise = self.radio.signal[cell], self.radio.noise
        g = self.radio.gain[cell, list(co)] if k else np.zeros(0)
        lam_n = self._lam[cell]
        if k <= self.spec.exact_limit:
            m = 1 << k
            ids = np.arange(m)
            interference = np.zeros(m)
            prob = np.ones(m)
            for col in range(k):
                on = ((ids >> col) & 1).astype(bool)
                interference += np.where(on, g[col], 0.0)
                lj = self._lam[co[col]]
                prob *= np.where(on, lj, 1.0 - lj)
            vals = self._transform(cell, bw * np.log2(1.0 + sig / (noise + interference)))
            value = lam_n * float(prob @ vals)
        else:
            rng = np.random.default_rng([self.spec.mc_seed, cell, channel, hash(co) & 0xFFFFFFFF])
            lam = self._lam[list(co)]
            on = rng.random((self.spec.mc_samples, k)) < lam
            interference = on.astype(float) @ g
            vals = self._transform(cell, bw * np.log2(1.0 + sig / (noise + interference)))
            value = lam_n * float(vals.mean())
            self.mc_stderr[key] = lam_n * float(vals.std(ddof=1) / math.sqrt(len(vals)))
        self._cache[key] = value
        return value

    def _own_payoff(self, cell: int, profile) -> float:
        ch = profile[cell]
        co = tuple(j for j in self._nbrs[cell] if profile[j] == ch)
        return self._expected_own(cell, ch, co)

    def _utility_of(self, cell: int, profile) -> float:
        value = self._own_payoff(cell, profile)
        if self.spec.scope == "local":
            for j in self._nbrs[cell]:
                value = value + self._own_payoff(j, profile)
        return value

    def rates(self, profile, active=None) -> np.ndarray:
        """Instantaneous rates (bps) for a profile and an activity vector (default: all active)."""
        channels = np.asarray(profile, dtype=np.int64)
        if active is None:
            active = np.ones(self.topo.n_cells, dtype=bool)
        return self.radio.rates(channels, np.asarray(active, dtype=bool))

    def realized_own(self, profile, active) -> np.ndarray:
        rates = self.rates(profile, active)
        if self.kind == "none":
            own = rates / self.spec.rate_unit_bps
        else:
            own = satisfaction_array(self.kind, rates, self._d, self._c, self._alpha)
        return np.where(active, own, 0.0)

    def _realize(self, profile, rng) -> np.ndarray:
        if self.spec.robust:
            active = rng.random(self.topo.n_cells) < self._lam
        else:
            active = np.ones(self.topo.n_cells, dtype=bool)
        own = self.realized_own(profile, active)
        if self.spec.scope == "local":
            return own + self._adj @ own
        return own


def build_spectrum_game(spec: SpectrumAccessGameSpec) -> SpectrumGame:
    return SpectrumGame(spec)


def robust_spectrum_game(topo: NetworkTopology, **kwargs) -> SpectrumGame:
    """The robust spectrum-access game: expected Shannon capacity, neighbourhood scope."""
    kwargs.setdefault("scope", "local")
    return SpectrumGame(SpectrumAccessGameSpec(topo, "none", robust=True, **kwargs))


# --- user association ---------------------------------------------------------


@dataclass(frozen=True)
class AssociationGameSpec:
    topo: SapUserTopology
    utility_kind: str = "discrete_qoe"

    def __post_init__(self):
        if self.utility_kind not in ASSOCIATION_KINDS:
            raise ConfigurationError(f"utility_kind must be one of {ASSOCIATION_KINDS}")


class AssociationGame(Game):
    """Flexible users pick a SAP; each SAP's capacity is split equally among
    all users attached to it (fixed users included)."""

    def __init__(self, spec: AssociationGameSpec):
        self.spec = spec
        topo = spec.topo
        self.kind = spec.utility_kind
        self.users = topo.users
        self.flexible = [u for u in topo.users if not u.fixed]
        self.capacity = {s.id: s.capacity_bps for s in topo.saps}
        self.fixed_load = {s.id: 0 for s in topo.saps}
        for u in topo.users:
            if u.fixed:
                self.fixed_load[u.candidate_saps[0]] += 1
        self._cands = [tuple(sorted(u.candidate_saps)) for u in self.flexible]
        self._sharers = {s.id: [] for s in topo.saps}
        for p, cands in enumerate(self._cands):
            for s in cands:
                self._sharers[s].append(p)
        deps = []
        for p, cands in enumerate(self._cands):
            others = set()
            for s in cands:
                others.update(self._sharers[s])
            others.discard(p)
            deps.append(frozenset(others))
        if self.kind == "raw_throughput_max":
            bound = max(self.capacity.values()) / 1e6
        else:
            bound = 5.0
        super().__init__(
            self._cands,
            self._utility_of,
            neighbor_sets=deps,
            payoff_bound=bound,
            name=f"association[{self.kind}]",
        )

    def load(self, sap: int, profile) -> int:
        n = self.fixed_load[sap]
        for q in self._sharers[sap]:
            if self._cands[q][profile[q]] == sap:
                n += 1
        return n

    def rate(self, player: int, profile) -> float:
        sap = self._cands[player][profile[player]]
        return self.capacity[sap] / self.load(sap, profile)

    def value(self, r: float, tc: TrafficClass) -> float:
        if self.kind == "discrete_qoe":
            return float(qoe_level(r, tc))
        if self.kind == "continuous_throughput":
            return mos_score(r, tc)
        return r / 1e6

    def _utility_of(self, player: int, profile) -> float:
        return self.value(self.rate(player, profile), self.flexible[player].traffic_class)

    def user_saps(self, profile) -> list[int]:
        flex_index = {u.id: p for p, u in enumerate(self.flexible)}
        out = []
        for u in self.users:
            if u.fixed:
                out.append(u.candidate_saps[0])
            else:
                p = flex_index[u.id]
                out.append(self._cands[p][profile[p]])
        return out

    def user_rates(self, profile) -> np.ndarray:
        """Rate of every user (fixed and flexible), in user order."""
        saps = self.user_saps(profile)
        load = {s: 0 for s in self.capacity}
        for s in saps:
            load[s] += 1
        return np.array([self.capacity[s] / load[s] for s in saps])

    def user_levels(self, profile) -> list:
        rates = self.user_rates(profile)
        return [qoe_level(r, u.traffic_class) for r, u in zip(rates, self.users)]


def build_association_game(spec: AssociationGameSpec) -> AssociationGame:
    return AssociationGame(spec)


# --- clustering and the hierarchical decomposition ----------------------------


@dataclass(frozen=True)
class ClusterStructure:
    clusters: tuple[frozenset[int], ...]
    headers: tuple[int, ...]

    def cluster_of(self, cell: int) -> int:
        for k, members in enumerate(self.clusters):
            if cell in members:
                return k
        raise KeyError(cell)

    def check(self, topo: NetworkTopology) -> None:
        seen = set()
        for members, h in zip(self.clusters, self.headers):
            if seen & members:
                raise ValueError("clusters overlap")
            seen |= members
            if h not in members:
                raise ValueError(f"header {h} outside its cluster")
            for m in members - {h}:
                if m not in topo.graph[h]:
                    raise ValueError(f"member {m} not adjacent to header {h}")
        if seen != set(range(topo.n_cells)):
            raise ValueError("clusters do not cover every cell")


def cluster_topology(topo: NetworkTopology) -> ClusterStructure:
    """Greedy max-degree clustering: the unassigned cell with most unassigned
    neighbours becomes a header and absorbs those neighbours (ties: lowest id)."""
    unassigned = set(range(topo.n_cells))
    clusters, headers = [], []
    while unassigned:
        h = max(sorted(unassigned), key=lambda c: len(topo.graph[c] & unassigned))
        members = frozenset((topo.graph[h] & unassigned) | {h})
        unassigned -= members
        clusters.append(members)
        headers.append(h)
    return ClusterStructure(tuple(clusters), tuple(headers))


class HeaderGame(Game):
    """Upper layer: headers choose channels for the cluster aggregate while
    members stay at ``base_profile``."""

    def __init__(self, full: SpectrumGame, clusters: ClusterStructure, base_profile):
        self.full = full
        self.clusters = clusters
        self.base = tuple(int(x) for x in base_profile)
        self.members = [sorted(c) for c in clusters.clusters]
        topo = full.topo
        deps = []
        for k, members in enumerate(self.members):
            touched = set()
            for m in members:
                touched |= topo.graph[m] | {m}
            deps.append(frozenset(l for l, h in enumerate(clusters.headers) if h in touched and l != k))
        bound = [sum(full.own_bound[m] for m in members) for members in self.members]
        super().__init__(
            [full.action_sets[h] for h in clusters.headers],
            self._utility_of,
            neighbor_sets=deps,
            realize=self._realize,
            payoff_bound=bound,
            ne_tolerance=full.ne_tolerance,
            name="header-game",
        )

    def lift(self, profile) -> tuple[int, ...]:
        p = list(self.base)
        for h, a in zip(self.clusters.headers, profile):
            p[h] = int(a)
        return tuple(p)

    def _utility_of(self, k: int, profile) -> float:
        full = self.lift(profile)
        total = 0.0
        for m in self.members[k]:
            total = total + self.full.payoff(m, full)
        return total

    def _realize(self, profile, rng) -> np.ndarray:
        full = self.lift(profile)
        if self.full.spec.robust:
            active = rng.random(self.full.topo.n_cells) < self.full._lam
        else:
            active = np.ones(self.full.topo.n_cells, dtype=bool)
        own = self.full.realized_own(full, active)
        return np.array([own[m].sum() for m in self.members])


class HierarchicalPlan:
    """Three-stage decomposition of a spectrum game over a cluster structure.

    Stage 1: headers play ``header_game``. Stage 2: members of every cluster
    play against their own cluster only (``member_games`` / ``stage2_game``),
    barred from the header's channel. Stage 3: cells left in co-channel
    inter-cluster conflicts (``residual_conflicts``) keep learning on the full game.
    """

    def __init__(self, topo: NetworkTopology, spec: SpectrumAccessGameSpec, clusters: ClusterStructure):
        clusters.check(topo)
        self.topo = topo
        self.spec = spec
        self.clusters = clusters
        self.full_game = build_spectrum_game(spec)
        owner = {m: k for k, c in enumerate(clusters.clusters) for m in c}
        self.owner = owner
        edges = topo.edges()
        self.intra_edges = {(i, j) for i, j in edges if owner[i] == owner[j]}
        self.inter_edges = sorted((i, j) for i, j in edges if owner[i] != owner[j])
        self.intra_game = build_spectrum_game(replace(spec, topo=topo.subgraph_topology(self.intra_edges)))

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(range(self.topo.n_channels))

    def header_game(self, base_profile) -> HeaderGame:
        return HeaderGame(self.full_game, self.clusters, base_profile)

    def _member_allowed(self, header_channels) -> dict[int, tuple[int, ...]]:
        allowed = {}
        for members, h, hc in zip(self.clusters.clusters, self.clusters.headers, header_channels):
            options = tuple(c for c in self.channels if c != hc) or (hc,)
            for m in members:
                if m != h:
                    allowed[m] = options
        return allowed

    def _base_with_headers(self, header_channels, base_profile=None) -> list[int]:
        base = [0] * self.topo.n_cells if base_profile is None else [int(x) for x in base_profile]
        for h, hc in zip(self.clusters.headers, header_channels):
            base[h] = int(hc)
        return base

    def stage2_game(self, header_channels, base_profile=None) -> Game:
        """All clusters' member games side by side (no inter-cluster coupling)."""
        base = self._base_with_headers(header_channels, base_profile)
        return restrict(self.intra_game, base, self._member_allowed(header_channels))

    def member_games(self, header_channels) -> list[Game]:
        """One game per cluster with at least one member; players are the cluster
        cells in sorted order, the header frozen on its channel."""
        games = []
        allowed = self._member_allowed(header_channels)
        for members, h, hc in zip(self.clusters.clusters, self.clusters.headers, header_channels):
            if len(members) == 1:
                continue
            cells = sorted(members)
            local = {c: k for k, c in enumerate(cells)}
            sub = self.topo.subgraph_topology(
                {(i, j) for i, j in self.intra_edges if i in members and j in members}
            )
            inner = build_spectrum_game(replace(self.spec, topo=sub))

            options = [allowed.get(c, (hc,)) for c in cells]

            def lift(p, cells=cells, options=options):
                full = [0] * self.topo.n_cells
                for c, opts, a in zip(cells, options, p):
                    full[c] = opts[a]
                return full

            def utility(k, p, cells=cells, inner=inner, lift=lift):
                return inner.utility(cells[k], lift(p))

            def realize(p, rng, cells=cells, inner=inner, lift=lift):
                return inner.realize(lift(p), rng)[cells]

            g = Game(
                options,
                utility,
                neighbor_sets=[frozenset(local[j] for j in inner.neighbor_sets[c] if j in local) for c in cells],
                realize=realize,
                payoff_bound=inner.payoff_bound[cells],
                ne_tolerance=inner.ne_tolerance,
                name=f"members[{h}]",
            )
            g.cells = cells
            g.local = local
            games.append(g)
        return games

    def residual_conflicts(self, profile) -> list[tuple[int, int]]:
        return [(i, j) for i, j in self.inter_edges if profile[i] == profile[j]]

    def stage3_game(self, profile) -> Game:
        learners = sorted({c for e in self.residual_conflicts(profile) for c in e})
        return restrict(self.full_game, profile, {c: self.channels for c in learners})


def build_hierarchical_stages(topo: NetworkTopology, spec: SpectrumAccessGameSpec, clusters: ClusterStructure) -> HierarchicalPlan:
    return HierarchicalPlan(topo, spec, clusters)
