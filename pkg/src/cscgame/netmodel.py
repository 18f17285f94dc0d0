"""Small-cell deployments and their interference graphs."""

from __future__ import annotations

import json
import math
from importlib import resources
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Cell:
    id: int
    position: tuple[float, float]
    tx_power_dbm: float = 20.0
    active_prob: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.active_prob <= 1.0:
            raise ConfigurationError(
                f"cells[{self.id}].active_prob must lie in (0, 1], got {self.active_prob}"
            )


@dataclass(frozen=True)
class Channel:
    id: int
    bandwidth_hz: float

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ConfigurationError(
                f"channels[{self.id}].bandwidth_hz must be positive, got {self.bandwidth_hz}"
            )


def _disk_graph(positions: np.ndarray, radius: float) -> tuple[frozenset[int], ...]:
    n = len(positions)
    adj = [set() for _ in range(n)]
    for i in range(n):
        d = np.hypot(*(positions[i + 1:] - positions[i]).T)
        for k in np.flatnonzero(d < radius):
            j = i + 1 + int(k)
            adj[i].add(j)
            adj[j].add(i)
    return tuple(frozenset(s) for s in adj)


@dataclass(frozen=True)
class NetworkTopology:
    """Immutable deployment: cells, channels and the disk interference graph.

    Two cells are potential interferers when their distance is strictly below
    ``interference_radius_m``; they actually interfere only when they also share
    a channel, which is decided per action profile by the games.
    """

    cells: tuple[Cell, ...]
    region: tuple[float, float]
    channels: tuple[Channel, ...]
    interference_radius_m: float
    graph: tuple[frozenset[int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.cells:
            raise ConfigurationError("cells: at least one cell is required")
        if not self.channels:
            raise ConfigurationError("channels: at least one channel is required")
        if self.interference_radius_m <= 0:
            raise ConfigurationError("interference_radius_m must be positive")
        w, h = self.region
        for k, c in enumerate(self.cells):
            if c.id != k:
                raise ConfigurationError(f"cells[{k}].id must equal its index")
            x, y = c.position
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise ConfigurationError(f"cells[{k}].position lies outside the region")
        object.__setattr__(
            self, "graph", _disk_graph(self.positions, self.interference_radius_m)
        )

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cells], dtype=float)

    @cached_property
    def active_probs(self) -> np.ndarray:
        return np.array([c.active_prob for c in self.cells], dtype=float)

    @cached_property
    def bandwidths(self) -> np.ndarray:
        return np.array([ch.bandwidth_hz for ch in self.channels], dtype=float)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_cells, self.n_cells), dtype=bool)
        for i, nb in enumerate(self.graph):
            a[i, list(nb)] = True
        return a

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.graph) for j in sorted(nb) if i < j]

    def distance(self, i: int, j: int) -> float:
        return float(math.dist(self.cells[i].position, self.cells[j].position))

    def with_active_prob(self, active_prob: float | Sequence[float]) -> "NetworkTopology":
        probs = _broadcast(active_prob, self.n_cells, "active_prob")
        cells = tuple(
            Cell(c.id, c.position, c.tx_power_dbm, float(p)) for c, p in zip(self.cells, probs)
        )
        return NetworkTopology(cells, self.region, self.channels, self.interference_radius_m)

    def subgraph_topology(self, keep_edges: set[tuple[int, int]]) -> "NetworkTopology":
        """Copy of this topology whose graph retains only ``keep_edges``."""
        topo = NetworkTopology(self.cells, self.region, self.channels, self.interference_radius_m)
        graph = tuple(
            frozenset(j for j in nb if (min(i, j), max(i, j)) in keep_edges)
            for i, nb in enumerate(self.graph)
        )
        object.__setattr__(topo, "graph", graph)
        return topo

    def to_dict(self) -> dict:
        return {
            "region": list(self.region),
            "interference_radius_m": self.interference_radius_m,
            "channels": [{"id": ch.id, "bandwidth_hz": ch.bandwidth_hz} for ch in self.channels],
            "cells": [
                {
                    "id": c.id,
                    "x": c.position[0],
                    "y": c.position[1],
                    "tx_power_dbm": c.tx_power_dbm,
                    "active_prob": c.active_prob,
                }
                for c in self.cells
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkTopology":
        try:
            cells = tuple(
                Cell(
                    int(c["id"]),
                    (float(c["x"]), float(c["y"])),
                    float(c.get("tx_power_dbm", 20.0)),
                    float(c.get("active_prob", 1.0)),
                )
                for c in doc["cells"]
            )
            channels = tuple(
                Channel(int(ch["id"]), float(ch["bandwidth_hz"])) for ch in doc["channels"]
            )
            region = (float(doc["region"][0]), float(doc["region"][1]))
            radius = float(doc["interference_radius_m"])
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigurationError(f"malformed topology document: {exc!r}") from exc
        return cls(cells, region, channels, radius)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkTopology":
        return cls.from_dict(json.loads(text))


def _broadcast(value, n: int, name: str) -> list[float]:
    if np.isscalar(value):
        return [float(value)] * n
    vals = [float(v) for v in value]
    if len(vals) != n:
        raise ConfigurationError(f"{name}: expected {n} values, got {len(vals)}")
    return vals


def make_topology(
    positions,
    region=(100.0, 100.0),
    interference_radius: float = 30.0,
    channels: int = 2,
    active_prob=1.0,
    bandwidth_hz=1e6,
    tx_power_dbm=20.0,
) -> NetworkTopology:
    """Topology from explicit cell positions (fixtures, hand-built cases)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    if channels < 1:
        raise ConfigurationError("channels must be at least 1")
    probs = _broadcast(active_prob, n, "active_prob")
    powers = _broadcast(tx_power_dbm, n, "tx_power_dbm")
    bws = _broadcast(bandwidth_hz, channels, "bandwidth_hz")
    cells = tuple(
        Cell(i, (float(positions[i, 0]), float(positions[i, 1])), powers[i], probs[i])
        for i in range(n)
    )
    chans = tuple(Channel(k, bws[k]) for k in range(channels))
    return NetworkTopology(cells, (float(region[0]), float(region[1])), chans, float(interference_radius))


def generate_topology(
    seed: int,
    n_cells: int,
    region=(100.0, 100.0),
    interference_radius: float = 30.0,
    channels: int = 2,
    active_prob=1.0,
    bandwidth_hz=1e6,
    tx_power_dbm=20.0,
) -> NetworkTopology:
    """Drop ``n_cells`` uniformly at random in ``region`` using ``seed``."""
    if n_cells < 1:
        raise ConfigurationError("n_cells must be at least 1")
    if interference_radius <= 0:
        raise ConfigurationError("interference_radius must be positive")
    if channels < 1:
        raise ConfigurationError("channels must be at least 1")
    rng = np.random.default_rng(seed)
    w, h = float(region[0]), float(region[1])
    positions = rng.uniform(0.0, 1.0, size=(n_cells, 2)) * np.array([w, h])
    return make_topology(
        positions, (w, h), interference_radius, channels, active_prob, bandwidth_hz, tx_power_dbm
    )


def load_fixture(name: str) -> NetworkTopology:
    """A topology shipped under ``cscgame/data`` (e.g. ``"fig6_topology"``)."""
    text = resources.files("cscgame").joinpath("data", f"{name}.json").read_text()
    return NetworkTopology.from_json(text)


def neighbors(topo: NetworkTopology, cell: int) -> frozenset[int]:
    if not 0 <= cell < topo.n_cells:
        raise KeyError(f"unknown cell id {cell}")
    return topo.graph[cell]


def sample_active_set(topo: NetworkTopology, rng: np.random.Generator) -> frozenset[int]:
    """Independent Bernoulli(active_prob) draw per cell."""
    draw = rng.random(topo.n_cells) < topo.active_probs
    return frozenset(int(i) for i in np.flatnonzero(draw))


# --- SAP / user association topologies ---------------------------------------


@dataclass(frozen=True)
class Sap:
    id: int
    capacity_bps: float
    position: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class User:
    id: int
    traffic_class: "TrafficClass"  # noqa: F821
    candidate_saps: tuple[int, ...]

    def __post_init__(self):
        if not self.candidate_saps:
            raise ConfigurationError(f"users[{self.id}].candidate_saps must be non-empty")

    @property
    def fixed(self) -> bool:
        return len(self.candidate_saps) == 1


@dataclass(frozen=True)
class SapUserTopology:
    saps: tuple[Sap, ...]
    users: tuple[User, ...]

    def __post_init__(self):
        ids = {s.id for s in self.saps}
        for u in self.users:
            bad = set(u.candidate_saps) - ids
            if bad:
                raise ConfigurationError(f"users[{u.id}].candidate_saps references unknown SAPs {sorted(bad)}")

    @property
    def fixed_users(self) -> list[User]:
        return [u for u in self.users if u.fixed]

    @property
    def flexible_users(self) -> list[User]:
        return [u for u in self.users if not u.fixed]


def generate_sap_user_topology(
    seed: int,
    grid=(4, 3),
    region=(100.0, 100.0),
    capacity_bps: float = 10e6,
    n_fixed: int = 78,
    n_flexible: int = 20,
    classes: Sequence = (),
) -> SapUserTopology:
    """SAPs on a regular grid; fixed users attached to one SAP, flexible users
    sitting in the overlap of two grid-adjacent SAPs. Classes drawn equiprobably."""
    if not classes:
        raise ConfigurationError("classes: at least one traffic class is required")
    rng = np.random.default_rng(seed)
    gx, gy = grid
    w, h = region
    saps = tuple(
        Sap(k, float(capacity_bps), ((k % gx + 0.5) * w / gx, (k // gx + 0.5) * h / gy))
        for k in range(gx * gy)
    )
    pairs = []
    for k in range(gx * gy):
        if k % gx + 1 < gx:
            pairs.append((k, k + 1))
        if k + gx < gx * gy:
            pairs.append((k, k + gx))
    users = []
    for u in range(n_fixed + n_flexible):
        tc = classes[int(rng.integers(len(classes)))]
        if u < n_fixed:
            cand = (int(rng.integers(len(saps))),)
        else:
            cand = pairs[int(rng.integers(len(pairs)))]
        users.append(User(u, tc, cand))
    return SapUserTopology(saps, tuple(users))
