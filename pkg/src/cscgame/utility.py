"""Scalar utility primitives: satisfaction curves, link budget, QoE levels."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_NOISE_DBM = -100.0
DEFAULT_PATHLOSS_EXPONENT = 3.5
DEFAULT_LINK_DISTANCE_M = 10.0


@dataclass(frozen=True)
class TrafficClass:
    name: str
    demand_bps: float
    r_min_bps: float
    r_rec_bps: float
    sigmoid_slope: float | None = None
    concave_alpha: float = 2.0

    def __post_init__(self):
        if self.demand_bps <= 0 or self.r_min_bps <= 0 or self.r_rec_bps <= 0:
            raise ConfigurationError(f"traffic class {self.name!r}: rates must be positive")
        if self.r_min_bps > self.r_rec_bps:
            raise ConfigurationError(f"traffic class {self.name!r}: r_min_bps exceeds r_rec_bps")
        if self.concave_alpha <= 0:
            raise ConfigurationError(f"traffic class {self.name!r}: concave_alpha must be positive")
        if self.sigmoid_slope is None:
            object.__setattr__(self, "sigmoid_slope", 10.0 / self.demand_bps)
        elif self.sigmoid_slope <= 0:
            raise ConfigurationError(f"traffic class {self.name!r}: sigmoid_slope must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrafficClass":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(f"malformed traffic class: {exc}") from exc


def _skype(name, r_min, r_rec):
    return TrafficClass(name, demand_bps=r_rec, r_min_bps=r_min, r_rec_bps=r_rec)


def _codec(name, demand):
    return TrafficClass(name, demand_bps=demand, r_min_bps=demand / 2, r_rec_bps=demand)


# Skype video-calling classes; codec entries are demand stand-ins.
TRAFFIC_PRESETS: dict[str, TrafficClass] = {
    "skype-group": _skype("skype-group", 512e3, 2e6),
    "skype-hd": _skype("skype-hd", 1.2e6, 1.5e6),
    "skype-general": _skype("skype-general", 128e3, 500e3),
    "g711": _codec("g711", 64e3),
    "wmv": _codec("wmv", 500e3),
    "avi-rm": _codec("avi-rm", 1e6),
    "flash": _codec("flash", 700e3),
    "h264": _codec("h264", 2e6),
}


def load_traffic_catalog(path) -> dict[str, TrafficClass]:
    with open(path) as fh:
        doc = json.load(fh)
    return {name: TrafficClass.from_dict({"name": name, **spec}) for name, spec in doc.items()}


class QoeLevel(enum.IntEnum):
    BAD = 1
    POOR = 2
    FAIR = 3
    GOOD = 4
    EXCELLENT = 5

    @property
    def label(self) -> str:
        return self.name.capitalize()


# --- satisfaction -------------------------------------------------------------


def satisfaction_linear(r: float, d: float) -> float:
    if d <= 0:
        raise DomainError("demand must be positive")
    if r < 0:
        raise DomainError("rate must be non-negative")
    return r / d if r <= d else 1.0


def satisfaction_sigmoid(r: float, d: float, c: float) -> float:
    if c <= 0:
        raise DomainError("sigmoid slope must be positive")
    z = -c * (r - d)
    if z > 700:  # exp overflow
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def satisfaction_concave(r: float, d: float, alpha: float) -> float:
    """(2*sqrt(r*d)/(r+d))**alpha; peaks at r == d and is symmetric in log(r/d)."""
    if d <= 0:
        raise DomainError("demand must be positive")
    if r < 0:
        raise DomainError("rate must be non-negative")
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    if r == 0:
        return 0.0
    return min(1.0, 2.0 * math.sqrt(r * d) / (r + d)) ** alpha


SATISFACTION_KINDS = ("linear", "sigmoid", "concave")


def satisfaction(kind: str, r: float, tc: TrafficClass) -> float:
    if kind == "linear":
        return satisfaction_linear(r, tc.demand_bps)
    if kind == "sigmoid":
        return satisfaction_sigmoid(r, tc.demand_bps, tc.sigmoid_slope)
    if kind == "concave":
        return satisfaction_concave(r, tc.demand_bps, tc.concave_alpha)
    raise ConfigurationError(f"unknown satisfaction kind {kind!r}")


def satisfaction_array(kind: str, r: np.ndarray, d: np.ndarray, c: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Vectorized satisfaction over per-cell rates; matches the scalar forms."""
    r = np.asarray(r, dtype=float)
    if kind == "linear":
        return np.minimum(r / d, 1.0)
    if kind == "sigmoid":
        z = np.clip(-c * (r - d), None, 700.0)
        return 1.0 / (1.0 + np.exp(z))
    if kind == "concave":
        with np.errstate(divide="ignore", invalid="ignore"):
            base = np.where(r > 0, 2.0 * np.sqrt(r * d) / (r + d), 0.0)
        return np.minimum(base, 1.0) ** alpha
    if kind == "none":
        return r
    raise ConfigurationError(f"unknown satisfaction kind {kind!r}")


# --- link budget --------------------------------------------------------------


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def received_power_dbm(tx_dbm: float, distance_m: float, pathloss_exponent: float = DEFAULT_PATHLOSS_EXPONENT) -> float:
    return tx_dbm - 10.0 * pathloss_exponent * math.log10(max(distance_m, 1.0))


def sinr(
    topo,
    profile,
    active,
    cell: int,
    noise_dbm: float = DEFAULT_NOISE_DBM,
    pathloss_exponent: float = DEFAULT_PATHLOSS_EXPONENT,
    link_distance_m: float = DEFAULT_LINK_DISTANCE_M,
) -> float:
    """Linear SINR of ``cell`` with interference from active co-channel graph neighbours.

    The served user sits ``link_distance_m`` from its cell; interferer distance is
    approximated by the cell-to-cell distance.
    """
    if cell not in active:
        raise DomainError(f"cell {cell} is not active")
    me = topo.cells[cell]
    signal = 10.0 ** (received_power_dbm(me.tx_power_dbm, link_distance_m, pathloss_exponent) / 10.0)
    interference = 0.0
    for j in sorted(topo.graph[cell]):
        if j in active and profile[j] == profile[cell]:
            rx = received_power_dbm(topo.cells[j].tx_power_dbm, topo.distance(j, cell), pathloss_exponent)
            interference += 10.0 ** (rx / 10.0)
    return signal / (10.0 ** (noise_dbm / 10.0) + interference)


def shannon_rate(bandwidth_hz: float, sinr_value: float) -> float:
    if bandwidth_hz <= 0:
        raise DomainError("bandwidth must be positive")
    if sinr_value < 0:
        raise DomainError("sinr must be non-negative")
    return bandwidth_hz * math.log2(1.0 + sinr_value)


# --- QoE ----------------------------------------------------------------------


def mos_score(r: float, tc: TrafficClass) -> float:
    """Continuous opinion score: 2 at r_min, 4 at r_rec, log-linear, clipped to [1, 5]."""
    if r <= 0:
        return 1.0
    span = math.log(tc.r_rec_bps) - math.log(tc.r_min_bps)
    if span == 0.0:
        return 5.0 if r >= tc.r_min_bps else 1.0
    score = 2.0 + 2.0 * (math.log(r) - math.log(tc.r_min_bps)) / span
    return min(5.0, max(1.0, score))


def qoe_thresholds(tc: TrafficClass) -> tuple[float, float, float, float]:
    """Rates at which Poor, Fair, Good and Excellent begin."""
    rm, rc = tc.r_min_bps, tc.r_rec_bps
    return (rm, math.sqrt(rm * rc), rc, rc * math.sqrt(rc / rm))


def qoe_level(r: float, tc: TrafficClass) -> QoeLevel:
    if r < 0:
        raise DomainError("rate must be non-negative")
    return QoeLevel(1 + sum(r >= t for t in qoe_thresholds(tc)))


def qoe_histogram_of(levels: Iterable[QoeLevel]) -> dict[QoeLevel, int]:
    counts = {lv: 0 for lv in QoeLevel}
    for lv in levels:
        counts[QoeLevel(lv)] += 1
    return counts
