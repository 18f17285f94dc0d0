"""Aggregation of learning runs and exhaustive baselines into reportable figures."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import CapacityError
from .gamecore import DEFAULT_CAP, Game, scan_profiles, welfare_value
from .games import AssociationGame, SpectrumAccessGameSpec, SpectrumGame, build_spectrum_game
from .utility import QoeLevel, qoe_histogram_of

MIN_SEEDS_FOR_CI = 30
SATISFIED_THRESHOLD = 0.95


def _spectrum_game(game_or_spec) -> SpectrumGame:
    if isinstance(game_or_spec, SpectrumAccessGameSpec):
        return build_spectrum_game(game_or_spec)
    return game_or_spec


def _final(record_or_profile) -> tuple[int, ...]:
    profile = getattr(record_or_profile, "final_profile", record_or_profile)
    return tuple(int(a) for a in profile)


def satisfied_ratio(record, game, threshold: float = SATISFIED_THRESHOLD, measure: str = "utility") -> float:
    """Share of cells counted as satisfied at the final profile.

    ``measure="utility"``: the cell's own satisfaction value (under the game's
    satisfaction kind, expected over activity) reaches ``threshold``.
    ``measure="rate"``: its all-active rate reaches ``threshold`` times its
    demand, a yardstick shared by every satisfaction kind.
    """
    game = _spectrum_game(game)
    profile = _final(record)
    n = game.n_players
    if measure == "utility":
        if game.kind == "none":
            raise ValueError("satisfaction measure needs a game with a satisfaction kind")
        ok = [game.payoff(p, profile) >= threshold for p in range(n)]
    elif measure == "rate":
        if game.spec.traffic is None:
            raise ValueError("rate measure needs per-cell traffic demands")
        rates = game.rates(profile)
        demand = np.array([t.demand_bps for t in game.spec.traffic])
        ok = rates >= threshold * demand
    else:
        raise ValueError(f"unknown measure {measure!r}")
    return float(np.count_nonzero(ok)) / n


def qoe_histogram(record, game: AssociationGame) -> dict[QoeLevel, int]:
    """Users (fixed and flexible) per QoE level at the final association."""
    return qoe_histogram_of(game.user_levels(_final(record)))


def good_or_better(hist: dict) -> int:
    return sum(c for lv, c in hist.items() if QoeLevel(lv) >= QoeLevel.GOOD)


def convergence_cdf(records: Sequence) -> list[tuple[int, float]]:
    """Empirical CDF of convergence iterations; non-converged runs count in the
    denominator only, so the curve ends at the converged fraction."""
    if not records:
        raise ValueError("convergence_cdf needs at least one record")
    its = []
    for r in records:
        c = r.converged_at if hasattr(r, "converged_at") else r
        if c is not None:
            its.append(int(c))
    total = len(records)
    values, counts = np.unique(np.array(its, dtype=np.int64), return_counts=True)
    return [(int(v), float(c) / total) for v, c in zip(values, np.cumsum(counts))]


@dataclass
class NeGapReport:
    optimum: float | None
    best_ne: float | None
    worst_ne: float | None
    n_ne: int | None
    learned: list[float] = field(default_factory=list)
    flagged: str | None = None

    @property
    def learned_mean(self) -> float | None:
        return float(np.mean(self.learned)) if self.learned else None

    def gaps(self) -> dict:
        """Relative shortfall against the optimum."""
        if self.optimum is None or self.optimum == 0:
            return {}
        out = {
            "best_ne": 1.0 - self.best_ne / self.optimum,
            "worst_ne": 1.0 - self.worst_ne / self.optimum,
        }
        if self.learned:
            out["learned_mean"] = 1.0 - self.learned_mean / self.optimum
        return out

    def to_dict(self) -> dict:
        return {
            "optimum": self.optimum,
            "best_ne": self.best_ne,
            "worst_ne": self.worst_ne,
            "n_ne": self.n_ne,
            "learned": list(self.learned),
            "learned_mean": self.learned_mean,
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NeGapReport":
        return cls(doc["optimum"], doc["best_ne"], doc["worst_ne"], doc["n_ne"], list(doc["learned"]), doc["flagged"])


def ne_gap_report(game: Game, welfare="sum", learned: Iterable = (), cap: int = DEFAULT_CAP) -> NeGapReport:
    """Optimum, best NE and worst NE from one exhaustive sweep, plus the welfare
    of any learned final profiles (records or profiles)."""
    values = [welfare_value(game, _final(x), welfare) for x in learned]
    try:
        scan = scan_profiles(game, welfare=welfare, cap=cap)
    except CapacityError as exc:
        return NeGapReport(None, None, None, None, values, flagged=str(exc))
    ne = scan.welfare[scan.ne_mask]
    if ne.size == 0:
        return NeGapReport(float(scan.welfare.max()), None, None, 0, values, flagged="no pure NE")
    return NeGapReport(float(scan.welfare.max()), float(ne.max()), float(ne.min()), int(ne.size), values)


# --- seed aggregation ---------------------------------------------------------


@dataclass
class Aggregate:
    n: int
    mean: float
    median: float
    ci_low: float
    ci_high: float
    ci_flag: str | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "ci95": [self.ci_low, self.ci_high],
            "ci_flag": self.ci_flag,
        }


def aggregate(values: Sequence[float], confidence: float = 0.95) -> Aggregate:
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        return Aggregate(0, math.nan, math.nan, math.nan, math.nan, "no samples")
    mean, med = float(x.mean()), float(np.median(x))
    flag = None if x.size >= MIN_SEEDS_FOR_CI else f"only {x.size} samples (< {MIN_SEEDS_FOR_CI})"
    if x.size < 2 or np.all(x == x[0]):
        return Aggregate(int(x.size), mean, med, mean, mean, flag)
    lo, hi = stats.t.interval(confidence, x.size - 1, loc=mean, scale=stats.sem(x))
    return Aggregate(int(x.size), mean, med, float(lo), float(hi), flag)


@dataclass
class ExperimentSummary:
    """One metric across configurations: aggregates, raw per-seed values and
    optional exhaustive baselines keyed like the configurations."""

    metric: str
    per_config: dict[str, Aggregate]
    raw: dict[str, list]
    baselines: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for key, base in self.baselines.items():
            opt, best, worst = base.get("optimum"), base.get("best_ne"), base.get("worst_ne")
            tol = 1e-9 * max(1.0, abs(opt or 0.0))
            if best is not None and worst is not None and best < worst - tol:
                raise ValueError(f"{key}: best NE below worst NE")
            if opt is not None and best is not None and opt < best - tol:
                raise ValueError(f"{key}: optimum below best NE")

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "per_config": {k: v.to_dict() for k, v in self.per_config.items()},
            "raw": self.raw,
            "baselines": self.baselines,
        }


def summarize(metric: str, raw: dict[str, list], baselines: dict | None = None) -> ExperimentSummary:
    return ExperimentSummary(metric, {k: aggregate(v) for k, v in raw.items()}, raw, baselines or {})


# --- output formats -----------------------------------------------------------


def csv_text(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def dat_text(xs, ys, header: str = "") -> str:
    """Two whitespace-separated columns, ready for external plotting tools."""
    lines = [f"# {header}"] if header else []
    lines += [f"{x!r} {y!r}" for x, y in zip(xs, ys)]
    return "\n".join(lines) + "\n"


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _num(v, width: int = 12, places: int = 4) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return f"{'-':>{width}}"
    if abs(v) < 0.5 * 10.0**-places:
        v = 0.0
    return f"{v:>{width}.{places}f}"


def ne_gap_table(reports: dict[str, NeGapReport]) -> str:
    """Fixed-width table, one row per configuration; gaps in percent of the optimum."""
    lines = [
        f"{'config':>16} {'optimum':>12} {'best_ne':>12} {'worst_ne':>12} {'learned':>12}"
        f" {'gap_best%':>10} {'gap_worst%':>10} {'gap_learn%':>10}"
    ]
    for key, rep in reports.items():
        if rep.optimum is None:
            lines.append(f"{key:>16} unavailable: {rep.flagged}")
            continue
        g = {k: 100.0 * v for k, v in rep.gaps().items()}
        lines.append(
            f"{key:>16} {_num(rep.optimum)} {_num(rep.best_ne)} {_num(rep.worst_ne)} {_num(rep.learned_mean)}"
            f" {_num(g.get('best_ne'), 10, 3)} {_num(g.get('worst_ne'), 10, 3)} {_num(g.get('learned_mean'), 10, 3)}"
        )
    return "\n".join(lines) + "\n"
