"""Named experiment definitions, seed fan-out and result persistence."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    NeGapReport,
    convergence_cdf,
    csv_text,
    dat_text,
    good_or_better,
    json_text,
    ne_gap_report,
    qoe_histogram,
    satisfied_ratio,
    summarize,
)
from .errors import ConfigurationError
from .gamecore import is_pure_ne, welfare_value
from .games import (
    ASSOCIATION_KINDS,
    AssociationGameSpec,
    SpectrumAccessGameSpec,
    build_association_game,
    build_hierarchical_stages,
    build_spectrum_game,
    cluster_topology,
    robust_spectrum_game,
)
from .learning import run_best_response, run_hierarchical_q, run_q_learning_simultaneous, run_sla
from .netmodel import generate_sap_user_topology, generate_topology
from .utility import SATISFACTION_KINDS, TRAFFIC_PRESETS, QoeLevel

EXPERIMENTS = ("fig3", "fig5", "fig7", "fig8")
SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    """Everything that affects results, plus where to write them.

    ``sweep`` maps one parameter name to the values it takes; each value is a
    configuration point run for every seed.
    """

    name: str
    experiment: str
    topology: dict
    game: dict
    algorithm: dict
    sweep: dict = field(default_factory=dict)
    base_seed: int = 0
    replications: int = 1
    seeds: list | None = None
    output_dir: str = "results"

    # -- helpers -------------------------------------------------------------
    @property
    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.base_seed + k for k in range(self.replications)]

    @property
    def points(self) -> list:
        if not self.sweep:
            return [None]
        (values,) = self.sweep.values()
        return list(values)

    @property
    def sweep_key(self) -> str | None:
        return next(iter(self.sweep), None)

    @property
    def n_values(self) -> list[int]:
        if self.sweep_key == "n_cells":
            return list(self.sweep["n_cells"])
        return [self.topology["n_cells"]]

    @property
    def users(self) -> int:
        return int(self.topology["n_fixed"]) + int(self.topology["n_flexible"])

    # -- persistence ---------------------------------------------------------
    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["schema_version"] = SCHEMA_VERSION
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"schema_version: unsupported value {version}")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        missing = sorted(k for k in ("name", "experiment", "topology", "game", "algorithm") if k not in doc)
        problems = [f"{k}: unknown field" for k in unknown] + [f"{k}: required" for k in missing]
        if problems:
            raise ConfigurationError("invalid config: " + "; ".join(problems))
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def result_dict(self) -> dict:
        """The config minus the output location: what the digest covers."""
        doc = self.to_dict()
        doc.pop("output_dir")
        return doc

    def digest(self) -> str:
        text = json.dumps(self.result_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    # -- validation ----------------------------------------------------------
    def problems(self) -> list[str]:
        out = []
        if self.experiment not in EXPERIMENTS:
            out.append(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            out.append(f"replications: must be an integer >= 1, got {self.replications!r}")
        if self.seeds is not None and (not self.seeds or len(set(self.seeds)) != len(self.seeds)):
            out.append("seeds: must be a non-empty list of distinct integers")
        if len(self.sweep) > 1:
            out.append("sweep: at most one swept parameter")
        for key, values in self.sweep.items():
            if not isinstance(values, list) or not values:
                out.append(f"sweep.{key}: must be a non-empty list")
        for key, value in self._lambdas():
            if not isinstance(value, (int, float)) or not 0.0 < value <= 1.0:
                out.append(f"{key}: active probability must lie in (0, 1], got {value!r}")
        for key in ("interference_radius", "capacity_bps"):
            if key in self.topology and not self.topology[key] > 0:
                out.append(f"topology.{key}: must be positive")
        ch = self.topology.get("channels")
        if ch is not None and (not isinstance(ch, int) or ch < 1):
            out.append("topology.channels: must be a positive integer")
        for n in self._ns():
            if not isinstance(n, int) or n < 1:
                out.append(f"n_cells: must be a positive integer, got {n!r}")
        for kind in self.game.get("satisfaction_kinds", []):
            if kind not in SATISFACTION_KINDS:
                out.append(f"game.satisfaction_kinds: unknown kind {kind!r}")
        for kind in self.game.get("utility_kinds", []):
            if kind not in ASSOCIATION_KINDS:
                out.append(f"game.utility_kinds: unknown kind {kind!r}")
        for name in self.game.get("traffic_mix", []) + self.game.get("classes", []):
            if name not in TRAFFIC_PRESETS:
                out.append(f"game: unknown traffic class {name!r}")
        alg = self.algorithm
        if "b" in alg and not 0.0 < alg["b"] < 1.0:
            out.append("algorithm.b: must lie in (0, 1)")
        if "alpha" in alg and not 0.0 < alg["alpha"] <= 1.0:
            out.append("algorithm.alpha: must lie in (0, 1]")
        if "horizon" in alg and (not isinstance(alg["horizon"], int) or alg["horizon"] < 1):
            out.append("algorithm.horizon: must be a positive integer")
        return out

    def _lambdas(self):
        if "active_prob" in self.topology:
            yield "topology.active_prob", self.topology["active_prob"]
        for v in self.sweep.get("active_prob", []):
            yield "sweep.active_prob", v

    def _ns(self):
        if "n_cells" in self.topology:
            yield self.topology["n_cells"]
        yield from self.sweep.get("n_cells", [])

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError("invalid config: " + "; ".join(problems))
        return self


# --- presets ------------------------------------------------------------------

_PRESETS = {
    "fig3": dict(
        experiment="fig3",
        topology={"region": [100.0, 100.0], "interference_radius": 30.0, "channels": 3,
                  "bandwidth_hz": 1e6, "tx_power_dbm": 20.0},
        game={"traffic_mix": ["g711", "wmv", "avi-rm", "flash", "h264"],
              "satisfaction_kinds": ["linear", "sigmoid", "concave"], "threshold": 0.95},
        algorithm={"name": "sla", "b": 0.1, "horizon": 3000},
        sweep={"n_cells": [10, 20, 30]},
        replications=100,
    ),
    "fig5": dict(
        experiment="fig5",
        topology={"grid": [4, 3], "region": [100.0, 100.0], "capacity_bps": 10e6,
                  "n_fixed": 78, "n_flexible": 20},
        game={"classes": ["skype-group", "skype-hd", "skype-general"],
              "utility_kinds": list(ASSOCIATION_KINDS)},
        algorithm={"name": "best-response", "schedule": "random", "horizon": 500},
        replications=100,
    ),
    "fig7": dict(
        experiment="fig7",
        topology={"region": [200.0, 200.0], "interference_radius": 25.0, "channels": 3},
        game={"satisfaction_kind": "none"},
        algorithm={"name": "q-learning", "alpha": 0.5, "eps0": 0.3, "tau": 100.0, "window": 20,
                   "q_init": 0.0, "horizon": 5000},
        sweep={"n_cells": [50, 80]},
        replications=100,
    ),
    "fig8": dict(
        experiment="fig8",
        topology={"n_cells": 9, "topology_seed": 1, "region": [60.0, 60.0],
                  "interference_radius": 30.0, "channels": 2},
        game={"robust": True, "scope": "local", "welfare": "sum"},
        algorithm={"name": "sla", "b": 0.03, "horizon": 20000},
        sweep={"active_prob": [0.3, 0.5, 0.8, 1.0]},
        replications=100,
    ),
}

PRESET_ALIASES = {"fig8-robust-9cell": "fig8"}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset(name: str) -> ExperimentConfig:
    key = PRESET_ALIASES.get(name, name)
    if key not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}")
    return ExperimentConfig(name=key, **copy.deepcopy(_PRESETS[key]))


# --- per-unit work ------------------------------------------------------------


def _topo_kwargs(topology: dict) -> dict:
    keys = ("region", "interference_radius", "channels", "bandwidth_hz", "tx_power_dbm", "active_prob")
    out = {k: topology[k] for k in keys if k in topology}
    if "region" in out:
        out["region"] = tuple(out["region"])
    return out


def _unit_fig3(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    topo = generate_topology(seed, n, **_topo_kwargs(cfg.topology))
    mix = cfg.game["traffic_mix"]
    draw = np.random.default_rng([seed, 1]).integers(len(mix), size=n)
    traffic = tuple(TRAFFIC_PRESETS[mix[i]] for i in draw)
    alg = cfg.algorithm
    out = {}
    for kind in cfg.game["satisfaction_kinds"]:
        game = build_spectrum_game(SpectrumAccessGameSpec(topo, kind, traffic))
        rec = run_sla(game, alg["horizon"], alg["b"], np.random.default_rng([seed, 2]), seed=seed,
                      keep_trajectory=False)
        out[kind] = {
            "satisfied_ratio": satisfied_ratio(rec, game, cfg.game.get("threshold", 0.95)),
            "satisfied_ratio_rate": satisfied_ratio(rec, game, cfg.game.get("threshold", 0.95), measure="rate"),
            "converged_at": rec.converged_at,
            "final_profile": list(rec.final_profile),
        }
    return out


def _unit_fig5(cfg: ExperimentConfig, point, seed: int) -> dict:
    t = cfg.topology
    classes = [TRAFFIC_PRESETS[c] for c in cfg.game["classes"]]
    topo = generate_sap_user_topology(
        seed, tuple(t["grid"]), tuple(t["region"]), t["capacity_bps"], t["n_fixed"], t["n_flexible"], classes
    )
    alg = cfg.algorithm
    out = {}
    for kind in cfg.game["utility_kinds"]:
        game = build_association_game(AssociationGameSpec(topo, kind))
        rec = run_best_response(game, alg["horizon"], alg.get("schedule", "random"),
                                np.random.default_rng([seed, 2]), seed=seed)
        hist = qoe_histogram(rec, game)
        out[kind] = {
            "histogram": {lv.label: hist[lv] for lv in QoeLevel},
            "good_or_better": good_or_better(hist),
            "converged_at": rec.converged_at,
            "final_profile": list(rec.final_profile),
        }
    return out


def _unit_fig7(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    topo = generate_topology(seed, n, **_topo_kwargs(cfg.topology))
    spec = SpectrumAccessGameSpec(topo, cfg.game.get("satisfaction_kind", "none"))
    a = cfg.algorithm
    kw = dict(eps0=a["eps0"], tau=a["tau"], window=a["window"], q_init=a["q_init"], seed=seed)
    sim = run_q_learning_simultaneous(build_spectrum_game(spec), a["horizon"], a["alpha"],
                                      np.random.default_rng([seed, 2]), keep_trajectory=False, **kw)
    plan = build_hierarchical_stages(topo, spec, cluster_topology(topo))
    hier = run_hierarchical_q(plan, a["horizon"], a["alpha"], np.random.default_rng([seed, 2]), **kw)
    return {
        "simultaneous": {"converged_at": sim.converged_at, "final_profile": list(sim.final_profile)},
        "hierarchical": {
            "converged_at": hier.converged_at,
            "final_profile": list(hier.final_profile),
            "stages": hier.extra["stages"],
            "clusters": len(plan.clusters.clusters),
        },
    }


@lru_cache(maxsize=16)
def _fig8_game(topology_json: str, game_json: str, lam: float):
    t = json.loads(topology_json)
    g = json.loads(game_json)
    topo = generate_topology(t["topology_seed"], t["n_cells"], **_topo_kwargs(t)).with_active_prob(lam)
    return robust_spectrum_game(topo, scope=g.get("scope", "local"))


def _fig8_game_for(cfg: ExperimentConfig, lam: float):
    return _fig8_game(json.dumps(cfg.topology, sort_keys=True), json.dumps(cfg.game, sort_keys=True), float(lam))


def _unit_fig8(cfg: ExperimentConfig, lam: float, seed: int) -> dict:
    game = _fig8_game_for(cfg, lam)
    a = cfg.algorithm
    rec = run_sla(game, a["horizon"], a["b"], np.random.default_rng([seed, 2]), seed=seed, keep_trajectory=False)
    return {
        "sla": {
            "welfare": welfare_value(game, rec.final_profile, cfg.game.get("welfare", "sum")),
            "is_ne": is_pure_ne(game, rec.final_profile),
            "converged_at": rec.converged_at,
            "final_profile": list(rec.final_profile),
        }
    }


def _baseline_fig8(cfg: ExperimentConfig, lam: float) -> dict:
    rep = ne_gap_report(_fig8_game_for(cfg, lam), cfg.game.get("welfare", "sum"))
    return rep.to_dict()


_UNITS = {"fig3": _unit_fig3, "fig5": _unit_fig5, "fig7": _unit_fig7, "fig8": _unit_fig8}


def _run_unit(args) -> dict:
    cfg_doc, point, seed = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    try:
        return {"ok": True, "result": _UNITS[cfg.experiment](cfg, point, seed)}
    except Exception as exc:  # recorded per seed, not fatal to the batch
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_baseline(args) -> dict:
    cfg_doc, point = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    return _baseline_fig8(cfg, point)


# --- orchestration ------------------------------------------------------------


def _point_label(cfg: ExperimentConfig, point) -> str:
    if point is None:
        return "all"
    return f"{cfg.sweep_key}={point}"


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def collect(cfg: ExperimentConfig, jobs: int = 1) -> tuple[dict, dict]:
    """Run every (point, seed) unit; results come back in submission order."""
    cfg.validate()
    doc = cfg.to_dict()
    units = [(doc, p, s) for p in cfg.points for s in cfg.seed_list]
    results = _map(_run_unit, units, jobs)
    runs = {}
    for (_, p, s), res in zip(units, results):
        runs.setdefault(_point_label(cfg, p), {})[s] = res
    baselines = {}
    if cfg.experiment == "fig8":
        reps = _map(_run_baseline, [(doc, p) for p in cfg.points], jobs)
        baselines = {_point_label(cfg, p): r for p, r in zip(cfg.points, reps)}
    return runs, baselines


def _variant_values(runs: dict, variant: str, field_name: str) -> dict[str, list]:
    out = {}
    for label, by_seed in runs.items():
        out[label] = [
            r["result"][variant][field_name] if r["ok"] else None for _, r in sorted(by_seed.items())
        ]
    return out


def reduce_results(cfg: ExperimentConfig, runs: dict, baselines: dict) -> dict:
    """Deterministic reduction of unit results into the summary document."""
    metrics, tables, rows = {}, {}, []
    failures = {
        label: {str(s): r["error"] for s, r in sorted(by_seed.items()) if not r["ok"]}
        for label, by_seed in runs.items()
    }
    failures = {k: v for k, v in failures.items() if v}
    if cfg.experiment == "fig3":
        for kind in cfg.game["satisfaction_kinds"]:
            metrics[f"satisfied_ratio/{kind}"] = summarize("satisfied_ratio", _variant_values(runs, kind, "satisfied_ratio")).to_dict()
            metrics[f"satisfied_ratio_rate/{kind}"] = summarize(
                "satisfied_ratio_rate", _variant_values(runs, kind, "satisfied_ratio_rate")
            ).to_dict()
            tables[f"satisfied_ratio_{kind}.dat"] = dat_text(
                cfg.points, [metrics[f"satisfied_ratio/{kind}"]["per_config"][_point_label(cfg, p)]["mean"] for p in cfg.points],
                f"n_cells mean satisfied ratio ({kind})",
            )
        variants, fields = cfg.game["satisfaction_kinds"], ("satisfied_ratio", "satisfied_ratio_rate", "converged_at")
    elif cfg.experiment == "fig5":
        for kind in cfg.game["utility_kinds"]:
            metrics[f"good_or_better/{kind}"] = summarize("good_or_better", _variant_values(runs, kind, "good_or_better")).to_dict()
            hists = [h for h in _variant_values(runs, kind, "histogram")["all"] if h is not None]
            mean_hist = {lv.label: float(np.mean([h[lv.label] for h in hists])) for lv in QoeLevel}
            metrics[f"qoe_histogram/{kind}"] = mean_hist
            tables[f"qoe_histogram_{kind}.dat"] = dat_text(
                [int(lv) for lv in QoeLevel], [mean_hist[lv.label] for lv in QoeLevel], f"QoE level, mean users ({kind})"
            )
        variants, fields = cfg.game["utility_kinds"], ("good_or_better", "converged_at")
    elif cfg.experiment == "fig7":
        for alg in ("simultaneous", "hierarchical"):
            vals = _variant_values(runs, alg, "converged_at")
            metrics[f"convergence/{alg}"] = summarize("convergence_iterations", vals).to_dict()
            for label, v in vals.items():
                cdf = convergence_cdf([x for x in v])
                metrics[f"convergence/{alg}"]["per_config"][label]["cdf"] = cdf
                metrics[f"convergence/{alg}"]["per_config"][label]["converged_fraction"] = cdf[-1][1] if cdf else 0.0
                tables[f"cdf_{alg}_{label.replace('=', '')}.dat"] = dat_text(
                    [c[0] for c in cdf], [c[1] for c in cdf], f"iterations CDF ({alg}, {label})"
                )
        variants, fields = ("simultaneous", "hierarchical"), ("converged_at",)
    else:
        vals = _variant_values(runs, "sla", "welfare")
        metrics["welfare/sla"] = summarize("welfare", vals, baselines).to_dict()
        ne_hits = _variant_values(runs, "sla", "is_ne")
        metrics["ne_fraction/sla"] = {k: float(np.mean([bool(x) for x in v if x is not None])) for k, v in ne_hits.items()}
        reports = {}
        for p in cfg.points:
            label = _point_label(cfg, p)
            rep = NeGapReport.from_dict(baselines[label])
            rep.learned = [x for x in vals[label] if x is not None]
            reports[label] = rep.to_dict()
        metrics["ne_gap"] = reports
        for key in ("optimum", "best_ne", "worst_ne", "learned_mean"):
            tables[f"welfare_{key}.dat"] = dat_text(
                cfg.points, [reports[_point_label(cfg, p)][key] for p in cfg.points], f"active_prob {key}"
            )
        variants, fields = ("sla",), ("welfare", "is_ne", "converged_at")

    for label, by_seed in runs.items():
        for s, r in sorted(by_seed.items()):
            for v in variants:
                row = {"config": label, "seed": s, "variant": v}
                for f in fields:
                    row[f] = r["result"][v][f] if r["ok"] else ""
                row["error"] = "" if r["ok"] else r["error"]
                rows.append(row)

    summary = {
        "code_version": __version__,
        "config_digest": cfg.digest(),
        "experiment": cfg.experiment,
        "name": cfg.name,
        "seeds": cfg.seed_list,
        "points": [_point_label(cfg, p) for p in cfg.points],
        "metrics": metrics,
        "failures": failures,
    }
    return {"summary": summary, "rows": rows, "tables": tables}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, output_dir=None) -> dict:
    """Run, reduce and persist. Returns the summary document.

    Layout: ``config.echo.json``, ``runs/<point>/seed-<s>.json``, ``summary.json``,
    ``summary.csv`` and one ``.dat`` file per plotted series.
    """
    cfg.validate()
    out = Path(output_dir or cfg.output_dir)
    runs, baselines = collect(cfg, jobs)
    reduced = reduce_results(cfg, runs, baselines)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo.json").write_text(cfg.to_json())
    for label, by_seed in runs.items():
        d = out / "runs" / label.replace("=", "-")
        d.mkdir(parents=True, exist_ok=True)
        for s, r in by_seed.items():
            (d / f"seed-{s}.json").write_text(json_text({"config": label, "seed": s, **r}))
    (out / "summary.json").write_text(json_text(reduced["summary"]))
    header = f"# code_version={__version__} config_digest={cfg.digest()}\n"
    (out / "summary.csv").write_text(header + csv_text(reduced["rows"]))
    for name, text in reduced["tables"].items():
        (out / name).write_text(f"# code_version={__version__} config_digest={cfg.digest()}\n" + text)
    return reduced["summary"]


def load_summary(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    return json.loads(path.read_text())


def default_output_dir() -> str:
    return os.environ.get("CSCGAME_OUT", "results")
