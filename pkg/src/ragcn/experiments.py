"""Config-driven experiment sweeps: result rows, aggregates and plot data."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .datasets import AttributedGraph, DatasetSchema, SyntheticSpec, bundled_dataset, generate_gaussian_toy, generate_synthetic, load_csv_dataset
from .models import VARIANTS
from .training import TrainConfig, TrainingError, fit_and_evaluate

AXES = ("none", "imbalance", "gamma", "alpha", "variant")
METRIC_NAMES = ("accuracy", "macro_f1", "roc_auc")
RESULT_HEADER = ["method", "sweep_value", "seed", "accuracy", "macro_f1", "roc_auc", "wall_ms"]
DATASET_KINDS = ("synthetic", "gaussian-toy", "csv", "bundled")


class ExperimentConfigError(ValueError):
    pass


def parse_method(name: str) -> dict:
    """TrainConfig overrides for a method label such as ``gcn-weighted`` or ``ragcn:shared-trunk+graph``."""
    base, plus, suffix = name.partition("+")
    if plus and suffix != "graph":
        raise ExperimentConfigError(f"unknown method suffix in {name!r}")
    out: dict[str, Any] = {"graph": "learned" if plus else "fixed"}
    if base == "ragcn" or base.startswith("ragcn:"):
        out["mode"] = "ragcn"
        variant = base.partition(":")[2] or "per-class"
        if variant not in VARIANTS:
            raise ExperimentConfigError(f"unknown weighting variant in {name!r}")
        out["variant"] = variant
        return out
    mode, _, weighting = base.partition("-")
    if mode not in ("gcn", "mlp") or weighting not in ("weighted", "unweighted"):
        raise ExperimentConfigError(
            f"unknown method {name!r}; expected (gcn|mlp)-(weighted|unweighted) or ragcn[:variant], optionally +graph"
        )
    if mode == "mlp" and plus:
        raise ExperimentConfigError("an MLP has no graph to learn")
    out.update(mode=mode, weighted=weighting == "weighted")
    return out


@dataclass
class ExperimentConfig:
    dataset: dict
    methods: list[str]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=lambda: {"axis": "none", "values": []})
    out: str | None = None
    # Measured wall times vary between runs; keeping them out of results.csv
    # is what makes that file byte-reproducible. They always go to timings.csv.
    record_wall_time: bool = False
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.methods:
            raise ExperimentConfigError("at least one method is required")
        if not self.seeds:
            raise ExperimentConfigError("at least one seed is required")
        if len(set(self.methods)) != len(self.methods) or len(set(self.seeds)) != len(self.seeds):
            raise ExperimentConfigError("methods and seeds must not repeat")
        kind = self.dataset.get("kind")
        if kind not in DATASET_KINDS:
            raise ExperimentConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {kind!r}")
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(self.train) - known
        if unknown:
            raise ExperimentConfigError(f"unknown train fields {sorted(unknown)}")
        for m in self.methods:
            parse_method(m)
        axis = self.sweep.get("axis", "none")
        values = list(self.sweep.get("values", []))
        if axis not in AXES:
            raise ExperimentConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
        if axis != "none" and not values:
            raise ExperimentConfigError(f"sweep over {axis} needs at least one value")
        if axis == "none" and values:
            raise ExperimentConfigError("sweep values given without an axis")
        for v in values:
            _check_sweep_value(axis, v, kind)
        if axis == "variant" and not any(parse_method(m)["mode"] == "ragcn" for m in self.methods):
            raise ExperimentConfigError("a variant sweep needs a ragcn method")
        if self.jobs < 1:
            raise ExperimentConfigError("jobs must be >= 1")
        # Fail early on bad TrainConfig values rather than mid-sweep.
        for m in self.methods:
            try:
                TrainConfig(**{**self.train, **parse_method(m)})
            except (TypeError, ValueError) as exc:
                raise ExperimentConfigError(f"invalid train settings for {m}: {exc}") from exc
        try:
            _dataset_for(self.dataset, self.sweep_points()[0], axis, self.seeds[0], probe=True)
        except (ValueError, FileNotFoundError) as exc:
            raise ExperimentConfigError(f"invalid dataset: {exc}") from exc

    @property
    def axis(self) -> str:
        return self.sweep.get("axis", "none")

    def sweep_points(self) -> list:
        return list(self.sweep.get("values", [])) or [None]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "train": self.train,
            "sweep": {"axis": self.axis, "values": list(self.sweep.get("values", []))},
            "out": self.out,
            "record_wall_time": self.record_wall_time,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(d) - allowed
        if unknown:
            raise ExperimentConfigError(f"unknown config keys {sorted(unknown)}")
        if "dataset" not in d or "methods" not in d:
            raise ExperimentConfigError("config needs 'dataset' and 'methods'")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ExperimentConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)


def _check_sweep_value(axis: str, v, kind: str) -> None:
    if axis == "variant":
        if v not in VARIANTS:
            raise ExperimentConfigError(f"unknown variant {v!r} in sweep")
        return
    if axis == "none":
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ExperimentConfigError(f"{axis} sweep values must be numbers, got {v!r}")
    if axis == "imbalance":
        if kind not in ("synthetic", "gaussian-toy"):
            raise ExperimentConfigError("an imbalance sweep needs a generated dataset")
        if not 0.0 < v < 1.0:
            raise ExperimentConfigError(f"imbalance values are major-class fractions in (0, 1), got {v}")
    elif axis in ("gamma", "alpha") and v < 0:
        raise ExperimentConfigError(f"{axis} must be >= 0, got {v}")


def make_dataset(dataset: dict, seed: int, axis: str = "none", point=None) -> AttributedGraph:
    """Materialize the dataset of one (sweep value, seed) cell.

    The seed drives both generation and the split for generated data; for
    CSV data only the split varies.
    """
    kind = dataset["kind"]
    opts = {k: v for k, v in dataset.items() if k != "kind"}
    if kind == "synthetic":
        if "class_weights" in opts:
            opts["class_weights"] = tuple(opts["class_weights"])
        if axis == "imbalance":
            opts["class_weights"] = (point, 1.0 - point)
        elif axis == "gamma":
            opts["gamma"] = point
        return generate_synthetic(SyntheticSpec(**{**opts, "seed": seed}))
    if kind == "gaussian-toy":
        if axis == "imbalance":
            opts["minor_fraction"] = 1.0 - point
        elif axis == "gamma":
            opts["gamma"] = point
        return generate_gaussian_toy(seed=seed, **opts)
    if kind == "bundled":
        path, schema = bundled_dataset(opts.pop("name"))
    else:
        path = opts.pop("path")
        raw_schema = opts.pop("schema")
        schema = DatasetSchema.from_json(raw_schema) if isinstance(raw_schema, str) else DatasetSchema(**raw_schema)
    for key in ("gamma", "metric", "standardize"):
        if key in opts:
            schema = replace(schema, **{key: opts.pop(key)})
    if opts:
        raise ExperimentConfigError(f"unknown dataset options {sorted(opts)}")
    if axis == "gamma":
        schema = replace(schema, gamma=point)
    return load_csv_dataset(path, schema, seed=seed)


def _dataset_for(ds: dict, point, axis: str, seed: int, probe: bool = False):
    kind = ds.get("kind")
    if probe and kind == "synthetic":
        # Validate options without paying for a full graph build.
        opts = {k: v for k, v in ds.items() if k != "kind"}
        if "class_weights" in opts:
            opts["class_weights"] = tuple(opts["class_weights"])
        if axis == "imbalance":
            opts["class_weights"] = (point, 1.0 - point)
        SyntheticSpec(**opts)
        return None
    return make_dataset(ds, seed, axis, point)


@dataclass
class ResultRow:
    method: str
    sweep_value: Any
    seed: int
    accuracy: float = math.nan
    macro_f1: float = math.nan
    roc_auc: float | None = None
    wall_ms: float = 0.0
    error: str | None = None
    best_iteration: int = -1


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _train_config(config: ExperimentConfig, method: str, point, seed: int) -> TrainConfig:
    overrides = {**config.train, **parse_method(method), "seed": seed}
    if config.axis == "alpha":
        overrides["alpha"] = point
    elif config.axis == "variant" and overrides["mode"] == "ragcn":
        overrides["variant"] = point
    return TrainConfig(**overrides)


def _run_cell(config: ExperimentConfig, point, seed: int) -> list[ResultRow]:
    """Every method on the dataset of one (sweep value, seed) cell."""
    rows = []
    try:
        graph = make_dataset(config.dataset, seed, config.axis, point)
        data_error = None
    except (ValueError, TrainingError) as exc:
        graph, data_error = None, f"{type(exc).__name__}: {exc}"
    for method in config.methods:
        row = ResultRow(method, point, seed)
        t0 = time.perf_counter()
        if graph is None:
            row.error = data_error
        else:
            try:
                report, history = fit_and_evaluate(graph, _train_config(config, method, point, seed))
                row.accuracy, row.macro_f1, row.roc_auc = report.accuracy, report.macro_f1, report.roc_auc
                row.best_iteration = history.best_iteration
            except (TrainingError, ValueError, FloatingPointError) as exc:
                row.error = f"{type(exc).__name__}: {exc}"
        row.wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(row)
    return rows


def _cell_entry(args):
    config_dict, point, seed = args
    return _run_cell(ExperimentConfig.from_dict(config_dict), point, seed)


def run_rows(config: ExperimentConfig, progress=None) -> list[ResultRow]:
    """Train and evaluate every (sweep value, method, seed); rows in that canonical order."""
    cells = [(p, s) for p in config.sweep_points() for s in config.seeds]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_cell_entry, [(config.to_dict(), p, s) for p, s in cells]))
    else:
        results = []
        for p, s in cells:
            results.append(_run_cell(config, p, s))
            if progress:
                for r in results[-1]:
                    progress(r)
    rows = [r for cell in results for r in cell]
    m_pos = {m: i for i, m in enumerate(config.methods)}
    p_pos = {repr(p): i for i, p in enumerate(config.sweep_points())}
    s_pos = {s: i for i, s in enumerate(config.seeds)}
    rows.sort(key=lambda r: (m_pos[r.method], p_pos[repr(r.sweep_value)], s_pos[r.seed]))
    return rows


def rows_to_csv(rows: list[ResultRow], record_wall_time: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for r in rows:
        w.writerow(
            [
                r.method,
                _fmt(r.sweep_value),
                r.seed,
                _fmt(r.accuracy),
                _fmt(r.macro_f1),
                _fmt(r.roc_auc),
                f"{r.wall_ms:.3f}" if record_wall_time else "",
            ]
        )
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_HEADER:
            raise ValueError(f"{path} does not have the results header {RESULT_HEADER}")
        out = []
        for rec in reader:
            parsed = {"method": rec["method"], "sweep_value": rec["sweep_value"], "seed": int(rec["seed"])}
            for m in METRIC_NAMES:
                parsed[m] = float(rec[m]) if rec[m] != "" else None
            out.append(parsed)
        return out


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return None, None
    arr = np.asarray(vals)
    # Population std: a single run reports std 0.
    return float(arr.mean()), float(arr.std())


def aggregate(records: list[dict]) -> list[dict]:
    """Mean and std per (method, sweep value) for every metric, in first-seen order."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in records:
        groups.setdefault((r["method"], _fmt(r["sweep_value"])), []).append(r)
    out = []
    for (method, sv), recs in groups.items():
        entry: dict[str, Any] = {"method": method, "sweep_value": sv, "n": len(recs)}
        entry["failures"] = sum(1 for r in recs if r["macro_f1"] is None or math.isnan(r["macro_f1"]))
        for m in METRIC_NAMES:
            mean, std = _mean_std([r[m] for r in recs])
            entry[m] = {"mean": mean, "std": std}
        out.append(entry)
    return out


def _row_record(r: ResultRow) -> dict:
    return {
        "method": r.method,
        "sweep_value": r.sweep_value,
        "seed": r.seed,
        "accuracy": None if r.error else r.accuracy,
        "macro_f1": None if r.error else r.macro_f1,
        "roc_auc": None if r.error else r.roc_auc,
    }


def plot_data_csv(entries: list[dict], metric: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep_value", "method", "mean", "std"])
    for e in entries:
        w.writerow([e["sweep_value"], e["method"], _fmt(e[metric]["mean"]), _fmt(e[metric]["std"])])
    return buf.getvalue()


@dataclass
class RunOutput:
    rows: list[ResultRow]
    aggregate: list[dict]
    files: dict[str, Path]


def run(config: ExperimentConfig, out_dir=None, progress=None) -> RunOutput:
    """Run the experiment and write results.csv, aggregate.json, plot_<metric>.csv.

    Failed runs keep their row with empty metrics; the reason goes to errors.csv.
    """
    out_dir = Path(out_dir or config.out or "results")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_rows(config, progress)
    entries = aggregate([_row_record(r) for r in rows])
    files = {
        "results": out_dir / "results.csv",
        "aggregate": out_dir / "aggregate.json",
        "timings": out_dir / "timings.csv",
        "errors": out_dir / "errors.csv",
        "config": out_dir / "config.json",
    }
    for r in rows:
        if r.error:
            r.accuracy, r.macro_f1, r.roc_auc = None, None, None
    _write(files["results"], rows_to_csv(rows, config.record_wall_time))
    _write(files["aggregate"], json.dumps({"axis": config.axis, "entries": entries}, indent=2, sort_keys=True) + "\n")
    _write(files["config"], json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "sweep_value", "seed", "wall_ms", "best_iteration"])
    for r in rows:
        w.writerow([r.method, _fmt(r.sweep_value), r.seed, f"{r.wall_ms:.3f}", r.best_iteration])
    _write(files["timings"], buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "sweep_value", "seed", "error"])
    for r in rows:
        if r.error:
            w.writerow([r.method, _fmt(r.sweep_value), r.seed, r.error])
    _write(files["errors"], buf.getvalue())
    for m in METRIC_NAMES:
        files[f"plot_{m}"] = out_dir / f"plot_{m}.csv"
        _write(files[f"plot_{m}"], plot_data_csv(entries, m))
    return RunOutput(rows, entries, files)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def report(results_dir) -> str:
    """Per-method mean ± std table (3 decimals) with the best method per metric starred."""
    path = Path(results_dir) / "results.csv"
    if not path.exists():
        raise ValueError(f"no results.csv in {results_dir}")
    records = read_results_csv(path)
    if not records:
        raise ValueError(f"{path} has no result rows")
    entries = aggregate(records)
    by_sweep: dict[str, list[dict]] = {}
    for e in entries:
        by_sweep.setdefault(e["sweep_value"], []).append(e)
    lines = []
    for sv, group in by_sweep.items():
        if sv != "":
            lines.append(f"sweep value {sv}")
        lines.append("| method | n | " + " | ".join(METRIC_NAMES) + " |")
        lines.append("|---|---|" + "---|" * len(METRIC_NAMES))
        best = {}
        for m in METRIC_NAMES:
            means = [e[m]["mean"] for e in group if e[m]["mean"] is not None]
            best[m] = max(means) if means else None
        for e in group:
            cells = []
            for m in METRIC_NAMES:
                mean, std = e[m]["mean"], e[m]["std"]
                if mean is None:
                    cells.append("n/a")
                    continue
                star = " *" if mean == best[m] else ""
                cells.append(f"{mean:.3f} ± {std:.3f}{star}")
            lines.append(f"| {e['method']} | {e['n']} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


# ----------------------------------------------------------------------- presets

_SYNTH_95 = {"kind": "synthetic", "class_weights": [0.95, 0.05], "gamma": 0.5}
_BASELINES = ["mlp-unweighted", "mlp-weighted", "gcn-unweighted", "gcn-weighted", "ragcn"]

PRESETS: dict[str, dict] = {
    "diabetes": {
        "dataset": {"kind": "bundled", "name": "diabetes"},
        "methods": _BASELINES,
        "train": {"alpha": 0.5, "hidden": [4]},
    },
    "haberman": {
        "dataset": {"kind": "bundled", "name": "haberman"},
        "methods": _BASELINES,
        "train": {"alpha": 1.0, "hidden": [2]},
    },
    "synthetic-95-5": {"dataset": _SYNTH_95, "methods": _BASELINES},
    "synthetic-75-25": {
        "dataset": {"kind": "synthetic", "class_weights": [0.75, 0.25], "gamma": 0.5},
        "methods": _BASELINES,
    },
    "imbalance": {
        "dataset": {"kind": "synthetic", "gamma": 0.5},
        "methods": ["gcn-unweighted", "gcn-weighted", "ragcn"],
        "sweep": {"axis": "imbalance", "values": [0.5, 0.6, 0.7, 0.8]},
    },
    "gamma": {
        "dataset": _SYNTH_95,
        "methods": ["gcn-unweighted", "gcn-weighted", "ragcn"],
        "sweep": {"axis": "gamma", "values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]},
    },
    "alpha": {
        "dataset": _SYNTH_95,
        "methods": ["ragcn"],
        "sweep": {"axis": "alpha", "values": [0.0, 0.1, 0.5, 1.0]},
    },
    "variant": {
        "dataset": _SYNTH_95,
        "methods": ["ragcn"],
        "sweep": {"axis": "variant", "values": list(VARIANTS)},
    },
    "gaussian-toy": {
        "dataset": {"kind": "gaussian-toy", "gamma": 0.5},
        "methods": _BASELINES,
        "train": {"hidden": []},
    },
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ExperimentConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = json.loads(json.dumps(PRESETS[name]))
    base.update(overrides)
    return ExperimentConfig.from_dict(base)
