"""Command-line entry point: run, report, generate, gradcheck."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from .datasets import write_csv
from .experiments import ExperimentConfig, ExperimentConfigError


def _load_config(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise ExperimentConfigError("give exactly one of --config or --preset")
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        if args.preset not in experiments.PRESETS:
            raise ExperimentConfigError(f"unknown preset {args.preset!r}; choose from {sorted(experiments.PRESETS)}")
        raw = json.loads(json.dumps(experiments.PRESETS[args.preset]))
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if args.out:
        raw["out"] = args.out
    return ExperimentConfig.from_dict(raw)


def cmd_run(args) -> int:
    config = _load_config(args)

    def progress(row):
        status = f"macro_f1={row.macro_f1:.3f}" if row.error is None else f"FAILED {row.error}"
        sv = "" if row.sweep_value is None else f" {config.axis}={row.sweep_value}"
        print(f"{row.method}{sv} seed={row.seed} {status} ({row.wall_ms / 1000:.1f}s)", file=sys.stderr)

    out = experiments.run(config, args.out or config.out, progress=None if args.quiet else progress)
    if not args.quiet:
        print(experiments.report(out.files["results"].parent))
    return 0


def cmd_report(args) -> int:
    text = experiments.report(args.results)
    print(text)
    if args.markdown:
        Path(args.markdown).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_generate(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {"kind": "synthetic"}
    dataset = raw.get("dataset", raw)
    graph = experiments.make_dataset(dataset, 0 if args.seed is None else args.seed)
    out = Path(args.out or "synthetic.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "dataset.csv"
    write_csv(graph, out, graph.adj_features)
    if not args.quiet:
        print(f"wrote {graph.n} nodes, class counts {graph.class_counts()} to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import run_suite

    results = run_suite(instances=args.instances, seed=0 if args.seed is None else args.seed)
    worst = 0.0
    for name, err in results.items():
        worst = max(worst, err)
        if not args.quiet:
            print(f"{name:32s} max rel err {err:.2e}")
    ok = worst < args.tol
    print(f"gradcheck {'passed' if ok else 'FAILED'}: worst {worst:.2e} (tol {args.tol:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ragcn", description="Adversarially re-weighted GCN experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the seed list with one seed")
        sp.add_argument("--quiet", action="store_true")

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", help="experiment JSON")
    r.add_argument("--preset", help=f"named config: {', '.join(sorted(experiments.PRESETS))}")
    r.add_argument("--out", help="output directory")
    common(r)
    r.set_defaults(fn=cmd_run)

    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("results", help="directory holding results.csv")
    rep.add_argument("--markdown", help="also write the table to this file")
    rep.set_defaults(fn=cmd_report)

    g = sub.add_parser("generate", help="write a generated dataset to CSV")
    g.add_argument("--config", help="dataset JSON (or experiment JSON with a 'dataset' key)")
    g.add_argument("--out", help="CSV path or directory")
    common(g)
    g.set_defaults(fn=cmd_generate)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every architecture")
    gc.add_argument("--instances", type=int, default=5)
    gc.add_argument("--tol", type=float, default=1e-5)
    common(gc)
    gc.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ExperimentConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
