"""Command line entry point: ``ixdrl <subcommand> ...``.

Exit statuses: 0 success, 2 invalid input (trace validation or config), 3 a
stage failed. The default output root is taken from ``IXDRL_OUTPUT_ROOT``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .pipeline import (OUTPUT_ROOT_ENV, STAGES, ConfigError, PipelineConfig, StageError,
                       bundled_path, output_root, parse_k_range, run_pipeline, stage_analyze,
                       stage_cluster, stage_explain, stage_gen, stage_report, stage_validate,
                       write_manifest)
from .traces import TraceValidationError

logger = logging.getLogger("ixdrl")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_STAGE = 3


def _read_json(path: str, stage: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise StageError(stage, f"missing input file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _analyzer_options(args) -> dict:
    opts = {}
    if args.rho is not None:
        opts["rho"] = args.rho
    if args.online:
        opts["online"] = True
    if args.td_indexing is not None:
        opts["td_indexing"] = args.td_indexing
    return opts


def _gen_target(out: str | None) -> Path:
    if out and out.endswith(".jsonl"):
        return Path(out)
    return output_root(out) / "traces.jsonl"


def cmd_gen(args) -> list[Path]:
    spec = _read_json(args.env or str(bundled_path("gridworld_env.json")), "gen")
    arts = stage_gen(spec, args.n_traces, args.seed, _gen_target(args.out))
    print(f"wrote {arts[0]}")
    return arts


def cmd_validate(args) -> list[Path]:
    path = args.file or args.traces
    if path is None:
        raise ConfigError("no trace file given")
    ts = stage_validate(Path(path))
    print(f"{path}: valid ({len(ts)} traces, {ts.n_datapoints} datapoints)")
    return []


def cmd_analyze(args) -> list[Path]:
    if args.out and args.out.endswith(".csv"):
        out, name = Path(args.out).parent, Path(args.out).name
    else:
        out, name = output_root(args.out), "interestingness.csv"
    arts = stage_analyze(Path(args.traces), out, _analyzer_options(args), name)
    cov = json.loads(arts[1].read_text())
    print(f"{cov['n_records']} records; dimensions: {', '.join(cov['dimensions'])}")
    return arts


def cmd_cluster(args) -> list[Path]:
    out = output_root(args.out)
    return stage_cluster(Path(args.interestingness), out, parse_k_range(args.k),
                         Path(args.traces) if args.traces else None, args.n_clusters)


def cmd_explain(args) -> list[Path]:
    out = output_root(args.out)
    opts = {"dims": args.dim or "all", "split": args.split, "max_waterfalls": args.max_waterfalls}
    return stage_explain(Path(args.traces), Path(args.interestingness), out, opts,
                         features=Path(args.features) if args.features else None, seed=args.seed)


def cmd_report(args) -> list[Path]:
    out = output_root(args.out)
    opts = {"timeseries_traces": args.timeseries}
    return stage_report(Path(args.traces), Path(args.interestingness), out, opts,
                        Path(args.clusters) if args.clusters else None)


def cmd_pipeline(args) -> list[Path]:
    config = args.config or str(bundled_path("pipeline.json"))
    overrides = {"seed": args.seed, "output": args.out, "n_traces": args.n_traces,
                 "stages": args.stages.split(",") if args.stages else None}
    cfg = PipelineConfig.from_file(config, overrides)
    _, manifest = run_pipeline(cfg)
    n = len(json.loads(manifest.read_text())["artifacts"])
    print(f"{n} artifacts; manifest at {manifest}")
    return []


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ixdrl", description="Interestingness analysis of agent traces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    out_help = f"output directory (default: ${OUTPUT_ROOT_ENV} or ./ixdrl-out)"

    g = sub.add_parser("gen", help="train toy agents and roll out traces")
    g.add_argument("--env", "--config", dest="env",
                   help="environment spec JSON (default: bundled gridworld)")
    g.add_argument("--traces", "--n-traces", dest="n_traces", type=int, default=100,
                   help="number of traces")
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--out", help="trace file (*.jsonl) or output directory")
    g.set_defaults(func=cmd_gen, stage="gen")

    v = sub.add_parser("validate", help="check a trace file")
    v.add_argument("file", nargs="?", help="trace file")
    v.add_argument("--traces", help="trace file (alternative to the positional argument)")
    v.set_defaults(func=cmd_validate, stage="validate")

    a = sub.add_parser("analyze", help="compute interestingness dimensions")
    a.add_argument("--traces", "--in", dest="traces", required=True)
    a.add_argument("--rho", type=float)
    a.add_argument("--online", "--online-value", dest="online", action="store_true",
                   help="running (causal) value normalisation")
    a.add_argument("--td-indexing", choices=("printed", "standard"))
    a.add_argument("--out", help="records CSV (*.csv) or output directory")
    a.set_defaults(func=cmd_analyze, stage="analyze")

    c = sub.add_parser("cluster", help="cluster traces on mean interestingness")
    c.add_argument("--interestingness", "--in", dest="interestingness", required=True)
    c.add_argument("--traces", help="trace file for the per-cluster metadata report")
    c.add_argument("--k", default="2..15", help="cluster counts to score, e.g. 2..15")
    c.add_argument("--n-clusters", type=int, help="label with this k instead of the silhouette optimum")
    c.add_argument("--out", help=out_help)
    c.set_defaults(func=cmd_cluster, stage="cluster")

    e = sub.add_parser("explain", help="attribute interestingness to task features")
    e.add_argument("--traces", required=True)
    e.add_argument("--interestingness", required=True)
    e.add_argument("--features", help="precomputed features CSV (default: extract from traces)")
    e.add_argument("--dim", action="append", help="dimension to explain (repeatable; default all)")
    e.add_argument("--split", type=float, default=0.8)
    e.add_argument("--max-waterfalls", type=int, default=3)
    e.add_argument("--seed", type=_seed, default=0)
    e.add_argument("--out", help=out_help)
    e.set_defaults(func=cmd_explain, stage="explain")

    r = sub.add_parser("report", help="render profiles and time series")
    r.add_argument("--traces", required=True)
    r.add_argument("--interestingness", required=True)
    r.add_argument("--clusters", help="clusters.csv from the cluster stage")
    r.add_argument("--timeseries", type=int, default=3, help="number of traces to plot")
    r.add_argument("--out", help=out_help)
    r.set_defaults(func=cmd_report, stage="report")

    pl = sub.add_parser("pipeline", help="run all stages from a config file")
    pl.add_argument("--config", help="pipeline config JSON (default: bundled)")
    pl.add_argument("--seed", type=_seed)
    pl.add_argument("--n-traces", type=int)
    pl.add_argument("--stages", help=f"comma-separated subset of {','.join(STAGES)}")
    pl.add_argument("--out", help=out_help)
    pl.set_defaults(func=cmd_pipeline, stage="pipeline")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        arts = args.func(args)
        if arts:
            root = Path(os.path.commonpath([str(Path(a).resolve().parent) for a in arts]))
            write_manifest(root, [Path(a).resolve() for a in arts], merge=True)
    except TraceValidationError as exc:
        print(f"ixdrl {args.stage}: validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"ixdrl {args.stage}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"ixdrl: stage {exc.stage} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a stage failure
        print(f"ixdrl: stage {args.stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
