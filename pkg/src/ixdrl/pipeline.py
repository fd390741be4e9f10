"""Stage orchestration: generate, validate, analyze, cluster, explain, report.

Each stage reads and writes plain files under one output directory so that
stages can also be run one at a time from the command line. Every run ends
with ``manifest.json`` listing each artifact and its SHA-256 digest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from . import attribution as A
from .analysis import (ONLINE, InterestingnessAnalyzer, coverage_summary, interestingness_profile,
                       read_records_csv, record_columns, split_factor_key, write_records_csv)
from .clustering import ClusterAssignment, cluster_report, cluster_traces, silhouette_score
from .plots import render_beeswarm, render_radar, render_timeseries, render_waterfall, save_plot
from .rollout import generate_from_config
from .traces import TraceSet, TraceValidationError, load_traceset, save_traceset, validate_traceset

logger = logging.getLogger(__name__)

STAGES = ("gen", "validate", "analyze", "cluster", "explain", "report")
OUTPUT_ROOT_ENV = "IXDRL_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "ixdrl-out"


class StageError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConfigError(ValueError):
    pass


def bundled_path(name: str) -> Path:
    """Path of a file shipped in ``ixdrl/data``."""
    return Path(str(resources.files("ixdrl") / "data" / name))


def parse_k_range(text: str) -> range:
    """``"2..15"`` (inclusive) or ``"4"`` to a range of cluster counts."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = (int(p) for p in text.split("..", 1))
    else:
        lo = hi = int(text)
    if lo < 2 or hi < lo:
        raise ConfigError(f"invalid k range {text!r}; expected e.g. 2..15 with 2 <= lo <= hi")
    return range(lo, hi + 1)


@dataclass
class PipelineConfig:
    """All knobs of a pipeline run.

    ``env`` is an environment-spec document (or a path to one, resolved
    against ``base_dir``). ``traces`` points at an existing trace file and is
    used when ``gen`` is not among the stages.
    """

    stages: tuple = STAGES
    output: str | None = None
    seed: int = 0
    env: Any = None
    n_traces: int = 100
    traces: str | None = None
    analyze: dict = field(default_factory=dict)
    cluster: dict = field(default_factory=lambda: {"k_range": "2..15"})
    explain: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        self.stages = tuple(self.stages)
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; choose from {list(STAGES)}")
        self.stages = tuple(s for s in STAGES if s in self.stages)
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if self.n_traces < 1:
            raise ConfigError("n_traces must be >= 1")
        if "gen" in self.stages and self.env is None:
            raise ConfigError("stage 'gen' needs an 'env' specification")
        if "gen" not in self.stages and self.traces is None and \
                any(s in self.stages for s in ("validate", "analyze", "explain", "report")):
            raise ConfigError("without 'gen' a 'traces' path is required")

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path = ".") -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        return cls(**dict(d), base_dir=str(base_dir))

    @classmethod
    def from_file(cls, path: str | Path, overrides: Mapping | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(doc, base_dir=path.parent)

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def env_spec(self) -> dict:
        if isinstance(self.env, (str, Path)):
            path = self.resolve(self.env)
            try:
                return json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise StageError("gen", f"cannot read environment spec {path}: {exc}") from exc
        return dict(self.env)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["stages"] = list(self.stages)
        return d


def output_root(explicit: str | None = None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


# -- manifest -----------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, artifacts: Sequence[Path], extra: Mapping | None = None,
                   merge: bool = False) -> Path:
    """Manifest of ``artifacts`` relative to ``out``, sorted by path.

    With ``merge`` the artifacts of an existing manifest that still exist are
    kept (and re-hashed), so single-stage commands can share a directory.
    """
    path = out / "manifest.json"
    artifacts = [Path(a) for a in artifacts]
    if merge and path.exists():
        try:
            old = json.loads(path.read_text(encoding="utf-8")).get("artifacts", [])
        except json.JSONDecodeError:
            old = []
        artifacts += [out / e["path"] for e in old if (out / e["path"]).exists()]
    entries = []
    for p in sorted(set(Path(a) for a in artifacts), key=lambda q: q.relative_to(out).as_posix()):
        entries.append({"path": p.relative_to(out).as_posix(), "sha256": sha256_file(p),
                        "bytes": p.stat().st_size})
    doc = {"format": "ixdrl-manifest", "version": 1, **(extra or {}), "artifacts": entries}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def _load_traces(stage: str, path: Path) -> TraceSet:
    if not path.exists():
        raise StageError(stage, f"missing input file {path}")
    return load_traceset(path)


def _load_records(stage: str, path: Path):
    if not path.exists():
        raise StageError(stage, f"missing input file {path}")
    return read_records_csv(path)


# -- stages -------------------------------------------------------------------

def stage_gen(env_spec: Mapping, n_traces: int, seed: int, path: Path) -> list[Path]:
    ts = generate_from_config(env_spec, n_traces, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_traceset(ts, path)
    return [path]


def stage_validate(traces: Path) -> TraceSet:
    ts = _load_traces("validate", traces)
    validate_traceset(ts)
    return ts


def stage_analyze(traces: Path, out: Path, options: Mapping | None = None,
                  csv_name: str = "interestingness.csv") -> list[Path]:
    ts = _load_traces("analyze", traces)
    opts = dict(options or {})
    if opts.pop("online", False):
        opts["value_mode"] = ONLINE
    try:
        analyzer = InterestingnessAnalyzer(**opts)
    except TypeError as exc:
        raise ConfigError(f"bad analyzer option: {exc}") from exc
    records = analyzer.fit(ts).transform(ts)
    csv = out / csv_name
    csv.parent.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, csv)
    cov = coverage_summary(records)
    cov["normalization"] = asdict(analyzer.norm_state_)
    cov["options"] = analyzer.get_params()
    cov_name = "coverage.json" if csv_name == "interestingness.csv" else f"{Path(csv_name).stem}_coverage.json"
    return [csv, _write_json(out / cov_name, cov)]


def stage_cluster(interestingness: Path, cdir: Path, k_range: range, traces: Path | None = None,
                  n_clusters: int | None = None) -> list[Path]:
    """Cluster traces; ``n_clusters`` overrides the silhouette-optimal ``k`` for the labels."""
    records = _load_records("cluster", interestingness)
    feats, model = cluster_traces(records, k_range=k_range, n_clusters=n_clusters)
    ids = [f.trace_id for f in feats]
    arts = [_write_json(cdir / "dendrogram.json", {"trace_ids": ids, **model.dendrogram_.to_dict()})]
    arts.append(_write_csv(cdir / "silhouette.csv", model.silhouette_table()))
    frame = pd.DataFrame({"trace_id": ids, "cluster": model.labels_})
    for j, d in enumerate(feats[0].dimensions):
        frame[d] = [f.means[j] for f in feats]
    arts.append(_write_csv(cdir / "clusters.csv", frame))
    profiles = {}
    for c in sorted(set(model.labels_.tolist())):
        sub = frame[frame["cluster"] == c]
        profiles[f"cluster {c}"] = {d: float(sub[d].mean()) for d in feats[0].dimensions}
    svg, table = render_radar(profiles)
    arts += save_plot(svg, table, cdir / "radar_clusters")
    if traces is not None:
        ts = _load_traces("cluster", traces)
        k = len(profiles)
        sil = silhouette_score(model.distances_, model.labels_) if 1 < k < len(ids) else 0.0
        assignment = ClusterAssignment(k, dict(zip(ids, model.labels_.tolist())), sil)
        arts.append(_write_csv(cdir / "cluster_report.csv", cluster_report(assignment, ts, records)))
    return arts


def _explain_dims(records, wanted) -> list[str]:
    cols = record_columns(records)
    if wanted in (None, "all"):
        return [c for c in cols if split_factor_key(c)[1] is None]
    wanted = [wanted] if isinstance(wanted, str) else list(wanted)
    unknown = [d for d in wanted if d not in cols]
    if unknown:
        raise ConfigError(f"dimension(s) {unknown} not present; available: {cols}")
    return wanted


def stage_explain(traces: Path, interestingness: Path, edir: Path, options: Mapping | None = None,
                  features: Path | None = None, seed: int = 0) -> list[Path]:
    opts = dict(options or {})
    ts = _load_traces("explain", traces)
    records = _load_records("explain", interestingness)
    arts = []
    if features is not None:
        if not Path(features).exists():
            raise StageError("explain", f"missing input file {features}")
        fm = A.features_from_frame(pd.read_csv(features, dtype={"trace_id": str}, float_precision="round_trip"), records)
    else:
        fm = A.build_features(ts, records, {"features": opts.get("features")} if opts.get("features") else None)
        arts.append(_write_csv(edir / "features.csv", fm.features_frame()))
    summary = []
    for dim in _explain_dims(records, opts.get("dims")):
        safe = dim.replace("[", "_").replace("]", "")
        trained = A.train_gbt(fm, dim, split=float(opts.get("split", 0.8)), params=opts.get("gbt"),
                              seed=seed)
        arts.append(_write_json(edir / f"model_{safe}.json", trained.to_dict()))
        abnormal = A.abnormal_table(records, dim)
        arts.append(_write_csv(edir / f"abnormal_{safe}.csv", abnormal))
        summary.append({"dim": dim, "n_rows": len(trained.train_rows) + len(trained.test_rows),
                        "test_mae": trained.test_mae, "baseline_mae": trained.baseline_mae,
                        "passes_gate": trained.passes_gate, "n_abnormal": len(abnormal)})
        if not trained.passes_gate:
            logger.info("%s excluded from attribution by the quality gate", dim)
            continue
        gi = A.global_importance(trained, fm)
        arts.append(_write_csv(edir / f"ranking_{safe}.csv", gi.ranking))
        svg, table = render_beeswarm(gi.beeswarm, gi.ranking)
        arts += save_plot(svg, table, edir / f"beeswarm_{safe}")
        # most extreme flagged steps first
        if len(abnormal):
            med = float(np.median([v for r in records if (v := r.get(dim)) is not None]))
            order = np.argsort(-np.abs(abnormal["value"].to_numpy() - med), kind="stable")
            for i in order[:int(opts.get("max_waterfalls", 3))]:
                tid, step = str(abnormal["trace_id"].iloc[i]), int(abnormal["step"].iloc[i])
                wf = A.local_explanation(trained, fm, tid, step)
                svg, table = render_waterfall(wf)
                arts += save_plot(svg, table, edir / f"waterfall_{safe}_{tid}_{step}")
    arts.append(_write_csv(edir / "summary.csv", pd.DataFrame(summary)))
    return arts


def stage_report(traces: Path, interestingness: Path, rdir: Path, options: Mapping | None = None,
                 clusters: Path | None = None) -> list[Path]:
    opts = dict(options or {})
    ts = _load_traces("report", traces)
    records = _load_records("report", interestingness)
    arts = []
    dims = [c for c in record_columns(records) if split_factor_key(c)[1] is None]
    by_trace: dict[str, list] = {}
    for r in records:
        by_trace.setdefault(r.trace_id, []).append(r)
    rows = []
    for t in ts:
        rs = by_trace.get(t.trace_id, [])
        row = {"trace_id": t.trace_id, "length": len(t)}
        for d in dims:
            xs = [v for v in (r.get(d) for r in rs) if v is not None]
            row[d] = float(np.mean(xs)) if xs else np.nan
        rows.append(row)
    summary = pd.DataFrame(rows)
    arts.append(_write_csv(rdir / "traces_summary.csv", summary))
    overall = {"all traces": {d: m for d, (m, _) in interestingness_profile(records, False).items()}}
    svg, table = render_radar(overall)
    arts += save_plot(svg, table, rdir / "radar_overall")
    if clusters is not None and Path(clusters).exists():
        labels = pd.read_csv(clusters, dtype={"trace_id": str})
        profiles = {}
        for c in sorted(labels["cluster"].unique()):
            ids = set(labels.loc[labels["cluster"] == c, "trace_id"])
            prof = interestingness_profile([r for r in records if r.trace_id in ids], False)
            profiles[f"cluster {c}"] = {d: m for d, (m, _) in prof.items()}
        svg, table = render_radar(profiles)
        arts += save_plot(svg, table, rdir / "radar_clusters")
    sort_by = opts.get("sort_by", "confidence" if "confidence" in dims else dims[0])
    n_plot = int(opts.get("timeseries_traces", 3))
    chosen = summary.sort_values([sort_by, "trace_id"], kind="stable")["trace_id"].head(n_plot)
    for tid in chosen:
        svg, table = render_timeseries(records, tid, opts.get("dims"))
        arts += save_plot(svg, table, rdir / f"timeseries_{tid}")
    return arts


# -- driver -------------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig) -> tuple[int, Path]:
    """Run the configured stages in order; returns ``(exit status, manifest path)``.

    Raises :class:`StageError` or :class:`TraceValidationError` on failure;
    the command line maps those to exit statuses.
    """
    out = output_root(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    traces = out / "traces.jsonl" if "gen" in cfg.stages else cfg.resolve(cfg.traces) if cfg.traces else None
    interestingness = out / "interestingness.csv"
    artifacts: list[Path] = []

    def run(stage, fn, *args, **kwargs):
        logger.info("stage %s", stage)
        try:
            return fn(*args, **kwargs)
        except (StageError, TraceValidationError, ConfigError):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc

    if "gen" in cfg.stages:
        artifacts += run("gen", stage_gen, cfg.env_spec(), cfg.n_traces, cfg.seed, traces)
    if "validate" in cfg.stages:
        run("validate", stage_validate, traces)
    if "analyze" in cfg.stages:
        artifacts += run("analyze", stage_analyze, traces, out, cfg.analyze)
    clusters = None
    if "cluster" in cfg.stages:
        k_range = parse_k_range(cfg.cluster.get("k_range", "2..15"))
        artifacts += run("cluster", stage_cluster, interestingness, out / "cluster", k_range, traces,
                         cfg.cluster.get("n_clusters"))
        clusters = out / "cluster" / "clusters.csv"
    if "explain" in cfg.stages:
        artifacts += run("explain", stage_explain, traces, interestingness, out / "explain", cfg.explain,
                         seed=cfg.seed)
    if "report" in cfg.stages:
        artifacts += run("report", stage_report, traces, interestingness, out / "report", cfg.report, clusters)
    manifest = write_manifest(out, artifacts, {"seed": cfg.seed, "stages": list(cfg.stages)})
    return 0, manifest
