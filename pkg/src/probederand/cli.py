"""Command-line driver: ingest, cluster, evaluate, tune, generate.

Configuration precedence is command-line flags over config-file values
over built-in defaults. Every output file starts with a comment line
recording the tool version and the full effective configuration, and
identical inputs with the same seed produce byte-identical outputs.

Exit codes: 0 success, 1 processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .clustering import (
    DbscanConfig,
    KmeansConfig,
    ie_only_cluster,
    two_stage_labelings,
    write_labeling_file,
)
from .features import (
    group_bursts,
    ie_stability_violations,
    read_feature_file,
    write_feature_file,
)
from .metrics import (
    METHOD_IE_ONLY,
    METHOD_TWO_STAGE,
    METHODS,
    EvalConfig,
    run_protocol,
    tune_dbscan,
    write_report_files,
    write_tuning_file,
)
from .pcap import Error as CaptureError
from .pcap import ParseDiagnostics, read_dataset
from .randomness import DEFAULT_SEED
from .synth import generate_scenario, load_scenario

DEFAULTS = {
    "eps": 0.05,
    "min_pts": 10,
    "k_max": 5,
    "d": 10,
    "gap_seconds": 2.0,
    "seed": DEFAULT_SEED,
    "method": METHOD_TWO_STAGE,
    "jobs": 1,
}


def _effective_config(args: argparse.Namespace, keys: list[str]) -> dict:
    """Merge defaults, config-file values, and explicit flags."""
    config = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        for k in keys:
            if k in loaded:
                config[k] = loaded[k]
    for k in keys:
        value = getattr(args, k, None)
        if value is not None:
            config[k] = value
    return config


def _header(subcommand: str, config: dict) -> str:
    settings = " ".join(f"{k}={config[k]}" for k in sorted(config))
    return f"probederand {__version__} | {subcommand} | {settings} | ie_encoding=byte-sum"


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _effective_config(args, ["gap_seconds"])
    diagnostics = ParseDiagnostics()
    labeled = read_dataset(args.dataset_root, diagnostics)
    frames = [frame for frame, _ in labeled]
    truths = [label for _, label in labeled]
    bursts = group_bursts(frames, config["gap_seconds"], truths)
    out = _out_dir(args)
    write_feature_file(bursts, out / "bursts.csv", _header("ingest", config))

    audit = ie_stability_violations(bursts)
    print(f"frames: {len(frames)}  bursts: {len(bursts)}")
    print(
        "diagnostics: "
        f"records={diagnostics.records_total} "
        f"probe_requests={diagnostics.probe_requests} "
        f"skipped_other={diagnostics.skipped_other} "
        f"truncated={diagnostics.skipped_truncated} "
        f"fcs_bad={diagnostics.skipped_fcs_bad} "
        f"bad_radiotap={diagnostics.skipped_bad_radiotap} "
        f"ie_overruns={diagnostics.ie_overruns}"
    )
    if diagnostics.empty_files:
        print(f"empty captures: {', '.join(diagnostics.empty_files)}")
    if audit:
        print(f"ie-feature instability in {len(audit)} burst(s): {audit[:10]}")
    print("note: frames seen by several sniffers are kept, not deduplicated")
    print(f"wrote {out / 'bursts.csv'}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    keys = ["eps", "min_pts", "k_max", "seed", "method"]
    config = _effective_config(args, keys)
    bursts = read_feature_file(args.features)
    dbscan_cfg = DbscanConfig(eps=config["eps"], min_pts=config["min_pts"])
    kmeans_cfg = KmeansConfig(k_max=config["k_max"], seed=config["seed"])
    if config["method"] == METHOD_IE_ONLY:
        coarse = ie_only_cluster(bursts, dbscan_cfg)
        final = coarse
    else:
        coarse, final = two_stage_labelings(bursts, dbscan_cfg, kmeans_cfg)
    out = _out_dir(args)
    write_labeling_file(bursts, coarse, final, out / "labeling.csv", _header("cluster", config))

    sizes: dict[int, int] = {}
    noise = 0
    for label in final.assignments.values():
        if label < 0:
            noise += 1
        else:
            sizes[label] = sizes.get(label, 0) + 1
    summary = {
        "n_clusters": final.n_clusters,
        "n_coarse_clusters": coarse.n_clusters,
        "noise_bursts": noise,
        "cluster_sizes": [sizes[k] for k in sorted(sizes)],
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"clusters: {final.n_clusters}  noise bursts: {noise}")
    print(f"wrote {out / 'labeling.csv'} and {out / 'summary.json'}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    keys = ["eps", "min_pts", "k_max", "d", "seed", "jobs"]
    config = _effective_config(args, keys)
    bursts = read_feature_file(args.features)
    dbscan_cfg = DbscanConfig(eps=config["eps"], min_pts=config["min_pts"])
    kmeans_cfg = KmeansConfig(k_max=config["k_max"], seed=config["seed"])
    eval_cfg = EvalConfig(d=config["d"], seed=config["seed"])
    sections = [
        (method, run_protocol(bursts, eval_cfg, dbscan_cfg, kmeans_cfg, method, config["jobs"]))
        for method in METHODS
    ]
    out = _out_dir(args)
    write_report_files(
        sections,
        out / "report_runs.csv",
        out / "report_summary.csv",
        _header("evaluate", config),
    )
    for method, reports in sections:
        mean_v = sum(r.v_measure for r in reports) / len(reports)
        print(f"{method}: {len(reports)} runs, mean V-measure {mean_v:.4f}")
    print(f"wrote {out / 'report_runs.csv'} and {out / 'report_summary.csv'}")
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    keys = ["d", "seed"]
    config = _effective_config(args, keys)
    bursts = read_feature_file(args.features)
    eps_grid = [float(x) for x in args.eps_grid.split(",") if x != ""]
    minpts_grid = [int(x) for x in args.minpts_grid.split(",") if x != ""]
    eval_cfg = EvalConfig(d=config["d"], seed=config["seed"])
    rows = tune_dbscan(bursts, eps_grid, minpts_grid, eval_cfg)
    out = _out_dir(args)
    config["eps_grid"] = args.eps_grid
    config["minpts_grid"] = args.minpts_grid
    write_tuning_file(rows, out / "tuning.csv", _header("tune", config))
    best = rows[0]
    print(
        f"recommended: eps={best.eps} min_pts={best.min_pts} "
        f"(mean V {best.mean_v:.4f}, mean |delta| {best.mean_abs_delta:.4f})"
    )
    print(f"wrote {out / 'tuning.csv'}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    root = generate_scenario(scenario, args.out, overwrite=args.overwrite)
    n_files = sum(1 for _ in root.rglob("*.pcap"))
    print(f"generated {len(scenario.profiles)} device(s), {n_files} capture file(s) under {root}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="JSON config file (flags take precedence)")
    parser.add_argument("--seed", type=int, default=None, help=f"run seed (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probederand",
        description="De-randomize probe-request MAC addresses by two-stage burst clustering.",
    )
    parser.add_argument("--version", action="version", version=f"probederand {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_ingest = sub.add_parser("ingest", help="parse a dataset tree into a burst feature file")
    p_ingest.add_argument("dataset_root", help="directory laid out as <root>/<device-id>/<channel>.pcap")
    p_ingest.add_argument("--gap-seconds", dest="gap_seconds", type=float, default=None)
    _add_common(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest, inputs=["dataset_root"])

    p_cluster = sub.add_parser("cluster", help="run the clustering pipeline on a feature file")
    p_cluster.add_argument("features", help="burst feature file from ingest")
    p_cluster.add_argument("--eps", type=float, default=None)
    p_cluster.add_argument("--min-pts", dest="min_pts", type=int, default=None)
    p_cluster.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_cluster.add_argument("--method", choices=METHODS, default=None)
    _add_common(p_cluster)
    p_cluster.set_defaults(func=cmd_cluster, inputs=["features"])

    p_eval = sub.add_parser("evaluate", help="run the subset protocol for both methods")
    p_eval.add_argument("features", help="labeled burst feature file")
    p_eval.add_argument("--eps", type=float, default=None)
    p_eval.add_argument("--min-pts", dest="min_pts", type=int, default=None)
    p_eval.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_eval.add_argument("--d", type=int, default=None, help="subsets per population size")
    p_eval.add_argument("--jobs", type=int, default=None, help="parallel protocol runs")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate, inputs=["features"])

    p_tune = sub.add_parser("tune", help="sweep DBSCAN hyperparameters")
    p_tune.add_argument("features", help="labeled burst feature file")
    p_tune.add_argument("--eps-grid", required=True, help="comma-separated eps values")
    p_tune.add_argument("--minpts-grid", required=True, help="comma-separated MinPts values")
    p_tune.add_argument("--d", type=int, default=None)
    _add_common(p_tune)
    p_tune.set_defaults(func=cmd_tune, inputs=["features"])

    p_gen = sub.add_parser("generate", help="synthesize a labeled capture dataset")
    p_gen.add_argument("scenario", help="scenario JSON document")
    p_gen.add_argument("--overwrite", action="store_true")
    _add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate, inputs=["scenario"])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in args.inputs:
        if not Path(getattr(args, name)).exists():
            parser.error(f"{name} path does not exist: {getattr(args, name)}")
    try:
        return args.func(args)
    except (CaptureError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
