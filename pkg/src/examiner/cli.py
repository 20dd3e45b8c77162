"""Command-line entry points.

Commands: ``examiner search | metrics | sample | curriculum | sut-serve |
export-csv``. Exit codes: 0 success, 2 config error, 4 incomplete
prerequisite, 3 SUT/protocol error. Failures print one machine-readable JSON
line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import rundir as rd
from .config import RunConfig, load_run_config, resolve_run_config
from .curriculum import CurriculumConfig, run_curriculum
from .errors import (
    ConfigError,
    ExaminerError,
    IncompleteRun,
    ProtocolError,
    SampleRejection,
    UndefinedMetric,
)
from .landscape import load_landscape
from .metrics import robustness_report
from .phase1 import AdversarialSeed, run_phase1
from .phase2 import FailureMode, seed_to_mode_pipeline
from .protocol import serve_landscape_stdio
from .rundir import RunDirectory
from .space import load_decoder, load_tree


def _default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def _load_rundir_config(run: RunDirectory) -> tuple[RunConfig, str]:
    if not run.exists(rd.CONFIG_JSON):
        raise ConfigError(f"{run.path} has no {rd.CONFIG_JSON}; run 'examiner search' first")
    stored = run.read_json(rd.CONFIG_JSON)
    fingerprint = stored.pop("fingerprint", "")
    cfg = resolve_run_config(stored, run.path)
    return cfg, fingerprint


def _load_seeds(run: RunDirectory) -> list[AdversarialSeed]:
    payload = run.read_json(rd.SEEDS_JSON)
    return [AdversarialSeed.from_json_dict(d) for d in payload["seeds"]]


def _load_modes(run: RunDirectory) -> list[FailureMode]:
    payload = run.read_json(rd.FAILURE_MODES_JSON)
    return [FailureMode.from_json_dict(d) for d in payload["modes"]]


def cmd_search(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out_dir = args.out or cfg.out_dir
    if not out_dir:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    run = RunDirectory(out_dir)
    fingerprint = cfg.fingerprint()
    resolved = cfg.resolved_dict()
    if run.exists(rd.CONFIG_JSON):
        stored = run.read_json(rd.CONFIG_JSON)
        stored.pop("fingerprint", None)
        if stored != resolved:
            raise ConfigError(f"{run.path} already holds a different config; refusing to resume")
    else:
        run.write_json(rd.CONFIG_JSON, {**resolved, "fingerprint": fingerprint})
    status = run.status()
    if status["phase2_done"]:
        print(f"{run.path}: search already complete")
        return 0
    header = {"fingerprint": fingerprint, "master_seed": cfg.master_seed}
    tree = load_tree(cfg.tree_path)
    decoder = load_decoder(cfg.decoder_path)
    handle = cfg.make_handle()
    try:
        if status["phase1_done"]:
            seeds = _load_seeds(run)
        else:
            phase1_records: list[dict] = []
            seeds = run_phase1(cfg.phase1, decoder, handle, cfg.master_seed, tree,
                               workers=args.workers, log=phase1_records.append)
            run.write_jsonl(rd.PHASE1_LOG, header, phase1_records)
            run.write_json(rd.SEEDS_JSON, {**header, "seeds": [s.to_json_dict() for s in seeds]})
            run.mark("phase1_done", header)
        phase2_records: list[dict] = []
        modes = seed_to_mode_pipeline(seeds, handle, tree, cfg.phase2, cfg.master_seed,
                                      workers=args.workers, log=phase2_records.append)
        run.write_jsonl(rd.PHASE2_LOG, header, phase2_records)
        run.write_json(rd.FAILURE_MODES_JSON,
                       {**header, "modes": [m.to_json_dict() for m in modes]})
        run.mark("phase2_done", header)
    finally:
        handle.close()
    succeeded = sum(1 for s in seeds if s.succeeded)
    print(f"{run.path}: {succeeded}/{len(seeds)} agents succeeded, "
          f"{len(modes)} failure modes written")
    return 0


def cmd_metrics(args) -> int:
    run = RunDirectory(args.out)
    if not run.status()["phase2_done"]:
        raise IncompleteRun("phase2 incomplete: run 'examiner search' to completion first")
    cfg, fingerprint = _load_rundir_config(run)
    tree = load_tree(cfg.tree_path)
    seeds = _load_seeds(run)
    modes = _load_modes(run)
    count = args.samples or cfg.metrics_count
    sample_rows: list[dict] = []

    def sink(agent_id: int, pose: np.ndarray, e2: float, e3: float) -> None:
        sample_rows.append({"mode": agent_id, "pose": pose.tolist(), "err2d": e2, "err3d": e3})

    handle = cfg.make_handle()
    try:
        report = robustness_report(
            seeds, modes, handle, tree, cfg.master_seed,
            threshold=cfg.phase2.adversarial_threshold, count=count,
            fingerprint=fingerprint, sink=sink,
        )
    finally:
        handle.close()
    header = {"fingerprint": fingerprint, "master_seed": cfg.master_seed}
    run.write_jsonl(rd.METRICS_SAMPLES, header, sample_rows)
    run.write_json(rd.REPORT_JSON, report.to_json_dict())
    run.mark("metrics_done", header)
    print(f"{run.path}: report.json written "
          f"(success_rate={report.success_rate:.3f}, region_size={report.region_size})")
    return 0


def cmd_sample(args) -> int:
    from .curriculum import build_adversary_set

    run = RunDirectory(args.out)
    if not run.status()["phase2_done"]:
        raise IncompleteRun("phase2 incomplete: run 'examiner search' to completion first")
    cfg, fingerprint = _load_rundir_config(run)
    tree = load_tree(cfg.tree_path)
    modes = [m for m in _load_modes(run) if not m.incomplete]
    handle = cfg.make_handle()
    try:
        records, failures = build_adversary_set(modes, args.count, handle, tree, cfg.master_seed)
    finally:
        handle.close()
    dest = Path(args.dest) if args.dest else run.file(rd.ADVERSARY_SET)
    header = {"fingerprint": fingerprint, "master_seed": cfg.master_seed,
              "partial": bool(failures)}
    rd.write_jsonl_file(dest, header, [r.to_json_dict() for r in records])
    if failures:
        raise ProtocolError(f"adversary set incomplete ({dest} holds the partial set): "
                            + "; ".join(failures))
    print(f"{dest}: {len(records)} adversary records from {len(modes)} modes")
    return 0


def cmd_curriculum(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read curriculum config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"curriculum config {args.config} is not valid JSON: {exc}") from exc
    base_dir = Path(args.config).resolve().parent
    base = obj.get("base")
    if isinstance(base, str):
        base_cfg = load_run_config(str(base_dir / base) if not Path(base).is_absolute() else base,
                                   args.seed)
    elif isinstance(base, dict):
        base_cfg = resolve_run_config(base, base_dir, args.seed)
    else:
        raise ConfigError("curriculum config needs 'base': a run config path or object")
    try:
        cur = CurriculumConfig(
            loops=int(obj["loops"]),
            presets=tuple(obj.get("presets", [])),
            per_mode_samples=int(obj.get("per_mode_samples", 500)),
            mix_fraction=float(obj.get("mix_fraction", 0.1)),
            lr_discount=float(obj.get("lr_discount", 0.05)),
            batch_size=int(obj.get("batch_size", 1000)),
        )
    except KeyError as exc:
        raise ConfigError(f"curriculum config is missing {exc}") from exc
    base_poses = _load_pose_jsonl(base_dir / obj["base_set"]) if obj.get("base_set") else None
    out_dir = args.out or obj.get("out_dir") or base_cfg.out_dir
    if not out_dir:
        raise ConfigError("no output directory: pass --out or set out_dir")
    run = RunDirectory(out_dir)
    fingerprint = base_cfg.fingerprint()
    header = {"fingerprint": fingerprint, "master_seed": base_cfg.master_seed}
    tree = load_tree(base_cfg.tree_path)
    decoder = load_decoder(base_cfg.decoder_path)
    adversary_rows: list[dict] = []
    handle = base_cfg.make_handle()
    try:
        report = run_curriculum(
            cur, base_cfg.phase1, base_cfg.phase2, decoder, tree, handle,
            base_cfg.master_seed, base_poses=base_poses, workers=args.workers,
            metrics_count=base_cfg.metrics_count, fingerprint=fingerprint,
            adversary_sink=adversary_rows.append,
        )
    finally:
        handle.close()
    run.write_jsonl(rd.ADVERSARY_SET, header, adversary_rows)
    run.write_json(rd.CURRICULUM_REPORT, {**header, **report.to_json_dict()})
    print(f"{run.path}: {len(report.loops)} loops, {len(adversary_rows)} adversary records")
    if report.stopped_reason and "failed" in report.stopped_reason:
        raise ProtocolError(f"curriculum stopped early: {report.stopped_reason}")
    return 0


def _load_pose_jsonl(path: Path) -> np.ndarray:
    poses = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if isinstance(obj, dict):
                    if obj.get("type") == "header":
                        continue
                    obj = obj["pose"]
                poses.append(np.asarray(obj, dtype=float))
    except OSError as exc:
        raise ConfigError(f"cannot read base set {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"base set {path} is not a pose JSONL: {exc}") from exc
    if not poses:
        raise ConfigError(f"base set {path} holds no poses")
    return np.stack(poses)


def cmd_sut_serve(args) -> int:
    return serve_landscape_stdio(load_landscape(args.landscape))


def cmd_export_csv(args) -> int:
    run = RunDirectory(args.out)
    if not run.status()["metrics_done"]:
        raise IncompleteRun("metrics incomplete: run 'examiner metrics' first")
    report = run.read_json(rd.REPORT_JSON)
    fingerprint, seed = report.get("fingerprint", ""), report.get("master_seed")
    stat_cols = ["pnae", "min_mpjpe", "mean_mpjpe", "max_mpjpe", "median_mpjpe", "samples_used"]
    columns = ["fingerprint", "master_seed", "scope", "agent_id",
               "success_rate", "region_size", "threshold"] + stat_cols
    rows = []
    for entry in report["per_mode"]:
        rows.append([fingerprint, seed, "mode", entry["agent_id"],
                     report["success_rate"], report["region_size"], report["threshold"]]
                    + [entry[c] for c in stat_cols])
    if report.get("aggregate"):
        rows.append([fingerprint, seed, "aggregate", None,
                     report["success_rate"], report["region_size"], report["threshold"]]
                    + [report["aggregate"][c] for c in stat_cols])
    run.write_csv(rd.REPORT_CSV, columns, rows)

    _, p1 = run.read_jsonl(rd.PHASE1_LOG)
    run.write_csv(
        rd.PHASE1_TRACE_CSV,
        ["fingerprint", "master_seed", "agent", "iter",
         "mean_err2d", "mean_err3d", "mean_reward", "baseline"],
        [[fingerprint, seed, r["agent"], r["iter"], r["mean_err2d"], r["mean_err3d"],
          r["mean_reward"], r["baseline"]] for r in p1],
    )
    _, p2 = run.read_jsonl(rd.PHASE2_LOG)
    run.write_csv(
        rd.PHASE2_TRACE_CSV,
        ["fingerprint", "master_seed", "agent", "iter",
         "joint", "side", "delta", "slab_min_err", "accepted"],
        [[fingerprint, seed, r["agent"], r["iter"], r["joint"], r["side"], r["delta"],
          r["slab_min_err"], r["accepted"]] for r in p2],
    )
    print(f"{run.path}: report.csv, phase1_trace.csv, phase2_trace.csv written")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="examiner",
        description="Black-box robustness examiner: search, boundaries, metrics, curriculum.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=False, out_required=False):
        if config:
            p.add_argument("--config", required=True, help="config JSON path")
        p.add_argument("--out", required=out_required, help="run directory")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--workers", type=int, default=_default_workers(),
                       help="parallelism degree (results are worker-count independent)")

    p = sub.add_parser("search", help="run phase 1 + phase 2 into a run directory")
    common(p, config=True)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("metrics", help="compute report.json for a completed search")
    common(p, out_required=True)
    p.add_argument("--samples", type=int, default=None, help="samples per mode")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("sample", help="export an adversary set from a completed search")
    common(p, out_required=True)
    p.add_argument("--count", type=int, default=500, help="samples per failure mode")
    p.add_argument("--dest", default=None, help="output JSONL (default: <out>/adversary_set.jsonl)")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("curriculum", help="run the fine-tuning loop")
    common(p, config=True)
    p.set_defaults(fn=cmd_curriculum)

    p = sub.add_parser("sut-serve", help="serve a landscape file over the stdio protocol")
    p.add_argument("--landscape", required=True, help="landscape JSON path")
    p.set_defaults(fn=cmd_sut_serve)

    p = sub.add_parser("export-csv", help="flatten a run directory to CSV")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(fn=cmd_export_csv)
    return parser


_EXIT_CODES = (
    (ConfigError, 2),
    (UndefinedMetric, 2),
    (IncompleteRun, 4),
    (ProtocolError, 3),
    (SampleRejection, 3),
    (ExaminerError, 3),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ExaminerError as exc:
        code = next(c for t, c in _EXIT_CODES if isinstance(exc, t))
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
              file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
