"""Command-line front end.

Three workflows plus report rendering:

* ``ground-truth``: Monte Carlo failure-rate estimation over the whole grid,
  written as a flat-index-ordered CSV.
* ``estimate``: run one estimation method within an episode budget; writes
  trace/mask/checkpoint CSVs and a JSON manifest that reproduces the run.
* ``evaluate``: precision/recall of one or more estimates against a
  ground-truth CSV, with per-checkpoint metric curves; multiple estimates are
  summarized by median/min/max.
* ``report``: render figures (PNG) and metric CSVs from existing outputs.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 simulator error.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from . import runio
from .core import SafeSetEstimate
from .driver import GroundTruth, evaluate, mc_ground_truth, run_estimation
from .runconfig import ConfigError, load_run_config, manifest_config

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SIMULATOR = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safesets",
        description="Black-box estimation of safe perception-performance sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gt = sub.add_parser("ground-truth", help="Monte Carlo failure rates over the grid")
    p_gt.add_argument("--config", required=True, help="run configuration JSON")
    p_gt.add_argument("--out", required=True, help="output CSV path")
    p_gt.add_argument("--n-per-point", type=int, default=None, help="episodes per grid point")
    p_gt.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_gt.add_argument("--threads", type=int, default=None, help="simulator thread cap")

    p_est = sub.add_parser("estimate", help="run one safe-set estimation method")
    p_est.add_argument("--config", required=True, help="run configuration JSON")
    p_est.add_argument("--out", required=True, help="output prefix (writes <prefix>.trace.csv etc.)")
    p_est.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_est.add_argument("--budget", type=int, default=None, help="override the episode budget")
    p_est.add_argument("--checkpoint-every", type=int, default=None)

    p_ev = sub.add_parser("evaluate", help="score estimates against ground truth")
    p_ev.add_argument("estimates", nargs="+", help="estimate output prefix(es)")
    p_ev.add_argument("--truth", required=True, help="ground-truth CSV")
    p_ev.add_argument("--out", default=None, help="write the summary JSON here too")

    p_rep = sub.add_parser("report", help="render figures from existing outputs")
    p_rep.add_argument("--truth", default=None, help="ground-truth CSV")
    p_rep.add_argument("--estimate", default=None, help="estimate output prefix")
    p_rep.add_argument("--out", required=True, help="output directory for figures")
    return parser


def _override(cfg_value, flag_value):
    return cfg_value if flag_value is None else flag_value


def cmd_ground_truth(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    n = _override(cfg.n_per_point, args.n_per_point)
    if n is None:
        raise ConfigError("episodes per point not set: use --n-per-point or 'n_per_point' in the config")
    seed = _override(cfg.seed, args.seed)
    threads = _override(cfg.threads, args.threads)
    truth = mc_ground_truth(
        cfg.problem, cfg.grid, n, cfg.safety, seed, sim_cfg=cfg.sim_cfg, threads=threads
    )
    runio.write_ground_truth_csv(args.out, cfg.grid, truth)
    manifest = dict(manifest_config(cfg))
    manifest["n_per_point"] = n
    manifest["seed"] = seed
    runio.write_manifest(Path(args.out).with_suffix(".manifest.json"), manifest)
    print(f"wrote {args.out} ({cfg.grid.n_points} points, {n} episodes each)")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    method = cfg.require_method()
    budget = args.budget if args.budget is not None else cfg.require_budget()
    seed = _override(cfg.seed, args.seed)
    checkpoint_every = _override(cfg.checkpoint_every, args.checkpoint_every)
    estimate, trace = run_estimation(
        cfg.problem,
        cfg.grid,
        method,
        cfg.safety,
        budget,
        seed,
        checkpoint_every=checkpoint_every,
        sim_cfg=cfg.sim_cfg,
    )
    prefix = Path(args.out)
    if prefix.parent and not prefix.parent.exists():
        prefix.parent.mkdir(parents=True, exist_ok=True)
    runio.write_trace_csv(f"{prefix}.trace.csv", trace)
    runio.write_mask_csv(f"{prefix}.mask.csv", cfg.grid, estimate)
    runio.write_checkpoints_csv(f"{prefix}.checkpoints.csv", cfg.grid.n_points, trace.checkpoints)
    manifest = dict(manifest_config(cfg))
    manifest["budget"] = budget
    manifest["seed"] = seed
    runio.write_manifest(
        f"{prefix}.manifest.json",
        manifest,
        extra={"episodes_used": trace.episodes_used, "safe_count": estimate.size},
    )
    print(
        f"wrote {prefix}.{{trace,mask,checkpoints}}.csv + manifest "
        f"({trace.episodes_used} episodes, {estimate.size} safe points)"
    )
    return EXIT_OK


def _load_estimate(prefix: str) -> dict:
    mask = runio.read_mask_csv(f"{prefix}.mask.csv")
    trace = runio.read_trace_csv(f"{prefix}.trace.csv")
    n_points, checkpoints = runio.read_checkpoints_csv(f"{prefix}.checkpoints.csv")
    return {"mask": mask, "trace": trace, "n_points": n_points, "checkpoints": checkpoints}


def _check_same_grid(truth: dict, mask: dict, prefix: str) -> None:
    if truth["dim_names"] != mask["dim_names"] or truth["points"].shape != mask["points"].shape:
        raise ConfigError(
            f"grid mismatch between truth ({truth['dim_names']}, {truth['points'].shape[0]} points) "
            f"and estimate {prefix} ({mask['dim_names']}, {mask['points'].shape[0]} points)"
        )
    if not np.allclose(truth["points"], mask["points"]):
        raise ConfigError(f"grid mismatch: coordinates differ between truth and estimate {prefix}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    truth_data = runio.read_ground_truth_csv(args.truth)
    truth = GroundTruth(
        p_fail_hat=truth_data["p_fail_hat"],
        n_per_point=truth_data["n_per_point"],
        safe_mask=truth_data["safe_mask"],
        gamma=float("nan"),
    )
    per_run = []
    for prefix in args.estimates:
        est = _load_estimate(prefix)
        _check_same_grid(truth_data, est["mask"], prefix)
        result = evaluate(
            SafeSetEstimate(mask=est["mask"]["mask"], statistic=est["mask"]["statistic"]), truth
        )
        episodes_used = int(est["trace"]["episode_numbers"][-1]) if est["trace"]["episode_numbers"].size else 0
        payload = dict(result.to_dict(), episodes_used=episodes_used)
        with open(f"{prefix}.eval.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        # per-checkpoint curve for plotting
        with open(f"{prefix}.curve.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "n_safe", "precision", "recall"])
            for ck in est["checkpoints"]:
                mask = np.zeros(truth.safe_mask.shape[0], dtype=bool)
                mask[ck.safe_indices] = True
                res = evaluate(SafeSetEstimate(mask=mask, statistic=np.zeros(mask.shape[0])), truth)
                writer.writerow(
                    [ck.episode, len(ck.safe_indices), f"{res.precision:.6f}", f"{res.recall:.6f}"]
                )
        per_run.append({"prefix": prefix, **payload})

    if len(per_run) == 1:
        summary = per_run[0]
    else:
        def agg(key):
            vals = [r[key] for r in per_run]
            return {
                "median": statistics.median(vals),
                "min": min(vals),
                "max": max(vals),
            }

        summary = {
            "runs": per_run,
            "precision": agg("precision"),
            "recall": agg("recall"),
            "episodes_used": agg("episodes_used"),
        }
    text = json.dumps(summary, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    if args.truth is None and args.estimate is None:
        raise ConfigError("report needs --truth and/or --estimate")
    truth = runio.read_ground_truth_csv(args.truth) if args.truth else None
    mask = checkpoints = None
    gamma = None
    if args.estimate:
        est = _load_estimate(args.estimate)
        mask = est["mask"]
        checkpoints = est["checkpoints"]
        try:
            manifest = runio.read_manifest(f"{args.estimate}.manifest.json")
            gamma = manifest["config"].get("gamma")
        except (OSError, ValueError):
            gamma = None
        if truth is not None:
            _check_same_grid(truth, mask, args.estimate)
    if truth is not None and gamma is None:
        try:
            manifest = runio.read_manifest(Path(args.truth).with_suffix(".manifest.json"))
            gamma = manifest["config"].get("gamma")
        except (OSError, ValueError):
            gamma = None
    written = report_mod.render_report(
        args.out,
        truth=truth,
        mask=mask,
        checkpoints=checkpoints,
        truth_mask=truth["safe_mask"] if truth is not None else None,
        gamma=gamma,
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "ground-truth": cmd_ground_truth,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as exc:
        print(f"simulator error: {exc}", file=sys.stderr)
        return EXIT_SIMULATOR


if __name__ == "__main__":
    sys.exit(main())
