"""Command-line entry point.

Exit codes: 0 success, 1 a verdict failed (criteria named on stderr),
2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from ._backend import BACKEND
from .analysis.experiments import EXPERIMENTS, reference_fisher
from .analysis.report import ExperimentReport, Verdict
from .config import ConfigFileError, RunConfig, load_config, validate
from .estimator import mle
from .model import ConfigError
from .simulator import TrajectoryRecord, simulate

SUBCOMMANDS = ("simulate", "estimate") + tuple(EXPERIMENTS) + ("validate",)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neurolan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"neurolan {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                           parser_class=_Parser)
    sub.required = True
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        if name == "validate":
            continue
        sp.add_argument("--out", help="output directory (default: output.directory from the config)")
        sp.add_argument("--jobs", type=int, default=None,
                        help="replicate-level worker processes (default: $NEUROLAN_JOBS or 1)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "estimate":
            sp.add_argument("--record", help="JSONL record to fit (default: simulate one)")
    return p


def _jobs(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("NEUROLAN_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NEUROLAN_JOBS must be an integer, got {env!r}")
    return 1


def _simulate_report(cfg: RunConfig, out_dir: str) -> ExperimentReport:
    record = simulate(cfg.model, cfg.theta_star, cfg.N[0], cfg.t, cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "record.jsonl"), "w") as fh:
        record.write_jsonl(fh)
    rows = [{"t": e.time, "neuron": e.neuron, "x_pre": e.pre_jump_state, "mark": e.mark,
             "x_post": e.post_jump_state}
            for e in record.events]
    summary = {"N": record.N, "t": record.t, "events": record.n_events,
               "spikes_per_neuron": float(record.n_events / record.N),
               "model_hash": record.model.model_hash()}
    return ExperimentReport("simulate", cfg.raw, rows, summary)


def _estimate_report(cfg: RunConfig, record_path) -> ExperimentReport:
    if record_path:
        with open(record_path) as fh:
            record = TrajectoryRecord.from_jsonl(fh, cfg.model)
    else:
        record = simulate(cfg.model, cfg.theta_star, cfg.N[0], cfg.t, cfg.seed)
    res = mle(record, cfg.estimator)
    row = {"N": record.N, "events": record.n_events, "converged": res.converged,
           "iterations": res.iterations, "starts_used": res.starts_used,
           "grad_norm": res.grad_norm_final, "on_boundary": res.on_boundary}
    row.update({f"theta_hat_{k}": float(v) for k, v in enumerate(res.theta_hat)})
    summary = {"theta_hat": res.theta_hat, "loglik_at_hat": res.loglik_at_hat,
               "observed_info_at_hat": res.observed_info_at_hat, "converged": res.converged}
    try:
        fisher = reference_fisher(cfg)
        summary["limiting_fisher_at_theta_star"] = fisher
        summary["asymptotic_std"] = np.sqrt(np.diag(np.linalg.inv(fisher)) / record.N)
    except np.linalg.LinAlgError:
        pass
    verdicts = [Verdict("mle_converged", bool(res.converged), res.grad_norm_final, "converged")]
    return ExperimentReport("estimate", cfg.raw, [row], summary, verdicts)


def _manifest(cfg: RunConfig, argv, jobs: int) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "config": cfg.raw,
        "code_version": __version__,
        "backend": BACKEND,
        "seed": cfg.seed,
        "jobs": jobs,
        "argv": list(argv),
    }


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "validate":
        problems = validate(args.config)
        for msg in problems:
            print(f"{args.config}: {msg}", file=sys.stderr)
        if not problems:
            print(f"{args.config}: ok")
        return 2 if problems else 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        jobs = _jobs(args.jobs)
        out_dir = args.out or cfg.output_dir
        if args.command == "simulate":
            report = _simulate_report(cfg, out_dir)
        elif args.command == "estimate":
            report = _estimate_report(cfg, args.record)
        else:
            report = EXPERIMENTS[args.command](cfg, jobs=jobs)
    except ConfigFileError as exc:
        for msg in exc.messages:
            print(f"{args.config}: {msg}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    report.write(out_dir, formats=cfg.formats)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(_manifest(cfg, argv, jobs), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.criterion}: {v.value} ({v.threshold})")
    if not report.passed:
        print("failing criteria: " + ", ".join(report.failing()), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
