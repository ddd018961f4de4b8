"""Monte Carlo experiments checking the asymptotic behaviour of the likelihood.

Each experiment fans replicates out over a process pool (``jobs``) and
assembles rows in replicate order, so the output never depends on ``jobs``.
Replicate ``r`` at grid position ``n`` draws its randomness from streams keyed
by ``(seed, n * REPLICATE_STRIDE + r)``.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..config import RunConfig
from ..estimator import mle, standardized_error
from ..likelihood import lan_decompose_many, loglik_derivatives
from ..limit import identifiability, limiting_fisher, solve_limit
from ..model import ConfigError, NoReset
from ..simulator import replay_all, simulate
from .metrics import (frobenius_relative, ks_critical_value, ks_normal, loglog_slope,
                      wasserstein1)
from .report import ExperimentReport, Verdict

REPLICATE_STRIDE = 1_000_000
KS_ALPHA = 0.01
INFO_GAP_FLOOR = 1e-9


def replicate_id(n_index: int, r: int) -> int:
    return n_index * REPLICATE_STRIDE + r


def run_tasks(fn, tasks, jobs: int = 1):
    """Map ``fn`` over ``tasks`` preserving order."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def reference_fisher(cfg: RunConfig, theta=None) -> np.ndarray:
    theta = cfg.theta_star if theta is None else theta
    ens = solve_limit(cfg.model, theta, cfg.reference_M, cfg.t, cfg.Q, seed=cfg.seed)
    return limiting_fisher(ens, cfg.model)


def _vec_cols(prefix, v):
    return {f"{prefix}_{k}": float(x) for k, x in enumerate(np.ravel(v))}


def _mat_cols(prefix, a):
    a = np.atleast_2d(a)
    return {f"{prefix}_{k}_{l}": float(a[k, l]) for k in range(a.shape[0]) for l in range(a.shape[1])}


# ---------------------------------------------------------------------------
# LAN expansion


def _lan_task(args):
    model, theta_star, N, t, seed, rep, hs, n_index, r = args
    record = simulate(model, theta_star, N, t, seed, rep)
    rows = []
    for k, terms in enumerate(lan_decompose_many(record, theta_star, hs)):
        row = {"N": N, "replicate": r, "h_index": k, "events": record.n_events,
               "loglr": terms.loglr, "remainder": terms.remainder,
               "abs_remainder": abs(terms.remainder)}
        row.update(_vec_cols("delta", terms.delta))
        row.update(_mat_cols("info", terms.info))
        rows.append(row)
    return rows


def lan_experiment(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Remainder of the quadratic expansion, score covariance and information gap per N."""
    start = time.perf_counter()
    d = cfg.model.dim
    hs = cfg.h or [np.ones(d) / math.sqrt(d)]
    fisher = reference_fisher(cfg)
    tasks = [(cfg.model, cfg.theta_star, N, cfg.t, cfg.seed, replicate_id(i, r), hs, i, r)
             for i, N in enumerate(cfg.N) for r in range(cfg.replicates)]
    rows = [row for chunk in run_tasks(_lan_task, tasks, jobs) for row in chunk]
    summary = {"limiting_fisher": fisher, "h": [h.tolist() for h in hs], "per_N": {}}
    medians = {k: [] for k in range(len(hs))}
    gaps = []
    for N in cfg.N:
        sub = [r for r in rows if r["N"] == N]
        entry = {}
        for k in range(len(hs)):
            rem = np.array([r["abs_remainder"] for r in sub if r["h_index"] == k])
            q = np.quantile(rem, [0.1, 0.5, 0.9])
            entry[f"h{k}_abs_remainder_q10_q50_q90"] = q
            medians[k].append(float(q[1]))
        base = [r for r in sub if r["h_index"] == 0]
        deltas = np.array([[r[f"delta_{i}"] for i in range(d)] for r in base])
        infos = np.array([[[r[f"info_{i}_{j}"] for j in range(d)] for i in range(d)] for r in base])
        cov = np.atleast_2d(np.cov(deltas, rowvar=False)) if len(base) > 1 else np.zeros((d, d))
        entry["delta_mean"] = deltas.mean(axis=0)
        entry["delta_cov"] = cov
        entry["delta_cov_rel_frobenius"] = frobenius_relative(cov, fisher)
        gap = float(np.mean([frobenius_relative(I, fisher) for I in infos]))
        entry["info_rel_frobenius_gap_mean"] = gap
        gaps.append(gap)
        summary["per_N"][str(N)] = entry
    summary["median_abs_remainder"] = medians
    summary["info_gap"] = gaps
    verdicts = []
    if len(cfg.N) >= 2:
        for k, h in enumerate(hs):
            if not np.any(h):
                continue
            med = medians[k]
            decreasing = all(b < a for a, b in zip(med, med[1:]))
            ratio = med[-1] / med[0] if med[0] > 0 else float("inf")
            verdicts.append(Verdict(f"lan_remainder_decay[h{k}]", bool(decreasing and ratio < 0.3),
                                    {"medians": med, "last_over_first": ratio},
                                    "strictly decreasing and last < 0.3 * first"))
        expected = math.sqrt(cfg.N[0] / cfg.N[-1])
        if max(gaps) <= INFO_GAP_FLOOR:
            # observed information equals its limit (e.g. constant rate): nothing to shrink
            verdicts.append(Verdict("info_gap_rate", True, {"gaps": gaps},
                                    f"all gaps <= {INFO_GAP_FLOOR}"))
        else:
            ratio = gaps[-1] / gaps[0]
            verdicts.append(Verdict("info_gap_rate", bool(0.5 * expected <= ratio <= 1.5 * expected),
                                    {"gap_ratio": ratio, "expected": expected},
                                    "ratio within +-50% of sqrt(N_first/N_last)"))
    figures = {f"remainder_median_h{k}": list(zip(cfg.N, medians[k])) for k in range(len(hs))}
    figures["info_gap"] = list(zip(cfg.N, gaps))
    return ExperimentReport("lan", cfg.raw, rows, summary, verdicts, figures,
                            time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Score calibration


def _score_task(args):
    model, theta_star, N, t, seed, rep, r = args
    record = simulate(model, theta_star, N, t, seed, rep)
    _, sc, _, _ = loglik_derivatives(record, theta_star)
    row = {"N": N, "replicate": r, "events": record.n_events}
    row.update(_vec_cols("delta", sc / math.sqrt(N)))
    return row


def score_calibration(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Normalised score at the true parameter against N(0, I_t)."""
    start = time.perf_counter()
    d = cfg.model.dim
    fisher = reference_fisher(cfg)
    tasks = [(cfg.model, cfg.theta_star, N, cfg.t, cfg.seed, replicate_id(i, r), r)
             for i, N in enumerate(cfg.N) for r in range(cfg.replicates)]
    rows = run_tasks(_score_task, tasks, jobs)
    summary = {"limiting_fisher": fisher, "per_N": {}}
    verdicts = []
    for N in cfg.N:
        deltas = np.array([[r[f"delta_{k}"] for k in range(d)] for r in rows if r["N"] == N])
        R = len(deltas)
        mean = deltas.mean(axis=0)
        std = deltas.std(axis=0, ddof=1) if R > 1 else np.zeros(d)
        cov = np.atleast_2d(np.cov(deltas, rowvar=False)) if R > 1 else np.zeros((d, d))
        ks = [ks_normal(deltas[:, k], math.sqrt(fisher[k, k])) for k in range(d)]
        crit = ks_critical_value(R, KS_ALPHA)
        mean_bound = 4.0 * float(std.max()) / math.sqrt(R)
        rel = frobenius_relative(cov, fisher)
        summary["per_N"][str(N)] = {"mean": mean, "std": std, "cov": cov, "cov_rel_frobenius": rel,
                                    "ks": ks, "ks_critical": crit, "mean_bound": mean_bound}
        verdicts += [
            Verdict(f"score_mean[N={N}]", bool(np.linalg.norm(mean) <= mean_bound),
                    float(np.linalg.norm(mean)), f"<= {mean_bound:.4g}"),
            Verdict(f"score_cov[N={N}]", bool(rel <= 0.10), rel, "<= 0.10"),
            Verdict(f"score_ks[N={N}]", bool(max(ks) < crit), ks, f"< {crit:.4g}"),
        ]
    return ExperimentReport("calibrate", cfg.raw, rows, summary, verdicts, {},
                            time.perf_counter() - start)


# ---------------------------------------------------------------------------
# MLE normality and consistency


def _mle_task(args):
    model, theta_star, N, t, seed, rep, opts, r = args
    record = simulate(model, theta_star, N, t, seed, rep)
    res = mle(record, opts)
    row = {"N": N, "replicate": r, "events": record.n_events, "converged": bool(res.converged),
           "on_boundary": bool(res.on_boundary), "iterations": res.iterations,
           "grad_norm": res.grad_norm_final,
           "error_norm": float(np.linalg.norm(res.theta_hat - theta_star))}
    row.update(_vec_cols("theta_hat", res.theta_hat))
    return row


def _mle_rows(cfg: RunConfig, jobs: int):
    tasks = [(cfg.model, cfg.theta_star, N, cfg.t, cfg.seed, replicate_id(i, r), cfg.estimator, r)
             for i, N in enumerate(cfg.N) for r in range(cfg.replicates)]
    return run_tasks(_mle_task, tasks, jobs)


def normality_experiment(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Standardised MLE errors ``sqrt(N) I^{1/2} (theta_hat - theta*)`` against N(0, Id)."""
    start = time.perf_counter()
    d = cfg.model.dim
    fisher = reference_fisher(cfg)
    rows = _mle_rows(cfg, jobs)
    for row in rows:
        th = np.array([row[f"theta_hat_{k}"] for k in range(d)])
        row.update(_vec_cols("z", standardized_error(th, cfg.theta_star, fisher, row["N"])))
    summary = {"limiting_fisher": fisher, "per_N": {}}
    verdicts = []
    for N in cfg.N:
        sub = [r for r in rows if r["N"] == N]
        good = [r for r in sub if r["converged"]]
        nonconv = 1.0 - len(good) / len(sub)
        z = np.array([[r[f"z_{k}"] for k in range(d)] for r in good])
        std = z.std(axis=0, ddof=1)
        cov = np.atleast_2d(np.cov(z, rowvar=False))
        cov_gap = float(np.linalg.norm(cov - np.eye(d)))
        ks = [ks_normal(z[:, k]) for k in range(d)]
        crit = ks_critical_value(len(z), KS_ALPHA)
        summary["per_N"][str(N)] = {"mean": z.mean(axis=0), "std": std, "cov": cov,
                                    "cov_minus_identity_frobenius": cov_gap, "ks": ks,
                                    "ks_critical": crit, "nonconvergence_rate": nonconv,
                                    "boundary_hits": sum(r["on_boundary"] for r in sub)}
        verdicts += [
            Verdict(f"mle_nonconvergence[N={N}]", bool(nonconv <= 0.02), nonconv, "<= 0.02"),
            Verdict(f"mle_std[N={N}]", bool(np.all((std >= 0.85) & (std <= 1.15))), std, "in [0.85, 1.15]"),
            Verdict(f"mle_cov[N={N}]", bool(cov_gap <= 0.15), cov_gap, "<= 0.15"),
            Verdict(f"mle_ks[N={N}]", bool(max(ks) < crit), ks, f"< {crit:.4g}"),
        ]
    return ExperimentReport("normality", cfg.raw, rows, summary, verdicts, {},
                            time.perf_counter() - start)


def consistency_experiment(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Median estimation error across the N grid; expects sqrt(N) scaling."""
    start = time.perf_counter()
    rows = _mle_rows(cfg, jobs)
    medians = [float(np.median([r["error_norm"] for r in rows if r["N"] == N])) for N in cfg.N]
    summary = {"median_error": dict(zip(map(str, cfg.N), medians))}
    verdicts = []
    if len(cfg.N) >= 2:
        expected = math.sqrt(cfg.N[0] / cfg.N[-1])
        ratio = medians[-1] / medians[0]
        summary["ratio_last_over_first"] = ratio
        summary["expected_ratio"] = expected
        verdicts.append(Verdict("mle_consistency", bool(0.6 * expected <= ratio <= 1.4 * expected),
                                ratio, f"in [{0.6 * expected:.3g}, {1.4 * expected:.3g}]"))
    return ExperimentReport("consistency", cfg.raw, rows, summary, verdicts,
                            {"median_error": list(zip(cfg.N, medians))}, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Propagation of chaos


def _grid_index(times, s):
    q = int(np.argmin(np.abs(times - s)))
    if abs(times[q] - s) > 1e-9 * max(1.0, abs(s)):
        raise ConfigError(f"time point {s} is not on the reference grid")
    return q


def _chaos_task(args):
    model, theta_star, N, t, seed, rep, time_points, ref_atoms, r = args
    record = simulate(model, theta_star, N, t, seed, rep)
    row = {"N": N, "replicate": r, "events": record.n_events}
    for k, (s, ref) in enumerate(zip(time_points, ref_atoms)):
        row[f"w1_{k}"] = wasserstein1(replay_all(record, s), ref)
    return row


def chaos_rate_experiment(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """W1 between the N-particle empirical measure and a large limit ensemble."""
    start = time.perf_counter()
    stochastic = not isinstance(cfg.model.reset, NoReset)
    if stochastic and not cfg.exploratory:
        raise ConfigError("chaos: reset must be None unless exploratory is set")
    ns = sorted(cfg.N)
    if not cfg.exploratory and (len(ns) < 4 or ns[-1] < 16 * ns[0]):
        raise ConfigError("chaos: need at least 4 N values spanning a factor 16")
    ens = solve_limit(cfg.model, cfg.theta_star, cfg.reference_M, cfg.t, cfg.Q, seed=cfg.seed)
    time_points = cfg.time_points or [cfg.t]
    ref_atoms = [np.sort(ens.at(_grid_index(ens.times, s))) for s in time_points]
    tasks = [(cfg.model, cfg.theta_star, N, cfg.t, cfg.seed, replicate_id(i, r), time_points, ref_atoms, r)
             for i, N in enumerate(cfg.N) for r in range(cfg.replicates)]
    rows = run_tasks(_chaos_task, tasks, jobs)
    summary = {"reference_M": cfg.reference_M, "reference_mode": ens.mode,
               "time_points": time_points, "mean_w1": {}, "slope": []}
    figures = {}
    verdicts = []
    for k, s in enumerate(time_points):
        means = [float(np.mean([r[f"w1_{k}"] for r in rows if r["N"] == N])) for N in cfg.N]
        summary["mean_w1"][str(s)] = dict(zip(map(str, cfg.N), means))
        slope = loglog_slope(cfg.N, means) if len(cfg.N) >= 2 else float("nan")
        summary["slope"].append(slope)
        figures[f"mean_w1_t{k}"] = list(zip(cfg.N, means))
        if not cfg.exploratory:
            verdicts.append(Verdict(f"chaos_slope[t={s}]", bool(-0.6 <= slope <= -0.4), slope,
                                    "in [-0.6, -0.4]"))
    return ExperimentReport("chaos", cfg.raw, rows, summary, verdicts, figures,
                            time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Identifiability


def theta_grid(box, points: int) -> np.ndarray:
    axes = [lo + (np.arange(points) + 0.5) / points * (hi - lo) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _ident_task(args):
    model, grid, j, M, t, Q, seed = args
    ens = solve_limit(model, grid[j], M, t, Q, seed=seed)
    values = [identifiability(ens, model, th) for th in grid]
    eig = float(np.linalg.eigvalsh(limiting_fisher(ens, model)).min())
    return values, eig


def identifiability_scan(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Identifiability functional over a parameter grid, plus min eigenvalue of I_t."""
    start = time.perf_counter()
    grid = theta_grid(cfg.model.theta_box, cfg.grid_points)
    M = cfg.M_reference or 4000
    tasks = [(cfg.model, grid, j, M, cfg.t, cfg.Q, cfg.seed) for j in range(len(grid))]
    results = run_tasks(_ident_task, tasks, jobs)
    rows = []
    flagged = 0
    off = []
    for j, (values, eig) in enumerate(results):
        for i, v in enumerate(values):
            flag = i != j and v <= cfg.identifiability_threshold
            flagged += flag
            if i != j:
                off.append(v)
            row = {"theta_index": i, "theta_prime_index": j, "value": v, "flagged": flag,
                   "min_eig_fisher_at_theta_prime": eig}
            row.update(_vec_cols("theta", grid[i]))
            row.update(_vec_cols("theta_prime", grid[j]))
            rows.append(row)
    eigs = [e for _, e in results]
    summary = {"grid": grid, "flagged_pairs": flagged,
               "min_off_diagonal": min(off) if off else None, "min_fisher_eigenvalue": min(eigs)}
    verdicts = [
        Verdict("identifiability_positive", flagged == 0, summary["min_off_diagonal"],
                f"> {cfg.identifiability_threshold}"),
        Verdict("fisher_positive_definite", min(eigs) > 0, min(eigs), "> 0"),
    ]
    return ExperimentReport("identify", cfg.raw, rows, summary, verdicts, {},
                            time.perf_counter() - start)


EXPERIMENTS = {
    "lan": lan_experiment,
    "normality": normality_experiment,
    "consistency": consistency_experiment,
    "chaos": chaos_rate_experiment,
    "calibrate": score_calibration,
    "identify": identifiability_scan,
}
