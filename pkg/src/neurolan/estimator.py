"""Maximum likelihood over the parameter box by multi-start projected Newton."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .likelihood import loglik_derivatives
from .model import ConfigError, ThetaBox, check_theta
from .simulator import TrajectoryRecord


@dataclass(frozen=True)
class EstimatorOptions:
    tol_g: float = 1e-8
    tol_x: float = 1e-10
    tol_f: float = 1e-12
    ridge_ladder: tuple = tuple(10.0 ** k for k in range(-8, 3))
    max_iter: int = 100
    max_starts: Optional[int] = None
    theta_ref: Optional[tuple] = None

    @classmethod
    def from_config(cls, cfg: Optional[dict]) -> "EstimatorOptions":
        cfg = dict(cfg or {})
        known = {f.name for f in fields(cls)}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"estimator: unknown keys {sorted(unknown)}")
        if "ridge_ladder" in cfg:
            cfg["ridge_ladder"] = tuple(float(v) for v in cfg["ridge_ladder"])
        if cfg.get("theta_ref") is not None:
            cfg["theta_ref"] = tuple(float(v) for v in cfg["theta_ref"])
        return cls(**cfg)


@dataclass
class MleResult:
    theta_hat: np.ndarray
    loglik_at_hat: float
    observed_info_at_hat: np.ndarray
    iterations: int
    converged: bool
    starts_used: int
    grad_norm_final: float
    on_boundary: bool = False
    start_index: int = 0
    trace: list = field(default_factory=list, repr=False)


def start_points(box: ThetaBox, max_starts: Optional[int] = None) -> np.ndarray:
    """Box centre followed by ``2**min(d, 4)`` points halfway to the corners."""
    d = box.dim
    center = box.center
    half = 0.5 * (box.hi - box.lo)
    if d <= 4:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        extra = center + 0.5 * half * signs
    else:
        sample = qmc.LatinHypercube(d=d, seed=0).random(16)
        extra = box.lo + (box.hi - box.lo) * (0.25 + 0.5 * sample)
    pts = np.vstack([center, extra])
    if max_starts is not None:
        pts = pts[:max(1, int(max_starts))]
    return pts


def _active_set(theta, grad, box: ThetaBox, eps=1e-14):
    at_lo = theta <= box.lo + eps * np.maximum(1.0, np.abs(box.lo))
    at_hi = theta >= box.hi - eps * np.maximum(1.0, np.abs(box.hi))
    return (at_lo & (grad < 0)) | (at_hi & (grad > 0))


def _newton_direction(grad, hess, free, ladder):
    d = np.zeros_like(grad)
    if not np.any(free):
        return d
    g = grad[free]
    A = -hess[np.ix_(free, free)]
    n = A.shape[0]
    for ridge in (0.0,) + tuple(ladder):
        try:
            L = np.linalg.cholesky(A + ridge * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        d[free] = np.linalg.solve(L.T, np.linalg.solve(L, g))
        return d
    d[free] = g / max(np.max(np.abs(np.diag(A))), 1.0)
    return d


def _rounding_level(ll: float) -> float:
    # size of floating-point noise in a log-likelihood of magnitude |ll|
    return 1e-12 * max(1.0, abs(ll))


def _run_start(record, theta0, box, opts: EstimatorOptions, ll_ref: float):
    N = record.N
    theta = box.project(theta0)
    ll, g, H, info = loglik_derivatives(record, theta)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        active = _active_set(theta, g, box)
        pg = np.where(active, 0.0, g)
        pg_norm = np.linalg.norm(pg)
        small = pg_norm <= opts.tol_g * N
        direction = _newton_direction(g, H, ~active, opts.ridge_ladder)
        if np.linalg.norm(box.project(theta + direction) - theta) <= opts.tol_x:
            converged = True
            break
        alpha = 1.0
        accepted = False
        noise = _rounding_level(ll)
        for _ in range(60):
            cand = box.project(theta + alpha * direction)
            step = cand - theta
            if np.linalg.norm(step) <= opts.tol_x:
                break
            ll_c, g_c, H_c, info_c = loglik_derivatives(record, cand)
            if ll_c >= ll + 1e-4 * float(pg @ step) and ll_c >= ll:
                accepted = True
                break
            if ll_c >= ll - noise:
                # objective flat to rounding: accept if closer to stationarity
                pg_c = np.where(_active_set(cand, g_c, box), 0.0, g_c)
                if np.linalg.norm(pg_c) < pg_norm:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            converged = bool(small)
            break
        assert ll_c >= ll - noise, "line search accepted a decreasing step"
        theta, ll, g, H, info = cand, ll_c, g_c, H_c, info_c
        trace.append(ll)
    active = _active_set(theta, g, box)
    pg = np.where(active, 0.0, g)
    return MleResult(theta_hat=theta, loglik_at_hat=ll - ll_ref, observed_info_at_hat=info,
                     iterations=it, converged=converged, starts_used=1,
                     grad_norm_final=float(np.linalg.norm(pg)),
                     on_boundary=bool(np.any(theta <= box.lo) or np.any(theta >= box.hi)),
                     trace=trace)


def mle(record: TrajectoryRecord, opts: Optional[EstimatorOptions] = None) -> MleResult:
    """Maximum likelihood estimate over the model's parameter box.

    Every start runs projected Newton with a ridge-regularised Hessian and a
    monotone backtracking line search; the best local optimum wins, ties
    (within ``tol_f``) going to the earliest start.  A start stops when the
    projected Newton step falls below ``tol_x``; if no step can be accepted it
    counts as converged only when the projected score is below ``tol_g * N``.
    Near the optimum, where the log-likelihood is flat to rounding, full steps
    are accepted when they shrink the projected score.
    """
    opts = opts or EstimatorOptions()
    box = record.model.theta_box
    ref = box.center if opts.theta_ref is None else check_theta(box, opts.theta_ref)
    ll_ref = loglik_derivatives(record, ref)[0]
    best = None
    starts = start_points(box, opts.max_starts)
    for idx, s in enumerate(starts):
        res = _run_start(record, s, box, opts, ll_ref)
        res.start_index = idx
        if best is None or res.loglik_at_hat > best.loglik_at_hat + opts.tol_f:
            best = res
    best.starts_used = len(starts)
    return best


def standardized_error(result: MleResult, theta_star, fisher, N: int) -> np.ndarray:
    """``sqrt(N) * fisher^{1/2} (theta_hat - theta_star)`` with the symmetric square root."""
    fisher = np.atleast_2d(np.asarray(fisher, dtype=float))
    fisher = 0.5 * (fisher + fisher.T)
    w, V = np.linalg.eigh(fisher)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise np.linalg.LinAlgError("Fisher matrix is singular")
    root = (V * np.sqrt(w)) @ V.T
    theta_hat = getattr(result, "theta_hat", result)
    return np.sqrt(N) * root @ (np.asarray(theta_hat, dtype=float) - np.asarray(theta_star, dtype=float))
