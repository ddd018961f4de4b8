"""Exact path likelihood of a fully observed record and its derivatives.

For a record with spikes at pre-jump potentials ``x_k`` the log-likelihood
ratio is::

    sum_k log(f_theta / f_ref)(x_k) - N * int_0^t mu_s[f_theta - f_ref] ds

where ``mu_s`` is the empirical measure of the N potentials.  Time integrals
are exact for zero drift (piecewise-constant paths) and use 5-point
Gauss-Legendre per inter-event segment otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .model import ParameterDomainError, check_theta
from .simulator import TrajectoryRecord, _kernel_args, iter_segments

GL_ORDER = 5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def path_integral(record: TrajectoryRecord, g) -> np.ndarray:
    """``int_0^t (1/N) sum_i g(X_i(s)) ds`` for a vectorised state function ``g``.

    ``g`` maps an array of shape ``(N,)`` to ``(N,)`` or ``(N, ...)``.
    """
    drift = record.model.drift
    exact = drift.kernel_code == 0
    total = None
    for t0, t1, X in iter_segments(record):
        dt = t1 - t0
        if dt <= 0:
            continue
        if exact:
            part = dt * np.mean(g(X), axis=0)
        else:
            part = 0.0
            for xq, wq in zip(_GL_X, _GL_W):
                tau = 0.5 * dt * (1.0 + xq)
                part = part + 0.5 * dt * wq * np.mean(g(drift.flow(X, tau)), axis=0)
        total = part if total is None else total + part
    if total is None:
        probe = np.asarray(np.mean(g(np.asarray(record.initial_states[:1], dtype=float)), axis=0))
        return np.zeros_like(probe, dtype=float) if probe.ndim else 0.0
    return total


@dataclass(frozen=True)
class PathMoments:
    """Time-integrated empirical averages of f, grad f, hess f and grad f grad f^T / f."""

    f: float
    grad: np.ndarray
    hess: np.ndarray
    info: np.ndarray


def path_moments(record: TrajectoryRecord, theta, backend=None) -> PathMoments:
    model = record.model
    theta = np.ascontiguousarray(theta, dtype=float)
    d = model.dim
    if model.kernel_ready:
        k = backend or kernels
        fam, hyper, drift, lam, c, reset, rmax = _kernel_args(model)
        out = k.moments(np.ascontiguousarray(record.initial_states), np.ascontiguousarray(record.times),
                        np.ascontiguousarray(record.neurons, dtype=np.int64),
                        np.ascontiguousarray(record.marks), float(record.t), fam, hyper, theta, d,
                        drift, lam, c, reset, rmax, _GL_X, _GL_W)
        h = out[1 + d:1 + d + d * d].reshape(d, d)
        info = out[1 + d + d * d:].reshape(d, d)
        # the compiled kernel fills the upper triangle only
        h = np.triu(h) + np.triu(h, 1).T
        info = np.triu(info) + np.triu(info, 1).T
        return PathMoments(float(out[0]), out[1:1 + d].copy(), h, info)
    rate = model.rate

    def g(x):
        f = rate.value(theta, x)
        gr = rate.grad(theta, x)
        he = rate.hess(theta, x).reshape(len(x), d * d)
        inf = (gr[:, :, None] * gr[:, None, :] / f[:, None, None]).reshape(len(x), d * d)
        return np.concatenate([f[:, None], gr, he, inf], axis=1)

    out = np.asarray(path_integral(record, g), dtype=float)
    if out.ndim == 0:
        out = np.zeros(1 + d + 2 * d * d)
    return PathMoments(float(out[0]), out[1:1 + d].copy(),
                       _sym(out[1 + d:1 + d + d * d].reshape(d, d)),
                       _sym(out[1 + d + d * d:].reshape(d, d)))


def _event_rates(record: TrajectoryRecord, theta):
    b = record.model.bounds
    f = record.model.rate.value(theta, record.pre_states)
    return np.clip(f, b.ell0_inv, b.B0)


def log_partial(record: TrajectoryRecord, theta) -> float:
    """``sum_k log f_theta(x_k) - N int mu_s[f_theta] ds`` (reference-free part)."""
    theta = check_theta(record.model.theta_box, theta)
    m = path_moments(record, theta)
    return float(np.sum(np.log(_event_rates(record, theta))) - record.N * m.f)


def log_likelihood_ratio(record: TrajectoryRecord, theta, theta_ref) -> float:
    """Log of dP_theta / dP_ref evaluated on the record."""
    theta = check_theta(record.model.theta_box, theta)
    theta_ref = check_theta(record.model.theta_box, theta_ref)
    if np.array_equal(theta, theta_ref):
        return 0.0
    logs = np.log(_event_rates(record, theta)) - np.log(_event_rates(record, theta_ref))
    mf = path_moments(record, theta).f
    mr = path_moments(record, theta_ref).f
    return float(np.sum(logs) - record.N * (mf - mr))


def loglik_derivatives(record: TrajectoryRecord, theta):
    """Reference-free log-likelihood, score, Hessian and observed information in one pass."""
    model = record.model
    theta = check_theta(model.theta_box, theta)
    m = path_moments(record, theta)
    x = record.pre_states
    f = _event_rates(record, theta)
    gr = model.rate.grad(theta, x)
    he = model.rate.hess(theta, x)
    ratio = gr / f[:, None]
    ll = float(np.sum(np.log(f)) - record.N * m.f)
    sc = ratio.sum(axis=0) - record.N * m.grad
    hs = (he / f[:, None, None]).sum(axis=0) - ratio.T @ ratio - record.N * m.hess
    return ll, sc, _sym(hs), _sym(m.info)


def score(record: TrajectoryRecord, theta) -> np.ndarray:
    """Gradient in theta of the log-likelihood."""
    return loglik_derivatives(record, theta)[1]


def hessian(record: TrajectoryRecord, theta) -> np.ndarray:
    return loglik_derivatives(record, theta)[2]


def observed_info(record: TrajectoryRecord, theta) -> np.ndarray:
    """``int_0^t mu_s[grad f grad f^T / f] ds``."""
    theta = check_theta(record.model.theta_box, theta)
    return _sym(path_moments(record, theta).info)


@dataclass(frozen=True)
class LanTerms:
    delta: np.ndarray
    info: np.ndarray
    loglr: float
    remainder: float
    h: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"delta": self.delta.tolist(), "info": self.info.tolist(),
                           "loglr": self.loglr, "remainder": self.remainder, "h": self.h.tolist()})


def lan_decompose(record: TrajectoryRecord, theta_star, h) -> LanTerms:
    """Quadratic expansion of the log-likelihood ratio at ``theta_star + h / sqrt(N)``.

    ``remainder = loglr - h.delta + h.info.h / 2`` holds by construction.
    """
    box = record.model.theta_box
    theta_star = check_theta(box, theta_star)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    rootN = np.sqrt(record.N)
    theta = theta_star + h / rootN
    if not box.contains(theta):
        raise ParameterDomainError("theta_star + h / sqrt(N) leaves the parameter box")
    return lan_decompose_many(record, theta_star, [h])[0]


def lan_decompose_many(record: TrajectoryRecord, theta_star, hs) -> list:
    """:func:`lan_decompose` for several directions, sharing the work at ``theta_star``."""
    box = record.model.theta_box
    theta_star = check_theta(box, theta_star)
    rootN = np.sqrt(record.N)
    hs = [np.atleast_1d(np.asarray(h, dtype=float)) for h in hs]
    for h in hs:
        if h.shape != theta_star.shape or not box.contains(theta_star + h / rootN):
            raise ParameterDomainError("theta_star + h / sqrt(N) leaves the parameter box")
    ll_star, sc, _, info = loglik_derivatives(record, theta_star)
    delta = sc / rootN
    out = []
    for h in hs:
        loglr = log_partial(record, theta_star + h / rootN) - ll_star if np.any(h != 0) else 0.0
        remainder = loglr - float(h @ delta) + 0.5 * float(h @ info @ h)
        out.append(LanTerms(delta=delta, info=info, loglr=float(loglr), remainder=float(remainder), h=h))
    return out
