"""Particle approximation of the mean-field limit and its functionals.

Without resets the limit is the deterministic flow
``x' = b(x) + m * E[f_theta(X_s)]``, solved by RK4 for a cloud of ``M``
particles drawn from the initial law.  With resets each particle also jumps
by ``phi`` at rate ``f_theta``; the mean-field term is then frozen over each
grid step (labelled approximate).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .model import LinearDrift, ModelSpec, NoReset, ZeroDrift, check_theta, phi1

Q_PER_UNIT = 200


@dataclass(frozen=True, eq=False)
class LimitEnsemble:
    M: int
    times: np.ndarray
    states: np.ndarray  # shape (M, Q + 1), column per grid time
    theta: np.ndarray
    mode: str  # "deterministic" or "stochastic"

    @property
    def approximate(self) -> bool:
        return self.mode == "stochastic"

    def at(self, q: int) -> np.ndarray:
        return self.states[:, q]

    def final(self) -> np.ndarray:
        return self.states[:, -1]


def default_Q(t: float) -> int:
    return max(10, int(math.ceil(Q_PER_UNIT * t)))


def _rk4_step(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _flow_with_shift(model: ModelSpec, x, dt, shift):
    """Flow of ``x' = b(x) + shift`` over (possibly per-particle) durations ``dt``."""
    drift = model.drift
    dt = np.broadcast_to(np.asarray(dt, dtype=float), x.shape)
    if isinstance(drift, ZeroDrift):
        return x + shift * dt
    if isinstance(drift, LinearDrift):
        c = drift.c + shift
        if drift.lam == 0.0:
            return x + c * dt
        return np.exp(-drift.lam * dt) * x + c * dt * phi1(drift.lam * dt)
    n = max(1, int(math.ceil(float(np.max(dt, initial=0.0)) / drift.step - 1e-9)))
    h = dt / n
    y = np.array(x, dtype=float, copy=True)
    for _ in range(n):
        y = _rk4_step(lambda z: drift(z) + shift, y, h)
    return y


def solve_limit(model: ModelSpec, theta, M: int, t: float, Q: int | None = None,
                seed: int = 0) -> LimitEnsemble:
    """Evolve ``M`` representative particles of the limit law on a uniform grid."""
    theta = check_theta(model.theta_box, theta)
    if M < 2:
        raise ValueError("M must be at least 2")
    Q = default_Q(t) if Q is None else int(Q)
    if Q < 10:
        raise ValueError("Q must be at least 10")
    times = np.linspace(0.0, t, Q + 1)
    x = np.asarray(model.initial_law.sample(rng.stream(seed, 0, "limit_initial"), M), dtype=float)
    states = np.empty((M, Q + 1), order="F")
    states[:, 0] = x
    m = model.mark_law.mean()
    rate = model.rate
    if isinstance(model.reset, NoReset):
        mode = "deterministic"
        drift = model.drift

        def rhs(z):
            return drift(z) + m * np.mean(rate.value(theta, z))

        for q in range(Q):
            h = times[q + 1] - times[q]
            x = _rk4_step(rhs, x, h)
            states[:, q + 1] = x
    else:
        mode = "stochastic"
        B0 = model.bounds.B0
        g = rng.stream(seed, 0, "limit_jumps")
        for q in range(Q):
            h = times[q + 1] - times[q]
            shift = m * float(np.mean(rate.value(theta, x)))
            elapsed = np.zeros(M)
            active = np.arange(M)
            while active.size:
                wait = g.exponential(1.0 / B0, active.size)
                nxt = elapsed[active] + wait
                done = nxt >= h
                fin = active[done]
                x[fin] = _flow_with_shift(model, x[fin], h - elapsed[fin], shift)
                active = active[~done]
                if not active.size:
                    break
                x[active] = _flow_with_shift(model, x[active], nxt[~done] - elapsed[active], shift)
                elapsed[active] = nxt[~done]
                coins = g.random(active.size)
                xa = x[active]
                jump = coins * B0 < rate.value(theta, xa)
                x[active[jump]] = xa[jump] + model.reset(xa[jump])
            states[:, q + 1] = x
    return LimitEnsemble(M=M, times=times, states=states, theta=theta, mode=mode)


def _trapezoid(values, times):
    if len(times) < 2 or times[-1] == times[0]:
        return np.zeros_like(values[0])
    dt = np.diff(times)
    return np.tensordot(0.5 * dt, values[:-1] + values[1:], axes=(0, 0))


def fisher_integrand(ensemble: LimitEnsemble, model: ModelSpec, q: int) -> np.ndarray:
    x = ensemble.at(q)
    f = model.rate.value(ensemble.theta, x)
    g = model.rate.grad(ensemble.theta, x)
    return np.einsum("ni,nj,n->ij", g, g, 1.0 / f) / len(x)


def limiting_fisher(ensemble: LimitEnsemble, model: ModelSpec) -> np.ndarray:
    """``int_0^t E[grad f grad f^T / f](X_s) ds`` by the trapezoid rule on the grid."""
    vals = np.stack([fisher_integrand(ensemble, model, q) for q in range(len(ensemble.times))])
    out = _trapezoid(vals, ensemble.times)
    return 0.5 * (out + out.T)


def identifiability(ensemble: LimitEnsemble, model: ModelSpec, theta) -> float:
    """``int_0^t E|f_theta / f_theta' - 1|(X_s) ds`` for an ensemble solved at theta'."""
    theta = check_theta(model.theta_box, theta)
    vals = []
    for q in range(len(ensemble.times)):
        x = ensemble.at(q)
        ratio = model.rate.value(theta, x) / model.rate.value(ensemble.theta, x)
        vals.append(np.mean(np.abs(ratio - 1.0)))
    return float(max(_trapezoid(np.asarray(vals), ensemble.times), 0.0))


def time_integrated_mean(ensemble: LimitEnsemble, g) -> float:
    """``int_0^t E[g(X_s)] ds`` over the ensemble."""
    vals = np.asarray([np.mean(g(ensemble.at(q)), axis=0) for q in range(len(ensemble.times))])
    return _trapezoid(vals, ensemble.times)


def write_summary_csv(ensemble: LimitEnsemble, model: ModelSpec, path) -> None:
    d = model.dim
    fields = ["s", "mean_state", "mean_rate"] + [f"fisher_integrand_{k}_{l}" for k in range(d) for l in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for q, s in enumerate(ensemble.times):
            x = ensemble.at(q)
            fi = fisher_integrand(ensemble, model, q)
            w.writerow([repr(float(s)), repr(float(np.mean(x))),
                        repr(float(np.mean(model.rate.value(ensemble.theta, x))))]
                       + [repr(float(v)) for v in fi.ravel()])
