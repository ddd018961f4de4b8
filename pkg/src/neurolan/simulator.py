"""Exact event-driven simulation of the N-neuron system.

Candidates arrive as a homogeneous Poisson stream of rate ``N * B0``; each
picks a neuron uniformly and is accepted with probability ``f(x) / B0``.  On
acceptance the spiker jumps by ``phi(x)`` and every other neuron receives
``u / N``.  Neuron indices are 0-based.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from . import rng
from ._backend import kernels
from .model import ConfigError, ModelSpec, check_theta, model_from_config

RECORD_FORMAT = "neurolan-record"
RECORD_VERSION = 1


class SpikeEvent(NamedTuple):
    time: float
    neuron: int
    pre_jump_state: float
    mark: float
    post_jump_state: float


class JumpLedger(NamedTuple):
    """The point measure of (time, pre-jump potential, neuron) atoms."""

    times: np.ndarray
    pre_jump_states: np.ndarray
    neurons: np.ndarray

    def __len__(self):
        return len(self.times)

    def atoms(self):
        return list(zip(self.times.tolist(), self.pre_jump_states.tolist(), self.neurons.tolist()))


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray

    @property
    def weight(self) -> float:
        return 1.0 / len(self.atoms)

    def integrate(self, g) -> float:
        return float(np.mean(g(self.atoms)))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    model: ModelSpec
    N: int
    t: float
    theta_star: np.ndarray
    initial_states: np.ndarray
    times: np.ndarray
    neurons: np.ndarray
    pre_states: np.ndarray
    marks: np.ndarray
    post_states: np.ndarray
    seed: int = 0
    replicate: int = 0

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def events(self) -> list[SpikeEvent]:
        return [SpikeEvent(*row) for row in zip(self.times.tolist(), self.neurons.tolist(),
                                                 self.pre_states.tolist(), self.marks.tolist(),
                                                 self.post_states.tolist())]

    def ledger(self) -> JumpLedger:
        return JumpLedger(self.times, self.pre_states, self.neurons)

    def counts(self) -> np.ndarray:
        """Number of spikes of each neuron."""
        return np.bincount(self.neurons, minlength=self.N)

    # -- serialization -----------------------------------------------------

    def header(self) -> dict:
        return {
            "format": RECORD_FORMAT,
            "version": RECORD_VERSION,
            "model_hash": self.model.model_hash(),
            "model": self.model.to_config(),
            "N": self.N,
            "t": self.t,
            "theta_star": self.theta_star.tolist(),
            "seed": self.seed,
            "replicate": self.replicate,
            "initial_states": self.initial_states.tolist(),
        }

    def write_jsonl(self, fh) -> None:
        fh.write(json.dumps(self.header()) + "\n")
        for tk, j, x, u in zip(self.times.tolist(), self.neurons.tolist(),
                               self.pre_states.tolist(), self.marks.tolist()):
            fh.write(json.dumps({"t": tk, "j": j, "x_pre": x, "u": u}) + "\n")

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        self.write_jsonl(buf)
        return buf.getvalue()

    @classmethod
    def from_jsonl(cls, text_or_fh, model: Optional[ModelSpec] = None) -> "TrajectoryRecord":
        lines = text_or_fh.splitlines() if isinstance(text_or_fh, str) else text_or_fh.read().splitlines()
        head = json.loads(lines[0])
        if head.get("format") != RECORD_FORMAT or head.get("version") != RECORD_VERSION:
            raise ConfigError("not a neurolan record (format/version mismatch)")
        if model is None:
            model = model_from_config(head["model"])
        if model.model_hash() != head["model_hash"]:
            raise ConfigError("record model hash does not match the model")
        rows = [json.loads(line) for line in lines[1:] if line.strip()]
        times = np.array([r["t"] for r in rows], dtype=float)
        neurons = np.array([r["j"] for r in rows], dtype=np.int64)
        pre = np.array([r["x_pre"] for r in rows], dtype=float)
        marks = np.array([r["u"] for r in rows], dtype=float)
        return cls(model=model, N=int(head["N"]), t=float(head["t"]),
                   theta_star=np.asarray(head["theta_star"], dtype=float),
                   initial_states=np.asarray(head["initial_states"], dtype=float),
                   times=times, neurons=neurons, pre_states=pre, marks=marks,
                   post_states=pre + model.reset(pre), seed=int(head["seed"]),
                   replicate=int(head.get("replicate", 0)))


# ---------------------------------------------------------------------------


def _draw_candidates(model: ModelSpec, N: int, t: float, seed: int, replicate: int):
    B0 = model.bounds.B0
    g = rng.stream(seed, replicate, "candidates")
    K = int(g.poisson(N * B0 * t)) if t > 0 else 0
    times = np.sort(g.uniform(0.0, t, K))
    picks = rng.stream(seed, replicate, "picks").integers(0, N, K).astype(np.int64)
    coins = rng.stream(seed, replicate, "coins").random(K)
    marks = np.asarray(model.mark_law.sample(rng.stream(seed, replicate, "marks"), K), dtype=float)
    if K > 1 and np.any(np.diff(times) == 0):
        # exact ties: process in neuron-index order
        order = np.lexsort((picks, times))
        times, picks, coins, marks = times[order], picks[order], coins[order], marks[order]
    return times, picks, coins, marks


def _kernel_args(model: ModelSpec):
    drift = model.drift
    lam = getattr(drift, "lam", 0.0)
    c = getattr(drift, "c", 0.0)
    rmax = getattr(model.reset, "r_max", 0.0)
    return (model.rate.kernel_code, np.ascontiguousarray(model.rate.kernel_hyper(), dtype=float),
            drift.kernel_code, float(lam), float(c), model.reset.kernel_code, float(rmax))


def _thin_generic(model, theta, x0, times, picks, coins, marks):
    """Thinning for models without a kernel code (custom drift, reset or family)."""
    N = len(x0)
    B0 = model.bounds.B0
    X = np.array(x0, dtype=float, copy=True)
    tlast = 0.0
    acc, xpre = [], []
    for k in range(len(times)):
        s = times[k]
        j = picks[k]
        xj = model.drift.flow(X[j:j + 1], s - tlast)
        if coins[k] * B0 < float(model.rate.value(theta, xj)[0]):
            X = model.drift.flow(X, s - tlast)
            tlast = s
            x = X[j]
            X += marks[k] * (1.0 / N)
            X[j] = x + float(model.reset(np.array([x]))[0])
            acc.append(k)
            xpre.append(x)
    return np.asarray(acc, dtype=np.int64), np.asarray(xpre, dtype=float)


def simulate(model: ModelSpec, theta_star, N: int, t: float, seed: int,
             replicate: int = 0, backend=None) -> TrajectoryRecord:
    """Draw one exact realisation of the N-neuron system on ``[0, t]``.

    Parameters
    ----------
    backend : module, optional
        Kernel module to use (``neurolan._kernels`` or ``neurolan._fallback``);
        defaults to the one selected at import.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if t < 0:
        raise ValueError("horizon t must be non-negative")
    theta = check_theta(model.theta_box, theta_star)
    x0 = np.asarray(model.initial_law.sample(rng.stream(seed, replicate, "initial"), N), dtype=float)
    times, picks, coins, marks = _draw_candidates(model, N, t, seed, replicate)
    if model.kernel_ready:
        k = backend or kernels
        fam, hyper, drift, lam, c, reset, rmax = _kernel_args(model)
        acc, xpre = k.thin(x0, times, picks, coins, marks, fam, hyper, np.ascontiguousarray(theta),
                           float(model.bounds.B0), drift, lam, c, reset, rmax)
    else:
        acc, xpre = _thin_generic(model, theta, x0, times, picks, coins, marks)
    xpre = np.asarray(xpre, dtype=float)
    return TrajectoryRecord(
        model=model, N=int(N), t=float(t), theta_star=theta, initial_states=x0,
        times=times[acc], neurons=picks[acc], pre_states=xpre, marks=marks[acc],
        post_states=xpre + model.reset(xpre), seed=int(seed), replicate=int(replicate),
    )


def acceptance_fraction(model: ModelSpec, record: TrajectoryRecord) -> float:
    """Fraction of accepted thinning candidates (re-draws the candidate count)."""
    times, *_ = _draw_candidates(model, record.N, record.t, record.seed, record.replicate)
    return record.n_events / max(len(times), 1)


# ---------------------------------------------------------------------------
# State reconstruction


def replay_state(record: TrajectoryRecord, neuron: int, s: float) -> float:
    """State of one neuron at time ``s`` (left limit at event times)."""
    if not 0 <= neuron < record.N:
        raise IndexError("neuron index out of range")
    if not 0.0 <= s <= record.t:
        raise ValueError("time outside [0, t]")
    model = record.model
    flow = model.drift.flow
    invN = 1.0 / record.N
    x = np.array([record.initial_states[neuron]])
    tprev = 0.0
    n = int(np.searchsorted(record.times, s, side="left"))
    for tk, j, u in zip(record.times[:n].tolist(), record.neurons[:n].tolist(), record.marks[:n].tolist()):
        x = flow(x, tk - tprev)
        if j == neuron:
            x = x + model.reset(x)
        else:
            x = x + u * invN
        tprev = tk
    return float(flow(x, s - tprev)[0])


def iter_segments(record: TrajectoryRecord) -> Iterator[tuple]:
    """Yield ``(t_start, t_end, states)`` for each inter-event segment.

    ``states`` are the positions of all neurons at ``t_start`` (after the
    jump at ``t_start``); along the segment they follow the drift flow.
    """
    model = record.model
    X = np.array(record.initial_states, dtype=float, copy=True)
    invN = 1.0 / record.N
    tprev = 0.0
    for tk, j, u in zip(record.times.tolist(), record.neurons.tolist(), record.marks.tolist()):
        yield tprev, tk, X
        X = model.drift.flow(X, tk - tprev)
        xj = X[j]
        X = X + u * invN
        X[j] = xj + float(model.reset(np.array([xj]))[0])
        tprev = tk
    yield tprev, record.t, X


def replay_all(record: TrajectoryRecord, s: float) -> np.ndarray:
    """States of all neurons at time ``s``, integrating forward event by event."""
    if not 0.0 <= s <= record.t:
        raise ValueError("time outside [0, t]")
    for t0, t1, X in iter_segments(record):
        if s <= t1:
            return record.model.drift.flow(X, s - t0)
    raise AssertionError("unreachable")


def empirical_measure(record: TrajectoryRecord, s: float) -> EmpiricalMeasure:
    return EmpiricalMeasure(np.asarray(replay_all(record, s), dtype=float))
