"""Model ingredients: drift, reset, mark and initial laws, parametric rate families.

All rate families are vectorised over the state ``x``; ``theta`` is always a
1-D array of length ``family.dim``.  Gradients carry the parameter axis last,
Hessians the last two axes.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats


class ConfigError(ValueError):
    """Invalid model or run configuration."""


class ParameterDomainError(ValueError):
    """A parameter lies outside the admissible box."""


# ---------------------------------------------------------------------------
# Parameter box


@dataclass(frozen=True)
class ThetaBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ConfigError("theta_box: lower and upper must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ConfigError("theta_box: empty interior (need lower < upper componentwise)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lo - tol) and np.all(theta <= self.hi + tol))

    def interior(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta > self.lo) and np.all(theta < self.hi))

    def project(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lo, self.hi)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[(a, b) for a, b in zip(self.lower, self.upper)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)


def check_theta(box: ThetaBox, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (box.dim,):
        raise ParameterDomainError(f"theta has shape {theta.shape}, expected ({box.dim},)")
    if not box.contains(theta):
        raise ParameterDomainError(f"theta={theta.tolist()} outside box {box.lower}..{box.upper}")
    return theta


# ---------------------------------------------------------------------------
# Rate families


@dataclass(frozen=True)
class FamilyBounds:
    """Global constants over the box: inf f, sup f, sup|f'/f|, sup|f''|, Taylor C."""

    ell0_inv: float
    B0: float
    B1: float
    B2: float
    taylor_C: float

    def as_tuple(self):
        return (self.ell0_inv, self.B0, self.B1, self.B2, self.taylor_C)


def _logistic(z):
    # exp overflow for very negative z gives 1/inf = 0, which is the right limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _softplus(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0.0))))


class RateFamily:
    """Base class for ``theta -> f_theta(x)``."""

    name = "base"
    dim = 0
    # integer code understood by the compiled kernels; None means Python-only
    kernel_code: Optional[int] = None

    def value(self, theta, x):
        raise NotImplementedError

    def grad(self, theta, x):
        raise NotImplementedError

    def hess(self, theta, x):
        raise NotImplementedError

    def bounds(self, box: ThetaBox) -> FamilyBounds:
        raise NotImplementedError

    def kernel_hyper(self) -> np.ndarray:
        return np.zeros(3)

    def to_config(self) -> dict:
        raise NotImplementedError


class ConstantRate(RateFamily):
    """``f_theta(x) = theta``; the finite system reduces to Poisson clocks."""

    name = "Constant"
    dim = 1
    kernel_code = 0

    def value(self, theta, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, float(theta[0]))

    def grad(self, theta, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape + (1,))

    def hess(self, theta, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (1, 1))

    def bounds(self, box):
        lo, hi = box.lower[0], box.upper[0]
        if lo <= 0:
            raise ConfigError("Constant family needs a positive lower bound on theta")
        return FamilyBounds(lo, hi, 1.0 / lo, 0.0, 0.0)

    def to_config(self):
        return {"family": "Constant", "hyper": {}}


class AffineSigmoidRate(RateFamily):
    """``f_theta(x) = theta_1 + theta_2 * sigmoid((x - center) / scale)``.

    With ``amplitude`` given, theta_2 is frozen at that value and the family
    has a single free parameter.
    """

    name = "AffineSigmoid"

    def __init__(self, center: float = 0.0, scale: float = 1.0, amplitude: Optional[float] = None):
        if scale <= 0:
            raise ConfigError("AffineSigmoid: scale must be positive")
        self.center = float(center)
        self.scale = float(scale)
        self.amplitude = None if amplitude is None else float(amplitude)
        self.dim = 2 if amplitude is None else 1
        self.kernel_code = 1 if amplitude is None else 2

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        return _logistic((x - self.center) / self.scale)

    def value(self, theta, x):
        amp = theta[1] if self.amplitude is None else self.amplitude
        return theta[0] + amp * self.sigma(x)

    def grad(self, theta, x):
        s = self.sigma(x)
        if self.amplitude is not None:
            return np.ones(s.shape + (1,))
        return np.stack([np.ones_like(s), s], axis=-1)

    def hess(self, theta, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.dim, self.dim))

    def bounds(self, box):
        l1 = box.lower[0]
        if self.amplitude is None:
            l2, u2 = box.lower[1], box.upper[1]
        else:
            l2 = u2 = self.amplitude
        # sigmoid ranges over (0, 1); extremes of an affine map sit at the ends
        inf_f = l1 + min(0.0, l2)
        if inf_f <= 0:
            raise ConfigError("AffineSigmoid: rate is not bounded away from zero on the box")
        sup_f = box.upper[0] + max(0.0, u2)
        if self.amplitude is None:
            # |(1, s)| / f is quasi-convex in s, so its sup over [0, 1] is at an end
            B1 = max(1.0 / l1, math.sqrt(2.0) / (l1 + l2))
        else:
            B1 = 1.0 / inf_f
        return FamilyBounds(inf_f, sup_f, B1, 0.0, 0.0)

    def kernel_hyper(self):
        return np.array([self.center, self.scale, 0.0 if self.amplitude is None else self.amplitude])

    def to_config(self):
        hyper = {"center": self.center, "scale": self.scale}
        if self.amplitude is not None:
            hyper["amplitude"] = self.amplitude
        return {"family": "AffineSigmoid", "hyper": hyper}


class SoftplusClampRate(RateFamily):
    """``f_theta(x) = softplus(theta_1 + theta_2 * sigmoid((x - center) / scale))``.

    Smooth, strictly positive and bounded; genuinely nonlinear in theta.
    """

    name = "SoftplusClamp"
    dim = 2
    kernel_code = 3

    def __init__(self, center: float = 0.0, scale: float = 1.0):
        if scale <= 0:
            raise ConfigError("SoftplusClamp: scale must be positive")
        self.center = float(center)
        self.scale = float(scale)

    def sigma(self, x):
        x = np.asarray(x, dtype=float)
        return _logistic((x - self.center) / self.scale)

    def _z(self, theta, x):
        s = self.sigma(x)
        return theta[0] + theta[1] * s, s

    def value(self, theta, x):
        z, _ = self._z(theta, x)
        return _softplus(z)

    def grad(self, theta, x):
        z, s = self._z(theta, x)
        L = _logistic(z)
        return np.stack([L, L * s], axis=-1)

    def hess(self, theta, x):
        z, s = self._z(theta, x)
        L = _logistic(z)
        v = np.stack([np.ones_like(s), s], axis=-1)
        return (L * (1.0 - L))[..., None, None] * v[..., :, None] * v[..., None, :]

    def _z_range(self, box):
        zs = [a + b * s for a in (box.lower[0], box.upper[0])
              for b in (box.lower[1], box.upper[1]) for s in (0.0, 1.0)]
        return min(zs), max(zs)

    def bounds(self, box):
        zmin, zmax = self._z_range(box)
        inf_f = float(_softplus(zmin))
        sup_f = float(_softplus(zmax))
        # logistic/softplus decreases in z; |(1, s)| < sqrt(2)
        B1 = math.sqrt(2.0) * float(_logistic(zmin)) / inf_f
        if zmin <= 0.0 <= zmax:
            lprime = 0.25
        else:
            lprime = max(float(_logistic(z) * (1 - _logistic(z))) for z in (zmin, zmax))
        B2 = 2.0 * lprime
        return FamilyBounds(inf_f, sup_f, B1, B2, 0.5 * B2 / inf_f)

    def kernel_hyper(self):
        return np.array([self.center, self.scale, 0.0])

    def to_config(self):
        return {"family": "SoftplusClamp", "hyper": {"center": self.center, "scale": self.scale}}


class TabulatedRate(RateFamily):
    """``f_theta(x) = floor + sum_k theta_k * B_k(x)`` with tabulated basis.

    Each ``B_k`` interpolates ``basis[k]`` linearly on ``knots`` and is held
    constant outside.  The user declares the global bounds; they are checked
    at construction on every (box corner, knot) pair, which is exhaustive
    because the rate is affine in theta and piecewise linear in x.
    """

    name = "UserTabulated"

    def __init__(self, knots, basis, floor: float = 0.0, declared: Optional[dict] = None):
        self.knots = np.asarray(knots, dtype=float)
        self.basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if self.knots.ndim != 1 or self.knots.size < 2 or np.any(np.diff(self.knots) <= 0):
            raise ConfigError("UserTabulated: knots must be strictly increasing, at least two")
        if self.basis.shape[1] != self.knots.size:
            raise ConfigError("UserTabulated: basis rows must match the knot count")
        self.floor = float(floor)
        self.dim = self.basis.shape[0]
        if declared is None:
            raise ConfigError("UserTabulated family requires declared bounds")
        missing = {"ell0_inv", "B0", "B1", "B2", "taylor_C"} - set(declared)
        if missing:
            raise ConfigError(f"UserTabulated: missing declared bounds {sorted(missing)}")
        self.declared = FamilyBounds(**{k: float(declared[k]) for k in FamilyBounds.__dataclass_fields__})

    def _basis(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.interp(x, self.knots, row) for row in self.basis], axis=-1)

    def value(self, theta, x):
        return self.floor + self._basis(x) @ np.asarray(theta, dtype=float)

    def grad(self, theta, x):
        return self._basis(x)

    def hess(self, theta, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.dim, self.dim))

    def bounds(self, box):
        if box.dim != self.dim:
            raise ConfigError("UserTabulated: box dimension does not match the basis")
        b = self.declared
        vals = self.floor + self.basis.T @ box.corners().T  # knots x corners
        if vals.min() < b.ell0_inv - 1e-12 or vals.max() > b.B0 + 1e-12 or b.ell0_inv <= 0:
            raise ConfigError("UserTabulated: declared rate bounds are violated on the grid")
        ratio = np.linalg.norm(self.basis.T, axis=1)[:, None] / vals
        if ratio.max() > b.B1 + 1e-12:
            raise ConfigError("UserTabulated: declared B1 is violated on the grid")
        return b

    def to_config(self):
        return {"family": "UserTabulated", "hyper": {
            "knots": self.knots.tolist(), "basis": self.basis.tolist(), "floor": self.floor,
            "bounds": dict(zip(FamilyBounds.__dataclass_fields__, self.declared.as_tuple()))}}


# ---------------------------------------------------------------------------
# Drift, reset, laws


@dataclass(frozen=True)
class ZeroDrift:
    kernel_code = 0

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def flow(self, x, dt):
        return np.asarray(x, dtype=float) + 0.0 * dt

    def to_config(self):
        return {"kind": "Zero"}


def phi1(z):
    """``(1 - exp(-z)) / z`` evaluated without cancellation, equal to 1 at 0."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    return np.where(z == 0.0, 1.0, -np.expm1(-safe) / safe)


@dataclass(frozen=True)
class LinearDrift:
    """``b(x) = -lam * x + c``."""

    lam: float
    c: float = 0.0
    kernel_code = 1

    def __call__(self, x):
        return -self.lam * np.asarray(x, dtype=float) + self.c

    def flow(self, x, dt):
        x = np.asarray(x, dtype=float)
        if self.lam == 0.0:
            return x + self.c * dt
        return np.exp(-self.lam * dt) * x + self.c * dt * phi1(self.lam * dt)

    def to_config(self):
        return {"kind": "Linear", "lambda": self.lam, "c": self.c}


@dataclass(frozen=True)
class CustomDrift:
    """User drift integrated with fixed-step RK4.

    ``lipschitz`` and ``growth`` are the declared constants of the drift; the
    step is ``1e-3 * min(1, 1/lipschitz)`` unless ``h_ode`` is given.
    """

    func: Callable
    lipschitz: float = 1.0
    growth: float = 1.0
    h_ode: Optional[float] = None
    kernel_code = None

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    @property
    def step(self) -> float:
        if self.h_ode is not None:
            return self.h_ode
        return 1e-3 * min(1.0, 1.0 / self.lipschitz) if self.lipschitz > 0 else 1e-3

    def flow(self, x, dt):
        y = np.array(x, dtype=float, copy=True)
        if dt <= 0:
            return y
        n = max(1, int(math.ceil(dt / self.step - 1e-9)))
        h = dt / n
        f = self.__call__
        for _ in range(n):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return y

    def to_config(self):
        raise ConfigError("custom drift has no JSON form")


@dataclass(frozen=True)
class NoReset:
    kernel_code = 0

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_config(self):
        return {"kind": "None"}


@dataclass(frozen=True)
class ResetToZero:
    """``phi(x) = -x`` clamped to ``|phi| <= r_max`` so that phi stays bounded."""

    r_max: float = 1e3
    kernel_code = 1

    def __call__(self, x):
        return -np.clip(np.asarray(x, dtype=float), -self.r_max, self.r_max)

    def to_config(self):
        return {"kind": "ResetToZero", "r_max": self.r_max}


@dataclass(frozen=True)
class CustomReset:
    func: Callable
    kernel_code = None

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def to_config(self):
        raise ConfigError("custom reset has no JSON form")


@dataclass(frozen=True)
class Dirac:
    value: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value, dtype=float)

    def mean(self) -> float:
        return self.value

    def to_config(self):
        return {"kind": "Dirac", "value": self.value}


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError("Uniform law needs low < high")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def mean(self):
        return 0.5 * (self.low + self.high)

    def to_config(self):
        return {"kind": "Uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class TruncatedGaussian:
    mean_: float
    std: float
    low: Optional[float] = None
    high: Optional[float] = None

    def __post_init__(self):
        if self.std <= 0:
            raise ConfigError("TruncatedGaussian needs std > 0")
        if self.low is not None and self.high is not None and not self.low < self.high:
            raise ConfigError("TruncatedGaussian needs low < high")

    def _dist(self):
        a = -np.inf if self.low is None else (self.low - self.mean_) / self.std
        b = np.inf if self.high is None else (self.high - self.mean_) / self.std
        return stats.truncnorm(a, b, loc=self.mean_, scale=self.std)

    def sample(self, rng, size):
        return np.asarray(self._dist().rvs(size=size, random_state=rng), dtype=float).reshape(size)

    def mean(self):
        return float(self._dist().mean())

    def to_config(self):
        return {"kind": "TruncatedGaussian", "mean": self.mean_, "std": self.std,
                "low": self.low, "high": self.high}


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class ModelSpec:
    rate: RateFamily
    theta_box: ThetaBox
    drift: object = field(default_factory=ZeroDrift)
    reset: object = field(default_factory=NoReset)
    mark_law: object = field(default_factory=lambda: Dirac(1.0))
    initial_law: object = field(default_factory=lambda: Dirac(0.0))

    def __post_init__(self):
        if self.rate.dim != self.theta_box.dim:
            raise ConfigError(f"rate family has dimension {self.rate.dim}, box has {self.theta_box.dim}")
        if isinstance(self.mark_law, Dirac) and self.mark_law.value == 0.0:
            raise ConfigError("mark law must not charge 0")
        # certifies the bounds once; raises on invalid families
        object.__setattr__(self, "_bounds", self.rate.bounds(self.theta_box))

    @property
    def dim(self) -> int:
        return self.rate.dim

    @property
    def bounds(self) -> FamilyBounds:
        return self._bounds

    @property
    def kernel_ready(self) -> bool:
        return (self.rate.kernel_code is not None and self.drift.kernel_code is not None
                and self.reset.kernel_code is not None)

    def to_config(self) -> dict:
        rate = self.rate.to_config()
        return {
            "drift": self.drift.to_config(),
            "reset": self.reset.to_config(),
            "mark_law": self.mark_law.to_config(),
            "initial_law": self.initial_law.to_config(),
            "rate": rate,
            "theta_box": {"lower": list(self.theta_box.lower), "upper": list(self.theta_box.upper)},
        }

    def model_hash(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpec":
        return model_from_config(cfg)


def _law_from_config(cfg: dict, what: str):
    kind = cfg.get("kind")
    if kind == "Dirac":
        return Dirac(float(cfg["value"]))
    if kind == "Uniform":
        return Uniform(float(cfg["low"]), float(cfg["high"]))
    if kind == "TruncatedGaussian":
        return TruncatedGaussian(float(cfg["mean"]), float(cfg["std"]),
                                 cfg.get("low"), cfg.get("high"))
    raise ConfigError(f"{what}: unknown law kind {kind!r}")


def _rate_from_config(cfg: dict) -> RateFamily:
    fam = cfg.get("family")
    hyper = cfg.get("hyper", {}) or {}
    if fam == "Constant":
        return ConstantRate()
    if fam == "AffineSigmoid":
        return AffineSigmoidRate(hyper.get("center", 0.0), hyper.get("scale", 1.0), hyper.get("amplitude"))
    if fam == "SoftplusClamp":
        return SoftplusClampRate(hyper.get("center", 0.0), hyper.get("scale", 1.0))
    if fam == "UserTabulated":
        if "knots" not in hyper or "basis" not in hyper:
            raise ConfigError("UserTabulated: hyper needs knots and basis")
        return TabulatedRate(hyper["knots"], hyper["basis"], hyper.get("floor", 0.0), hyper.get("bounds"))
    raise ConfigError(f"rate: unknown family {fam!r}")


def model_from_config(cfg: dict) -> ModelSpec:
    """Build a :class:`ModelSpec` from its JSON dictionary form."""
    allowed = {"drift", "reset", "mark_law", "initial_law", "rate", "theta_box"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"model: unknown keys {sorted(unknown)}")
    drift_cfg = cfg.get("drift", {"kind": "Zero"})
    if drift_cfg.get("kind") == "Zero":
        drift = ZeroDrift()
    elif drift_cfg.get("kind") == "Linear":
        drift = LinearDrift(float(drift_cfg["lambda"]), float(drift_cfg.get("c", 0.0)))
    else:
        raise ConfigError(f"drift: unknown kind {drift_cfg.get('kind')!r}")
    reset_cfg = cfg.get("reset", {"kind": "None"})
    if reset_cfg.get("kind") == "None":
        reset = NoReset()
    elif reset_cfg.get("kind") == "ResetToZero":
        reset = ResetToZero(float(reset_cfg.get("r_max", 1e3)))
    else:
        raise ConfigError(f"reset: unknown kind {reset_cfg.get('kind')!r}")
    if "theta_box" not in cfg or "rate" not in cfg:
        raise ConfigError("model: rate and theta_box are required")
    box = ThetaBox(tuple(cfg["theta_box"]["lower"]), tuple(cfg["theta_box"]["upper"]))
    return ModelSpec(
        rate=_rate_from_config(cfg["rate"]),
        theta_box=box,
        drift=drift,
        reset=reset,
        mark_law=_law_from_config(cfg.get("mark_law", {"kind": "Dirac", "value": 1.0}), "mark_law"),
        initial_law=_law_from_config(cfg.get("initial_law", {"kind": "Dirac", "value": 0.0}), "initial_law"),
    )


# ---------------------------------------------------------------------------
# Operations


def rate_eval(model: ModelSpec, theta, x):
    """``f_theta(x)``; raises :class:`ParameterDomainError` outside the box."""
    theta = check_theta(model.theta_box, theta)
    out = model.rate.value(theta, x)
    return float(out) if np.ndim(out) == 0 else out


def rate_derivatives(model: ModelSpec, theta, x):
    """Gradient and Hessian of ``theta -> f_theta(x)``."""
    theta = check_theta(model.theta_box, theta)
    g = model.rate.grad(theta, x)
    h = model.rate.hess(theta, x)
    return g, 0.5 * (h + np.swapaxes(h, -1, -2))


def family_bounds(model: ModelSpec) -> FamilyBounds:
    return model.bounds


def drift_flow(model: ModelSpec, x, dt: float):
    if dt < 0:
        raise ValueError("dt must be non-negative")
    out = model.drift.flow(x, dt)
    return float(out) if np.ndim(out) == 0 else out


def sample_mark(model: ModelSpec, rng: np.random.Generator, size: Optional[int] = None):
    if size is None:
        return float(model.mark_law.sample(rng, 1)[0])
    return model.mark_law.sample(rng, size)


def mark_mean(model: ModelSpec) -> float:
    return float(model.mark_law.mean())
