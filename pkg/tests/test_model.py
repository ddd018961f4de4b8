import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_model, sigmoid_model, softplus_model
from neurolan.model import (AffineSigmoidRate, ConfigError, ConstantRate, CustomDrift, Dirac,
                            LinearDrift, ModelSpec, NoReset, ParameterDomainError, ResetToZero,
                            TabulatedRate, ThetaBox, TruncatedGaussian, Uniform, ZeroDrift,
                            drift_flow, family_bounds, mark_mean, model_from_config, rate_derivatives,
                            rate_eval, sample_mark)


def test_constant_rate_is_identity():
    m = constant_model(0.5, 2.0)
    assert rate_eval(m, [1.3], 17.0) == 1.3
    g, h = rate_derivatives(m, [1.3], 0.4)
    assert g.tolist() == [1.0]
    assert h.tolist() == [[0.0]]


def test_affine_sigmoid_examples():
    m = sigmoid_model()
    assert rate_eval(m, [1.0, 1.0], 0.0) == 1.5
    assert rate_eval(m, [1.0, 1.0], -800.0) == pytest.approx(1.0, abs=1e-300)
    g, h = rate_derivatives(m, [1.0, 1.0], 0.0)
    np.testing.assert_array_equal(g, [1.0, 0.5])
    np.testing.assert_array_equal(h, np.zeros((2, 2)))


def test_rate_outside_box_raises():
    with pytest.raises(ParameterDomainError):
        rate_eval(constant_model(0.5, 2.0), [2.5], 0.0)


def test_family_bounds_constant():
    b = family_bounds(constant_model(0.5, 2.0))
    assert b.as_tuple() == (0.5, 2.0, 2.0, 0.0, 0.0)


def test_family_bounds_sigmoid_sup():
    m = ModelSpec(AffineSigmoidRate(), ThetaBox((0.5, 0.5), (2.0, 2.0)))
    assert family_bounds(m).B0 == 4.0


def test_sigmoid_rejects_box_reaching_zero_rate():
    with pytest.raises(ConfigError):
        ModelSpec(AffineSigmoidRate(), ThetaBox((0.0, 0.5), (2.0, 2.0)))


def _grids(model):
    box = model.theta_box
    axes = [np.linspace(a, b, 10) for a, b in zip(box.lower, box.upper)]
    thetas = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    return thetas, np.linspace(-12.0, 12.0, 241)


@pytest.mark.parametrize("make", [constant_model, sigmoid_model, softplus_model])
def test_bounds_hold_on_grid(make):
    model = make()
    b = model.bounds
    thetas, xs = _grids(model)
    for th in thetas:
        f = model.rate.value(th, xs)
        g = model.rate.grad(th, xs)
        h = model.rate.hess(th, xs)
        assert np.all(f >= b.ell0_inv) and np.all(f <= b.B0)
        assert np.all(np.linalg.norm(g, axis=-1) / f <= b.B1 * (1 + 1e-12))
        assert np.all(np.abs(h).max(axis=(-1, -2)) <= b.B2 * (1 + 1e-12) + 1e-15)


@pytest.mark.parametrize("make", [constant_model, sigmoid_model, softplus_model])
def test_taylor_constant_on_random_pairs(make):
    model = make()
    b = model.bounds
    rng = np.random.default_rng(3)
    box = model.theta_box
    xs = np.linspace(-12.0, 12.0, 241)
    for _ in range(50):
        th = rng.uniform(box.lo, box.hi)
        tp = rng.uniform(box.lo, box.hi)
        f, fp, gp = model.rate.value(th, xs), model.rate.value(tp, xs), model.rate.grad(tp, xs)
        lhs = np.abs(f / fp - 1.0 - gp @ (th - tp) / fp)
        assert np.all(lhs <= b.taylor_C * np.sum((th - tp) ** 2) + 1e-12)


@pytest.mark.parametrize("make", [sigmoid_model, softplus_model])
def test_derivatives_match_central_differences(make):
    model = make()
    thetas, xs = _grids(model)
    eps = 1e-5
    box = model.theta_box
    for th in thetas[::7]:
        th = np.clip(th, box.lo + 2 * eps, box.hi - 2 * eps)
        g = model.rate.grad(th, xs)
        h = model.rate.hess(th, xs)
        for k in range(model.dim):
            e = np.zeros(model.dim)
            e[k] = eps
            fd = (model.rate.value(th + e, xs) - model.rate.value(th - e, xs)) / (2 * eps)
            np.testing.assert_allclose(g[:, k], fd, rtol=1e-6, atol=1e-9)
            fdh = (model.rate.grad(th + e, xs) - model.rate.grad(th - e, xs)) / (2 * eps)
            np.testing.assert_allclose(h[:, :, k], fdh, rtol=1e-6, atol=1e-9)


def test_softplus_values_against_direct_formula():
    model = softplus_model()
    xs = np.linspace(-6, 6, 13)
    th = np.array([0.3, 1.7])
    direct = [math.log1p(math.exp(th[0] + th[1] / (1 + math.exp(-x)))) for x in xs]
    np.testing.assert_allclose(model.rate.value(th, xs), direct, rtol=1e-14)


def test_drift_flow_examples():
    zero = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), ZeroDrift())
    assert drift_flow(zero, 3.7, 10.0) == 3.7
    lin = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), LinearDrift(1.0, 0.0))
    assert drift_flow(lin, 1.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    with pytest.raises(ValueError):
        drift_flow(lin, 1.0, -0.1)


def test_custom_drift_matches_closed_form():
    custom = CustomDrift(lambda x: -x, lipschitz=1.0)
    lin = LinearDrift(1.0, 0.0)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(custom.flow(x, 1.0), lin.flow(x, 1.0), atol=1e-10)


@given(x=st.floats(-50, 50), s=st.floats(0, 5), t=st.floats(0, 5),
       lam=st.floats(-1, 3), c=st.floats(-2, 2))
@settings(max_examples=200, deadline=None)
def test_flow_semigroup(x, s, t, lam, c):
    d = LinearDrift(lam, c)
    a = d.flow(d.flow(np.array([x]), s), t)[0]
    b = d.flow(np.array([x]), s + t)[0]
    assert abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_marks():
    m = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), mark_law=Dirac(0.8))
    rng = np.random.default_rng(0)
    assert sample_mark(m, rng) == 0.8
    assert mark_mean(m) == 0.8
    m2 = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), mark_law=Uniform(0.0, 1.0))
    assert mark_mean(m2) == 0.5
    draws = sample_mark(m2, rng, 1000)
    assert draws.min() >= 0.0 and draws.max() <= 1.0


def test_truncated_gaussian_mean_and_support():
    law = TruncatedGaussian(0.5, 0.2, 0.0, 1.0)
    assert law.mean() == pytest.approx(0.5, abs=1e-12)  # symmetric truncation
    draws = law.sample(np.random.default_rng(1), 5000)
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert abs(draws.mean() - 0.5) < 4 * 0.2 / math.sqrt(5000)


def test_theta_box_requires_interior():
    with pytest.raises(ConfigError, match="empty interior"):
        ThetaBox((1.0,), (1.0,))


def test_zero_mark_rejected():
    with pytest.raises(ConfigError):
        ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), mark_law=Dirac(0.0))


def test_reset_to_zero_is_clamped():
    r = ResetToZero(10.0)
    np.testing.assert_array_equal(r(np.array([3.0, -4.0, 50.0])), [-3.0, 4.0, -10.0])
    np.testing.assert_array_equal(NoReset()(np.array([3.0])), [0.0])


def test_tabulated_family_requires_declared_bounds():
    with pytest.raises(ConfigError, match="declared bounds"):
        TabulatedRate([0.0, 1.0], [[1.0, 2.0]])


def test_tabulated_family_checks_declared_bounds():
    knots, basis = [0.0, 1.0], [[1.0, 2.0]]
    ok = dict(ell0_inv=0.5, B0=4.0, B1=2.0, B2=0.0, taylor_C=0.0)
    model = ModelSpec(TabulatedRate(knots, basis, 0.0, ok), ThetaBox((0.5,), (2.0,)))
    assert model.rate.value(np.array([1.0]), np.array([0.5]))[0] == 1.5
    bad = dict(ok, B0=3.0)
    with pytest.raises(ConfigError):
        ModelSpec(TabulatedRate(knots, basis, 0.0, bad), ThetaBox((0.5,), (2.0,)))


@pytest.mark.parametrize("make", [constant_model, sigmoid_model, softplus_model])
def test_config_round_trip(make):
    model = make()
    again = model_from_config(model.to_config())
    assert again.model_hash() == model.model_hash()
    assert again.bounds == model.bounds


def test_unknown_family_is_config_error():
    with pytest.raises(ConfigError):
        model_from_config({"rate": {"family": "Nope"}, "theta_box": {"lower": [0], "upper": [1]}})
