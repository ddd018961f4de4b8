import csv
import dataclasses

import numpy as np
import pytest

from conftest import SEED, constant_model, sigmoid_model
from neurolan.likelihood import observed_info
from neurolan.limit import (default_Q, identifiability, limiting_fisher, solve_limit,
                            time_integrated_mean, write_summary_csv)
from neurolan.model import Dirac, LinearDrift, ResetToZero, Uniform
from neurolan.simulator import simulate


def test_constant_rate_dirac_initial_closed_form():
    model = constant_model(0.5, 2.0, mark=0.5, init=Dirac(0.3))
    ens = solve_limit(model, [1.5], 10, 2.0, Q=40, seed=SEED)
    expected = 0.3 + 0.5 * 1.5 * ens.times
    np.testing.assert_allclose(ens.states, np.broadcast_to(expected, ens.states.shape), rtol=1e-13)
    assert ens.mode == "deterministic" and not ens.approximate


def test_centered_marks_decouple():
    model = sigmoid_model(drift=LinearDrift(1.0, 0.2), init=Uniform(-2.0, 2.0))
    model = dataclasses.replace(model, mark_law=Uniform(-1.0, 1.0))
    ens = solve_limit(model, [1.0, 1.0], 50, 1.0, seed=SEED)
    own = model.drift.flow(ens.at(0), ens.times[-1])
    np.testing.assert_allclose(ens.final(), own, rtol=1e-10, atol=1e-12)


def test_limiting_fisher_constant():
    model = constant_model(0.5, 2.0)
    ens = solve_limit(model, [1.0], 20, 2.0, seed=SEED)
    assert limiting_fisher(ens, model)[0, 0] == pytest.approx(2.0, rel=1e-13)
    ens4 = solve_limit(model, [1.0], 20, 4.0, seed=SEED)
    assert limiting_fisher(ens4, model)[0, 0] == pytest.approx(4.0, rel=1e-13)


def test_zero_horizon_fisher_is_zero(sig_model):
    ens = solve_limit(sig_model, [1.0, 1.0], 20, 0.0, seed=SEED)
    np.testing.assert_array_equal(limiting_fisher(ens, sig_model), np.zeros((2, 2)))


def test_identifiability_examples():
    model = constant_model(0.5, 2.0)
    ens = solve_limit(model, [1.0], 20, 2.0, seed=SEED)
    assert identifiability(ens, model, [1.0]) == 0.0
    assert identifiability(ens, model, [1.5]) == pytest.approx(1.0, rel=1e-13)


def test_identifiability_relabel_invariant(sig_model):
    ens = solve_limit(sig_model, [1.0, 1.0], 200, 1.0, seed=SEED)
    perm = np.random.default_rng(0).permutation(ens.M)
    shuffled = ens.__class__(ens.M, ens.times, np.asfortranarray(ens.states[perm]), ens.theta, ens.mode)
    a = identifiability(ens, sig_model, [1.5, 0.7])
    b = identifiability(shuffled, sig_model, [1.5, 0.7])
    assert a == pytest.approx(b, rel=1e-12)
    assert a > 0


def test_fisher_symmetric_psd(sig_model):
    ens = solve_limit(sig_model, [1.0, 1.0], 500, 1.0, seed=SEED)
    F = limiting_fisher(ens, sig_model)
    assert np.abs(F - F.T).max() <= 1e-12
    assert np.linalg.eigvalsh(F).min() >= -1e-10


def test_invalid_sizes(sig_model):
    with pytest.raises(ValueError):
        solve_limit(sig_model, [1.0, 1.0], 1, 1.0)
    with pytest.raises(ValueError):
        solve_limit(sig_model, [1.0, 1.0], 10, 1.0, Q=5)
    assert default_Q(1.0) == 200


def test_ensemble_size_monte_carlo_consistency(sig_model):
    small = [solve_limit(sig_model, [1.0, 1.0], 10_000, 1.0, seed=s) for s in range(4)]
    big = solve_limit(sig_model, [1.0, 1.0], 100_000, 1.0, seed=99)
    vals = [np.mean(sig_model.rate.value(e.theta, e.final())) for e in small]
    se = np.std([sig_model.rate.value(small[0].theta, small[0].final())]) / np.sqrt(10_000)
    ref = np.mean(sig_model.rate.value(big.theta, big.final()))
    for v in vals:
        assert abs(v - ref) < 4 * se * np.sqrt(1.1)


def test_fisher_converges_in_M(sig_model):
    ref = limiting_fisher(solve_limit(sig_model, [1.0, 1.0], 400_000, 1.0, seed=1000), sig_model)
    ratios = []
    for s in range(5):
        a = limiting_fisher(solve_limit(sig_model, [1.0, 1.0], 2_000, 1.0, seed=s), sig_model)
        b = limiting_fisher(solve_limit(sig_model, [1.0, 1.0], 8_000, 1.0, seed=s + 100), sig_model)
        ratios.append((np.linalg.norm(b - ref), np.linalg.norm(a - ref)))
    num, den = np.mean([r[0] for r in ratios]), np.mean([r[1] for r in ratios])
    assert 0.2 <= num / den <= 0.9


def test_finite_system_functional_converges(sig_model):
    theta = np.array([1.0, 1.0])
    ens = solve_limit(sig_model, theta, 200_000, 1.0, seed=SEED)
    target = limiting_fisher(ens, sig_model)[1, 1]
    gaps = []
    for i, N in enumerate([100, 400, 1600]):
        vals = [observed_info(simulate(sig_model, theta, N, 1.0, SEED, 1000 * i + r), theta)[1, 1]
                for r in range(10)]
        gaps.append(np.mean(np.abs(np.array(vals) - target)))
    slope = np.polyfit(np.log([100, 400, 1600]), np.log(gaps), 1)[0]
    assert -0.8 <= slope <= -0.3


def test_stochastic_mode_runs_and_is_labelled():
    model = sigmoid_model(reset=ResetToZero(50.0), init=Uniform(-2.0, 2.0))
    ens = solve_limit(model, [1.0, 1.0], 2000, 0.5, seed=SEED)
    assert ens.mode == "stochastic" and ens.approximate
    assert np.all(np.isfinite(ens.states))
    # resets pull potentials towards 0 relative to the reset-free limit
    free = solve_limit(sigmoid_model(init=Uniform(-2.0, 2.0)), [1.0, 1.0], 2000, 0.5, seed=SEED)
    assert np.mean(np.abs(ens.final())) < np.mean(np.abs(free.final()))


def test_time_integrated_mean_constant():
    model = constant_model(0.5, 2.0, init=Dirac(0.0))
    ens = solve_limit(model, [1.0], 5, 2.0, seed=SEED)
    # x(s) = 0.5 s, integral over [0, 2] is 1 (trapezoid exact for linear)
    assert time_integrated_mean(ens, lambda x: x) == pytest.approx(1.0, rel=1e-13)


def test_summary_csv(tmp_path, sig_model):
    ens = solve_limit(sig_model, [1.0, 1.0], 50, 0.1, seed=SEED)
    p = tmp_path / "limit.csv"
    write_summary_csv(ens, sig_model, p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["s", "mean_state", "mean_rate", "fisher_integrand_0_0", "fisher_integrand_0_1",
                       "fisher_integrand_1_0", "fisher_integrand_1_1"]
    assert len(rows) == len(ens.times) + 1
