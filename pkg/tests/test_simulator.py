import io
import math

import numpy as np
import pytest
from scipy import stats

from conftest import SEED, constant_model, sigmoid_model, softplus_model
from neurolan.model import ConstantRate, Dirac, LinearDrift, ModelSpec, NoReset, ThetaBox, ZeroDrift
from neurolan.simulator import (TrajectoryRecord, acceptance_fraction, empirical_measure,
                                replay_all, replay_state, simulate)


def test_zero_horizon_is_empty(sp_model):
    rec = simulate(sp_model, [1.0, 1.0], 20, 0.0, SEED)
    assert rec.n_events == 0
    np.testing.assert_array_equal(replay_all(rec, 0.0), rec.initial_states)


def test_invalid_arguments(const_model):
    with pytest.raises(ValueError):
        simulate(const_model, [1.0], 0, 1.0, SEED)
    with pytest.raises(ValueError):
        simulate(const_model, [1.0], 5, -1.0, SEED)


@pytest.mark.parametrize("make", [constant_model, sigmoid_model, softplus_model])
def test_same_seed_same_record(make):
    model = make()
    theta = model.theta_box.center
    a = simulate(model, theta, 30, 1.5, SEED, 4)
    b = simulate(model, theta, 30, 1.5, SEED, 4)
    assert a.to_jsonl() == b.to_jsonl()
    c = simulate(model, theta, 30, 1.5, SEED, 5)
    assert c.to_jsonl() != a.to_jsonl()


@pytest.mark.parametrize("make", [constant_model, sigmoid_model, softplus_model])
def test_pre_jump_states_replay(make):
    model = make()
    rec = simulate(model, model.theta_box.center, 25, 2.0, SEED, 1)
    assert rec.n_events > 10
    assert np.all(np.diff(rec.times) > 0)
    for k in range(0, rec.n_events, max(1, rec.n_events // 40)):
        x = replay_state(rec, int(rec.neurons[k]), float(rec.times[k]))
        assert abs(x - rec.pre_states[k]) <= 1e-12 * max(1.0, abs(x))
    np.testing.assert_allclose(rec.post_states, rec.pre_states + model.reset(rec.pre_states))


def test_replay_all_agrees_with_replay_state(sp_model):
    rec = simulate(sp_model, [1.0, 1.0], 15, 1.0, SEED)
    for s in (0.0, 0.31, 0.77, 1.0):
        allx = replay_all(rec, s)
        for i in range(rec.N):
            assert abs(allx[i] - replay_state(rec, i, s)) <= 1e-12


def test_bookkeeping_oracle_constant_rate():
    model = constant_model(mark=0.8, init=Dirac(0.0))
    rec = simulate(model, [1.0], 3, 1.2, SEED)
    K = rec.n_events
    Ki = rec.counts()
    final = replay_all(rec, rec.t)
    np.testing.assert_allclose(final, 0.8 * (K - Ki) / 3, rtol=0, atol=1e-14)


def test_three_event_hand_replay():
    # drive a hand-written 3-event record through the replay
    model = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), LinearDrift(1.0, 0.0), NoReset(),
                      Dirac(0.6), Dirac(1.0))
    rec = TrajectoryRecord(model, 2, 1.0, np.array([1.0]), np.array([1.0, 2.0]),
                           np.array([0.2, 0.5, 0.9]), np.array([0, 1, 0]), np.zeros(3),
                           np.array([0.6, 0.6, 0.6]), np.zeros(3))
    x0 = 1.0 * math.exp(-0.2)
    x0 = (x0 * math.exp(-0.3) + 0.3) * math.exp(-0.4)  # kick from neuron 1 at 0.5
    x0 *= math.exp(-0.1)
    x1 = (2.0 * math.exp(-0.2) + 0.3) * math.exp(-0.3)  # kick from neuron 0 at 0.2
    x1 = (x1 * math.exp(-0.4) + 0.3) * math.exp(-0.1)
    np.testing.assert_allclose(replay_all(rec, 1.0), [x0, x1], rtol=1e-14)
    assert replay_state(rec, 0, 1.0) == pytest.approx(x0, rel=1e-14)


def test_replay_examples():
    model = ModelSpec(ConstantRate(), ThetaBox((0.5,), (2.0,)), LinearDrift(1.0, 0.0), NoReset(),
                      Dirac(0.6), Dirac(1.0))
    rec = TrajectoryRecord(model, 1, 1.0, np.array([1.0]), np.array([1.0]), np.zeros(0),
                           np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros(0))
    assert replay_state(rec, 0, 0.0) == 1.0
    assert replay_state(rec, 0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    mu = empirical_measure(rec, 0.5)
    assert len(mu.atoms) == 1


def test_poisson_total_counts():
    model = constant_model(0.5, 2.0)
    counts = np.array([simulate(model, [1.0], 50, 2.0, SEED, r).n_events for r in range(400)])
    se_mean = math.sqrt(100 / 400)
    se_var = 100 * math.sqrt(2 / 399)  # Gaussian approximation, adequate at mean 100
    assert abs(counts.mean() - 100) < 4 * se_mean
    assert abs(counts.var(ddof=1) - 100) < 4 * se_var + 4


def test_per_neuron_counts_are_independent_poisson():
    model = constant_model(0.5, 2.0)
    R = 10_000
    first = np.empty(R, dtype=int)
    second = np.empty(R, dtype=int)
    for r in range(R):
        rec = simulate(model, [1.0], 2, 1.0, SEED, r)
        own = rec.times[rec.neurons == 0]
        first[r] = np.sum(own < 0.5)
        second[r] = np.sum(own >= 0.5)
    # chi-square of the neuron-0 count on [0, 1] against Poisson(1)
    total = first + second
    cats = np.minimum(total, 5)
    obs = np.bincount(cats, minlength=6)
    p = stats.poisson.pmf(np.arange(5), 1.0)
    exp = R * np.append(p, 1 - p.sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01
    # disjoint intervals uncorrelated
    corr = np.corrcoef(first, second)[0, 1]
    assert abs(corr) < 4 / math.sqrt(R)
    assert abs(first.mean() - 0.5) < 4 * math.sqrt(0.5 / R)


def test_acceptance_fraction_lower_bound(sig_model):
    rec = simulate(sig_model, [1.0, 1.0], 400, 1.0, SEED)
    b = sig_model.bounds
    frac = acceptance_fraction(sig_model, rec)
    assert b.ell0_inv / b.B0 - 0.02 <= frac <= 1.0


def test_jsonl_round_trip(sp_model):
    rec = simulate(sp_model, [1.0, 1.0], 10, 1.0, SEED)
    text = rec.to_jsonl()
    back = TrajectoryRecord.from_jsonl(io.StringIO(text))
    assert back.to_jsonl() == text
    np.testing.assert_array_equal(back.post_states, rec.post_states)


def test_ledger_projects_events(sig_model):
    rec = simulate(sig_model, [1.0, 1.0], 10, 1.0, SEED)
    led = rec.ledger()
    assert len(led) == rec.n_events
    assert led.atoms() == [(e.time, e.pre_jump_state, e.neuron) for e in rec.events]


def test_wrong_model_hash_rejected(sp_model, const_model):
    rec = simulate(sp_model, [1.0, 1.0], 5, 0.5, SEED)
    with pytest.raises(ValueError):
        TrajectoryRecord.from_jsonl(rec.to_jsonl(), const_model)
