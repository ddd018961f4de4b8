import numpy as np
import pytest

from neurolan.model import (AffineSigmoidRate, ConstantRate, Dirac, LinearDrift, ModelSpec, NoReset,
                            ResetToZero, SoftplusClampRate, ThetaBox, TruncatedGaussian, Uniform,
                            ZeroDrift)

# one seed for every stochastic check, fixed before any result was seen
SEED = 20240601

ACCEPTANCE_LINES = []


def constant_model(lo=0.5, hi=4.0, mark=0.5, init=Uniform(-1.0, 1.0)):
    return ModelSpec(ConstantRate(), ThetaBox((lo,), (hi,)), ZeroDrift(), NoReset(), Dirac(mark), init)


def sigmoid_model(drift=None, reset=None, init=None):
    return ModelSpec(AffineSigmoidRate(0.0, 1.0), ThetaBox((0.25, 0.25), (3.0, 3.0)),
                     drift or ZeroDrift(), reset or NoReset(), Dirac(0.5), init or Uniform(-5.0, 5.0))


def softplus_model():
    return ModelSpec(SoftplusClampRate(0.0, 1.0), ThetaBox((0.0, 0.1), (2.0, 2.0)),
                     LinearDrift(0.5, 0.2), ResetToZero(100.0),
                     TruncatedGaussian(0.5, 0.2, 0.0, 1.0), Uniform(-1.0, 1.0))


@pytest.fixture
def const_model():
    return constant_model()


@pytest.fixture
def sig_model():
    return sigmoid_model()


@pytest.fixture
def sig_linear_model():
    return sigmoid_model(drift=LinearDrift(1.0, 0.0), init=Uniform(-2.0, 2.0))


@pytest.fixture
def sp_model():
    return softplus_model()


THETA_SIG = np.array([1.0, 1.0])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo check")
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
