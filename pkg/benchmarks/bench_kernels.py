"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--N 1000 4000] [--repeat 5]

Reports the best-of-``repeat`` wall time for thinning (``simulate``) and for the
path moments that drive the score and hessian (``path_moments``), plus the
speedup.  Both backends are also checked to produce the same record and
agreeing moments.
"""
import argparse
import time

import numpy as np

from neurolan import _fallback
from neurolan.likelihood import path_moments
from neurolan.model import AffineSigmoidRate, Dirac, LinearDrift, ModelSpec, NoReset, ThetaBox, Uniform
from neurolan.simulator import simulate

try:
    from neurolan import _kernels
except ImportError:
    _kernels = None


def model():
    return ModelSpec(AffineSigmoidRate(0.0, 1.0), ThetaBox((0.25, 0.25), (3.0, 3.0)),
                     LinearDrift(1.0, 0.0), NoReset(), Dirac(0.5), Uniform(-5.0, 5.0))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[1000, 4000])
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    m = model()
    theta = np.array([1.0, 1.0])
    print(f"{'kernel':<8} {'N':>6} {'events':>7} {'cython s':>10} {'python s':>10} {'speedup':>8}")
    for N in args.N:
        tc, rc = best_of(lambda: simulate(m, theta, N, args.t, 1, backend=_kernels), args.repeat)
        tp, rp = best_of(lambda: simulate(m, theta, N, args.t, 1, backend=_fallback), args.repeat)
        assert np.array_equal(rc.times, rp.times) and np.array_equal(rc.pre_states, rp.pre_states)
        print(f"{'thin':<8} {N:>6} {rc.n_events:>7} {tc:>10.5f} {tp:>10.5f} {tp / tc:>8.1f}")
        tc, mc = best_of(lambda: path_moments(rc, theta, backend=_kernels), args.repeat)
        tp, mp = best_of(lambda: path_moments(rc, theta, backend=_fallback), args.repeat)
        assert np.allclose(mc.info, mp.info, rtol=1e-10, atol=1e-14)
        print(f"{'moments':<8} {N:>6} {rc.n_events:>7} {tc:>10.5f} {tp:>10.5f} {tp / tc:>8.1f}")


if __name__ == "__main__":
    main()
