"""One-dimensional Wasserstein distance and Gaussian calibration statistics."""
import numpy as np
from scipy import stats


def _atoms(m):
    a = np.asarray(getattr(m, "atoms", m), dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empirical measure has no atoms")
    return np.sort(a)


def wasserstein1(a, b) -> float:
    """W1 distance between two uniform empirical measures on the line.

    Equal sizes pair order statistics; otherwise the two piecewise-constant
    quantile functions are integrated over their merged breakpoints.
    """
    x = _atoms(a)
    y = _atoms(b)
    n, m = x.size, y.size
    if n == m:
        return float(np.mean(np.abs(x - y)))
    # integer breakpoints on the common grid 1/(n*m) avoid rounding in p
    cuts = np.union1d(np.arange(0, n + 1) * m, np.arange(0, m + 1) * n)
    lengths = np.diff(cuts)
    mids2 = cuts[:-1] + cuts[1:]  # twice the midpoint, in units of 1/(n*m)
    ix = mids2 // (2 * m)
    iy = mids2 // (2 * n)
    return float(np.sum(lengths * np.abs(x[ix] - y[iy])) / (n * m))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Two-sided one-sample Kolmogorov-Smirnov critical value."""
    return float(stats.kstwo.ppf(1.0 - alpha, n))


def ks_normal(sample, scale: float = 1.0) -> float:
    """KS statistic of ``sample`` against N(0, scale^2); a point mass at 0 when ``scale`` is 0."""
    if scale == 0.0:
        return float(np.mean(np.asarray(sample) != 0.0))
    return float(stats.kstest(np.asarray(sample, dtype=float), "norm", args=(0.0, scale)).statistic)


def frobenius_relative(a, b) -> float:
    """``||a - b||_F / ||b||_F``; 0 when both vanish, inf when only ``b`` does."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    num = np.linalg.norm(a - b)
    den = np.linalg.norm(b)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def loglog_slope(ns, values) -> float:
    """Unweighted least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])
