"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

``thin`` reproduces the compiled loop operation for operation (scalar
``math`` calls, same evaluation order), so both backends generate identical
records.  ``moments`` vectorises over neurons with numpy and agrees with the
compiled version up to summation order.
"""
import math

import numpy as np


def _phi1(z):
    # (1 - exp(-z)) / z without cancellation; 1 at z = 0
    if z == 0.0:
        return 1.0
    return -math.expm1(-z) / z


def _sig(x, center, scale):
    try:
        e = math.exp(-(x - center) / scale)
    except OverflowError:
        e = math.inf
    return 1.0 / (1.0 + e)


def _rate(fam, hyp, th, x):
    if fam == 0:
        return th[0]
    s = _sig(x, hyp[0], hyp[1])
    if fam == 1:
        return th[0] + th[1] * s
    if fam == 2:
        return th[0] + hyp[2] * s
    z = th[0] + th[1] * s
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def _phi(reset, rmax, x):
    if reset == 0:
        return 0.0
    y = x
    if y < -rmax:
        y = -rmax
    if y > rmax:
        y = rmax
    return -y


def thin(x0, times, picks, coins, marks, fam, hyper, theta, B0, drift, lam, c, reset, rmax):
    N = len(x0)
    Y = [float(v) for v in x0]
    hyp = [float(v) for v in hyper]
    th = [float(v) for v in theta]
    times = times.tolist()
    picks = picks.tolist()
    coins = coins.tolist()
    marks = marks.tolist()
    invN = 1.0 / N
    a, g, tlast = 1.0, 0.0, 0.0
    acc, xpre = [], []
    for k in range(len(times)):
        s = times[k]
        dt = s - tlast
        if drift == 1:
            if lam == 0.0:
                g = g + c * dt
            else:
                e = math.exp(-lam * dt)
                a = a * e
                g = g * e + c * dt * _phi1(lam * dt)
        tlast = s
        j = picks[k]
        x = a * Y[j] + g
        f = _rate(fam, hyp, th, x)
        if coins[k] * B0 < f:
            g = g + marks[k] * invN
            xnew = x + _phi(reset, rmax, x)
            Y[j] = (xnew - g) / a
            acc.append(k)
            xpre.append(x)
            if a < 1e-8:
                Y = [a * y + g for y in Y]
                a, g = 1.0, 0.0
    return np.asarray(acc, dtype=np.int64), np.asarray(xpre, dtype=np.float64)


def _family_terms(fam, hyp, th, d, x):
    """Return f, grad (n, d), hess (n, d, d) for the coded families."""
    n = x.shape[0]
    if fam == 0:
        return np.full(n, th[0]), np.ones((n, 1)), np.zeros((n, 1, 1))
    s = 1.0 / (1.0 + np.exp(-(x - hyp[0]) / hyp[1]))
    if fam == 2:
        return th[0] + hyp[2] * s, np.ones((n, 1)), np.zeros((n, 1, 1))
    v = np.stack([np.ones(n), s], axis=-1)
    if fam == 1:
        return th[0] + th[1] * s, v, np.zeros((n, 2, 2))
    z = th[0] + th[1] * s
    f = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0.0))))
    L = 1.0 / (1.0 + np.exp(-z))
    return f, L[:, None] * v, (L * (1 - L))[:, None, None] * v[:, :, None] * v[:, None, :]


def moments(x0, ev_t, ev_j, ev_u, t_end, fam, hyper, theta, d, drift, lam, c, reset, rmax, gl_x, gl_w):
    N = x0.shape[0]
    X = np.array(x0, dtype=float, copy=True)
    acc_f = 0.0
    acc_g = np.zeros(d)
    acc_h = np.zeros((d, d))
    acc_i = np.zeros((d, d))

    def add(states, w):
        nonlocal acc_f
        f, gr, he = _family_terms(fam, hyper, theta, d, states)
        acc_f += w * f.sum()
        acc_g[:] += w * gr.sum(axis=0)
        acc_h[:] += w * he.sum(axis=0)
        acc_i[:] += w * np.einsum("ni,nj,n->ij", gr, gr, 1.0 / f)

    tprev = 0.0
    K = len(ev_t)
    for k in range(K + 1):
        tk = ev_t[k] if k < K else t_end
        dt = tk - tprev
        if dt > 0:
            if drift == 0:
                add(X, dt / N)
            else:
                for xq, wq in zip(gl_x, gl_w):
                    tau = 0.5 * dt * (1.0 + xq)
                    w = 0.5 * dt * wq / N
                    if lam == 0.0:
                        add(X + c * tau, w)
                    else:
                        e = math.exp(-lam * tau)
                        add(e * X + c * tau * _phi1(lam * tau), w)
                if lam == 0.0:
                    X = X + c * dt
                else:
                    e = math.exp(-lam * dt)
                    X = e * X + c * dt * _phi1(lam * dt)
        if k == K:
            break
        j = ev_j[k]
        xj = X[j]
        X += ev_u[k] * (1.0 / N)
        X[j] = xj + _phi(reset, rmax, xj)
        tprev = tk
    return np.concatenate([[acc_f], acc_g, acc_h.ravel(), acc_i.ravel()])
