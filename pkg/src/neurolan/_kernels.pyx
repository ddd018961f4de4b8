# Compiled hot loops: superposition thinning and path moments.
#
# Family codes: 0 Constant, 1 AffineSigmoid, 2 AffineSigmoid with frozen
# amplitude, 3 SoftplusClamp.  hyper = (center, scale, amplitude).
# Drift codes: 0 zero, 1 linear (-lam*x + c).  Reset codes: 0 none,
# 1 reset-to-zero clamped at rmax.
#
# The arithmetic mirrors neurolan._fallback operation for operation so that
# both backends return bit-identical simulations.
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, log1p

cnp.import_array()


cdef inline double _phi1(double z) nogil:
    # (1 - exp(-z)) / z without cancellation; 1 at z = 0
    if z == 0.0:
        return 1.0
    return -expm1(-z) / z


cdef inline double _sig(double x, double center, double scale) noexcept nogil:
    return 1.0 / (1.0 + exp(-(x - center) / scale))


cdef inline double _rate(int fam, const double* hyp, const double* th, double x) noexcept nogil:
    cdef double s, z
    if fam == 0:
        return th[0]
    s = _sig(x, hyp[0], hyp[1])
    if fam == 1:
        return th[0] + th[1] * s
    if fam == 2:
        return th[0] + hyp[2] * s
    z = th[0] + th[1] * s
    if z > 0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _phi(int reset, double rmax, double x) noexcept nogil:
    cdef double y
    if reset == 0:
        return 0.0
    y = x
    if y < -rmax:
        y = -rmax
    if y > rmax:
        y = rmax
    return -y


def thin(const double[::1] x0, const double[::1] times, const cnp.int64_t[::1] picks,
         const double[::1] coins, const double[::1] marks, int fam, const double[::1] hyper,
         const double[::1] theta, double B0, int drift, double lam, double c,
         int reset, double rmax):
    """Run the thinning loop over pre-drawn candidates.

    Returns the indices of accepted candidates and the pre-jump potentials.
    """
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = times.shape[0]
    cdef Py_ssize_t k, i, j, n_acc = 0
    cdef double a = 1.0, g = 0.0, tlast = 0.0, s, dt, e, x, f, xnew
    cdef double[::1] Y = np.array(x0, dtype=np.float64, copy=True)
    acc_arr = np.empty(K, dtype=np.int64)
    xpre_arr = np.empty(K, dtype=np.float64)
    cdef cnp.int64_t[::1] acc = acc_arr
    cdef double[::1] xpre = xpre_arr
    cdef double invN = 1.0 / N
    with nogil:
        for k in range(K):
            s = times[k]
            dt = s - tlast
            if drift == 1:
                if lam == 0.0:
                    g = g + c * dt
                else:
                    e = exp(-lam * dt)
                    a = a * e
                    g = g * e + c * dt * _phi1(lam * dt)
            tlast = s
            j = picks[k]
            x = a * Y[j] + g
            f = _rate(fam, &hyper[0], &theta[0], x)
            if coins[k] * B0 < f:
                g = g + marks[k] * invN
                xnew = x + _phi(reset, rmax, x)
                Y[j] = (xnew - g) / a
                acc[n_acc] = k
                xpre[n_acc] = x
                n_acc += 1
                if a < 1e-8:
                    for i in range(N):
                        Y[i] = a * Y[i] + g
                    a = 1.0
                    g = 0.0
    return acc_arr[:n_acc].copy(), xpre_arr[:n_acc].copy()


cdef inline void _accumulate(int fam, const double* hyp, const double* th, int d, double x,
                             double w, double* acc) noexcept nogil:
    # acc layout: [int_f, grad(d), hess(d*d), info(d*d)]
    cdef double s, z, L, f, lp
    cdef double gr0, gr1
    if fam == 0:
        f = th[0]
        acc[0] += w * f
        acc[1] += w
        acc[3] += w / f
        return
    s = _sig(x, hyp[0], hyp[1])
    if fam == 2:
        f = th[0] + hyp[2] * s
        acc[0] += w * f
        acc[1] += w
        acc[3] += w / f
        return
    if fam == 1:
        f = th[0] + th[1] * s
        acc[0] += w * f
        acc[1] += w
        acc[2] += w * s
        # hess is identically zero
        acc[7] += w / f
        acc[8] += w * s / f
        acc[10] += w * s * s / f
        return
    z = th[0] + th[1] * s
    if z > 0:
        f = z + log1p(exp(-z))
    else:
        f = log1p(exp(z))
    L = 1.0 / (1.0 + exp(-z))
    lp = L * (1.0 - L)
    gr0 = L
    gr1 = L * s
    acc[0] += w * f
    acc[1] += w * gr0
    acc[2] += w * gr1
    acc[3] += w * lp
    acc[4] += w * lp * s
    acc[6] += w * lp * s * s
    acc[7] += w * gr0 * gr0 / f
    acc[8] += w * gr0 * gr1 / f
    acc[10] += w * gr1 * gr1 / f


def moments(const double[::1] x0, const double[::1] ev_t, const cnp.int64_t[::1] ev_j,
            const double[::1] ev_u, double t_end, int fam, const double[::1] hyper,
            const double[::1] theta, int d, int drift, double lam, double c,
            int reset, double rmax, const double[::1] gl_x, const double[::1] gl_w):
    """Time integrals of the empirical measure against f, grad f, hess f, grad f grad f^T / f.

    Returns a flat array ``[int_f, grad(d), hess(d*d), info(d*d)]``, each
    integral being ``int_0^t mu_s[.] ds``.
    """
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = ev_t.shape[0]
    cdef Py_ssize_t Q = gl_x.shape[0]
    cdef Py_ssize_t k, i, q, j, m
    cdef int size = 1 + d + 2 * d * d
    cdef double[::1] X = np.array(x0, dtype=np.float64, copy=True)
    out_arr = np.zeros(size, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[12] loc
    cdef double tprev = 0.0, tk, dt, e, tau, w, x, u, xj, invN = 1.0 / N
    with nogil:
        for k in range(K + 1):
            if k < K:
                tk = ev_t[k]
            else:
                tk = t_end
            dt = tk - tprev
            if dt > 0:
                for m in range(12):
                    loc[m] = 0.0
                if drift == 0:
                    w = dt * invN
                    for i in range(N):
                        _accumulate(fam, &hyper[0], &theta[0], d, X[i], w, &loc[0])
                else:
                    for q in range(Q):
                        tau = 0.5 * dt * (1.0 + gl_x[q])
                        w = 0.5 * dt * gl_w[q] * invN
                        if lam == 0.0:
                            for i in range(N):
                                x = X[i] + c * tau
                                _accumulate(fam, &hyper[0], &theta[0], d, x, w, &loc[0])
                        else:
                            e = exp(-lam * tau)
                            for i in range(N):
                                x = e * X[i] + c * tau * _phi1(lam * tau)
                                _accumulate(fam, &hyper[0], &theta[0], d, x, w, &loc[0])
                    if lam == 0.0:
                        for i in range(N):
                            X[i] = X[i] + c * dt
                    else:
                        e = exp(-lam * dt)
                        for i in range(N):
                            X[i] = e * X[i] + c * dt * _phi1(lam * dt)
                for m in range(size):
                    out[m] += loc[m]
            if k == K:
                break
            j = ev_j[k]
            u = ev_u[k] * invN
            xj = X[j]
            for i in range(N):
                X[i] = X[i] + u
            X[j] = xj + _phi(reset, rmax, xj)
            tprev = tk
    return out_arr
