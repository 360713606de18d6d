# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil kernels (hot inner loops of the integrators).

Each function mirrors its NumPy twin in ``_kernels_py`` operation for
operation; the build disables FP contraction so linear kernels match the
fallback bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

LOGMEAN_RTOL = 1e-12
COMPILED = True

cdef double _LM_RTOL = 1e-12


cdef inline double _lm(double a, double b) noexcept nogil:
    cdef double d = b - a
    if d < 0.0:
        if -d <= _LM_RTOL * (a if a >= 0.0 else -a):
            return a
    else:
        if d <= _LM_RTOL * (a if a >= 0.0 else -a):
            return a
    return d / (log(b) - log(a))


cdef inline double _lm_clipped(double a, double b) noexcept nogil:
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return _lm(a, b)


def grad_periodic(const double[::1] p, double dx):
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    out[0] = (p[0] - p[n - 1]) / dx
    for i in range(1, n):
        out[i] = (p[i] - p[i - 1]) / dx
    return out_arr


def grad_bounded(const double[::1] p, double dx):
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.zeros(n + 1)
    cdef double[::1] out = out_arr
    for i in range(1, n):
        out[i] = (p[i] - p[i - 1]) / dx
    return out_arr


def grad_dirichlet(const double[::1] p, double dx, double left, double right):
    cdef Py_ssize_t n = p.shape[0], i
    out_arr = np.empty(n + 1)
    cdef double[::1] out = out_arr
    out[0] = 2.0 * (p[0] - left) / dx
    for i in range(1, n):
        out[i] = (p[i] - p[i - 1]) / dx
    out[n] = 2.0 * (right - p[n - 1]) / dx
    return out_arr


def div_periodic(const double[::1] j, double dx):
    cdef Py_ssize_t n = j.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n - 1):
        out[i] = (j[i + 1] - j[i]) / dx
    out[n - 1] = (j[0] - j[n - 1]) / dx
    return out_arr


def div_bounded(const double[::1] j, double dx):
    cdef Py_ssize_t n = j.shape[0] - 1, i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = (j[i + 1] - j[i]) / dx
    return out_arr


def face_arith_periodic(const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    out[0] = 0.5 * (z[n - 1] + z[0])
    for i in range(1, n):
        out[i] = 0.5 * (z[i - 1] + z[i])
    return out_arr


def face_arith_bounded(const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], i
    out_arr = np.empty(n + 1)
    cdef double[::1] out = out_arr
    out[0] = z[0]
    for i in range(1, n):
        out[i] = 0.5 * (z[i - 1] + z[i])
    out[n] = z[n - 1]
    return out_arr


def face_logmean_periodic(const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    out[0] = _lm(z[n - 1], z[0])
    for i in range(1, n):
        out[i] = _lm(z[i - 1], z[i])
    return out_arr


def face_logmean_bounded(const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], i
    out_arr = np.empty(n + 1)
    cdef double[::1] out = out_arr
    out[0] = z[0]
    for i in range(1, n):
        out[i] = _lm(z[i - 1], z[i])
    out[n] = z[n - 1]
    return out_arr


def wasserstein_apply_periodic(const double[::1] m_face, const double[::1] f, double dx):
    cdef Py_ssize_t n = f.shape[0], i
    flux_arr = np.empty(n)
    cdef double[::1] flux = flux_arr
    flux[0] = m_face[0] * ((f[0] - f[n - 1]) / dx)
    for i in range(1, n):
        flux[i] = m_face[i] * ((f[i] - f[i - 1]) / dx)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n - 1):
        out[i] = -((flux[i + 1] - flux[i]) / dx)
    out[n - 1] = -((flux[0] - flux[n - 1]) / dx)
    return out_arr


def wasserstein_apply_bounded(const double[::1] m_face, const double[::1] f, double dx):
    cdef Py_ssize_t n = f.shape[0], i
    flux_arr = np.zeros(n + 1)
    cdef double[::1] flux = flux_arr
    for i in range(1, n):
        flux[i] = m_face[i] * ((f[i] - f[i - 1]) / dx)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = -((flux[i + 1] - flux[i]) / dx)
    return out_arr


def em_step_wboltz_periodic(const double[::1] rho, double coeff, bint linear_mob,
                            bint use_logmean, const double[::1] db,
                            double sqrt_eps, double dt, double dx):
    """See ``_kernels_py.em_step_wboltz_periodic``."""
    cdef Py_ssize_t n = rho.shape[0], i, il
    cdef bint clipped = False
    cdef double a, b, mf, nm, g
    for i in range(n):
        if rho[i] <= 0.0:
            clipped = True
            break

    flux_arr = np.empty(n)
    cdef double[::1] flux = flux_arr
    ds_arr = np.empty(n)
    cdef double[::1] ds = ds_arr

    if not clipped:
        for i in range(n):
            ds[i] = -(log(rho[i]) + 1.0)
        for i in range(n):
            il = n - 1 if i == 0 else i - 1
            a = rho[il]
            b = rho[i]
            if linear_mob:
                mf = _lm(coeff * a, coeff * b) if use_logmean \
                    else 0.5 * (coeff * a + coeff * b)
            else:
                mf = coeff
            flux[i] = -dt * (mf * ((ds[i] - ds[il]) / dx))
    else:
        for i in range(n):
            il = n - 1 if i == 0 else i - 1
            flux[i] = dt * (coeff * ((rho[i] - rho[il]) / dx))

    if sqrt_eps != 0.0:
        for i in range(n):
            il = n - 1 if i == 0 else i - 1
            a = rho[il]
            b = rho[i]
            if linear_mob:
                nm = _lm_clipped(coeff * a, coeff * b) if use_logmean \
                    else max(0.5 * (coeff * a + coeff * b), 0.0)
            else:
                nm = coeff
            flux[i] = flux[i] + sqrt_eps * (sqrt(nm) * db[i])

    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n - 1):
        out[i] = rho[i] + (flux[i + 1] - flux[i]) / dx
    out[n - 1] = rho[n - 1] + (flux[0] - flux[n - 1]) / dx
    return out_arr, clipped


def em_step_l2grad_periodic(const double[::1] z, double m, const double[::1] db,
                            double sqrt_eps, double dt, double dx):
    """See ``_kernels_py.em_step_l2grad_periodic``."""
    cdef Py_ssize_t n = z.shape[0], i, il, ir
    cdef double sm = sqrt(m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    g_arr = np.empty(n)
    cdef double[::1] g = g_arr
    g[0] = (z[0] - z[n - 1]) / dx
    for i in range(1, n):
        g[i] = (z[i] - z[i - 1]) / dx
    for i in range(n):
        ir = 0 if i == n - 1 else i + 1
        out[i] = z[i] + dt * (m * ((g[ir] - g[i]) / dx))
    if sqrt_eps != 0.0:
        for i in range(n):
            out[i] = out[i] + sqrt_eps * (sm * db[i])
    return out_arr, False


def em_step_l2grad_bounded(const double[::1] z, double m, const double[::1] db,
                           double sqrt_eps, double dt, double dx):
    """See ``_kernels_py.em_step_l2grad_bounded``."""
    cdef Py_ssize_t n = z.shape[0], i
    cdef double sm = sqrt(m)
    g_arr = np.zeros(n + 1)
    cdef double[::1] g = g_arr
    for i in range(1, n):
        g[i] = (z[i] - z[i - 1]) / dx
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = z[i] + dt * (m * ((g[i + 1] - g[i]) / dx))
    if sqrt_eps != 0.0:
        for i in range(n):
            out[i] = out[i] + sqrt_eps * (sm * db[i])
    return out_arr, False


def em_step_wboltz_bounded(const double[::1] rho, double coeff, bint linear_mob,
                           bint use_logmean, const double[::1] db,
                           double sqrt_eps, double dt, double dx):
    """See ``_kernels_py.em_step_wboltz_bounded``."""
    cdef Py_ssize_t n = rho.shape[0], i
    cdef bint clipped = False
    cdef double a, b, mf, nm
    for i in range(n):
        if rho[i] <= 0.0:
            clipped = True
            break

    flux_arr = np.zeros(n + 1)
    cdef double[::1] flux = flux_arr
    ds_arr = np.empty(n)
    cdef double[::1] ds = ds_arr

    if not clipped:
        for i in range(n):
            ds[i] = -(log(rho[i]) + 1.0)
        for i in range(1, n):
            a = rho[i - 1]
            b = rho[i]
            if linear_mob:
                mf = _lm(coeff * a, coeff * b) if use_logmean \
                    else 0.5 * (coeff * a + coeff * b)
            else:
                mf = coeff
            flux[i] = -dt * (mf * ((ds[i] - ds[i - 1]) / dx))
    else:
        for i in range(1, n):
            flux[i] = dt * (coeff * ((rho[i] - rho[i - 1]) / dx))

    if sqrt_eps != 0.0:
        for i in range(1, n):
            a = rho[i - 1]
            b = rho[i]
            if linear_mob:
                nm = _lm_clipped(coeff * a, coeff * b) if use_logmean \
                    else max(0.5 * (coeff * a + coeff * b), 0.0)
            else:
                nm = coeff
            flux[i] = flux[i] + sqrt_eps * (sqrt(nm) * db[i - 1])

    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(n):
        out[i] = rho[i] + (flux[i + 1] - flux[i]) / dx
    return out_arr, clipped
