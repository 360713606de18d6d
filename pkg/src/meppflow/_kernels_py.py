"""NumPy fallback for the hot stencil kernels.

The compiled extension ``meppflow._kernels`` implements the same functions;
``meppflow._backend`` picks whichever is importable. Both backends apply the
same operation order per element, so linear kernels agree bit for bit and
kernels containing a logarithm agree to within an ulp or two (NumPy's
vectorized ``log`` and libm may round differently).
"""

import numpy as np

# Faces with |z_right - z_left| below this relative threshold use the
# equal-argument limit of the logarithmic mean.
LOGMEAN_RTOL = 1e-12

COMPILED = False


def grad_periodic(p, dx):
    out = np.empty_like(p)
    out[0] = (p[0] - p[-1]) / dx
    out[1:] = (p[1:] - p[:-1]) / dx
    return out


def grad_bounded(p, dx):
    n = p.shape[0]
    out = np.zeros(n + 1)
    out[1:n] = (p[1:] - p[:-1]) / dx
    return out


def grad_dirichlet(p, dx, left, right):
    n = p.shape[0]
    out = np.empty(n + 1)
    out[0] = 2.0 * (p[0] - left) / dx
    out[1:n] = (p[1:] - p[:-1]) / dx
    out[n] = 2.0 * (right - p[n - 1]) / dx
    return out


def div_periodic(j, dx):
    out = np.empty_like(j)
    out[:-1] = (j[1:] - j[:-1]) / dx
    out[-1] = (j[0] - j[-1]) / dx
    return out


def div_bounded(j, dx):
    return (j[1:] - j[:-1]) / dx


def face_arith_periodic(z):
    out = np.empty_like(z)
    out[0] = 0.5 * (z[-1] + z[0])
    out[1:] = 0.5 * (z[:-1] + z[1:])
    return out


def face_arith_bounded(z):
    n = z.shape[0]
    out = np.empty(n + 1)
    out[0] = z[0]
    out[1:n] = 0.5 * (z[:-1] + z[1:])
    out[n] = z[n - 1]
    return out


def _logmean(a, b):
    # (b - a) / (log b - log a), with the left value as equal-argument limit.
    d = b - a
    small = np.abs(d) <= LOGMEAN_RTOL * np.abs(a)
    num = np.where(small, 1.0, d)
    den = np.where(small, 1.0, np.log(b) - np.log(a))
    return np.where(small, a, num / den)


def _logmean_clipped(a, b):
    # Zero whenever either side is nonpositive; continuous limit of the
    # logarithmic mean as an argument tends to zero from above.
    bad = (a <= 0.0) | (b <= 0.0)
    a = np.where(bad, 1.0, a)
    b = np.where(bad, 1.0, b)
    return np.where(bad, 0.0, _logmean(a, b))


def face_logmean_periodic(z):
    a = np.empty_like(z)
    a[0] = z[-1]
    a[1:] = z[:-1]
    return _logmean(a, z)


def face_logmean_bounded(z):
    n = z.shape[0]
    out = np.empty(n + 1)
    out[0] = z[0]
    out[1:n] = _logmean(z[:-1], z[1:])
    out[n] = z[n - 1]
    return out


def wasserstein_apply_periodic(m_face, f, dx):
    flux = m_face * grad_periodic(f, dx)
    return -div_periodic(flux, dx)


def wasserstein_apply_bounded(m_face, f, dx):
    n = f.shape[0]
    flux = np.zeros(n + 1)
    flux[1:n] = m_face[1:n] * ((f[1:] - f[:-1]) / dx)
    return -div_bounded(flux, dx)


def em_step_wboltz_periodic(rho, coeff, linear_mob, use_logmean, db, sqrt_eps, dt, dx):
    """Euler-Maruyama step of the stochastic diffusion flow (periodic).

    Drift is the Wasserstein/Boltzmann velocity -div(M grad DS) with
    DS = -(log rho + 1) and M the face mobility (coeff * rho for the
    mass-diffusion case, constant coeff otherwise). When the state has
    nonpositive cells the drift falls back to the algebraically identical
    conservative form div(coeff * grad rho); the noise mobility is clipped
    at zero in all cases. Returns (rho_new, clipped_flag).
    """
    n = rho.shape[0]
    rho_l = np.empty_like(rho)
    rho_l[0] = rho[-1]
    rho_l[1:] = rho[:-1]
    clipped = bool(np.any(rho <= 0.0))

    if not clipped:
        ds = -(np.log(rho) + 1.0)
        ds_l = np.empty_like(ds)
        ds_l[0] = ds[-1]
        ds_l[1:] = ds[:-1]
        if linear_mob:
            mf = _logmean(coeff * rho_l, coeff * rho) if use_logmean \
                else 0.5 * (coeff * rho_l + coeff * rho)
        else:
            mf = np.full(n, coeff)
        flux = -dt * (mf * ((ds - ds_l) / dx))
    else:
        flux = dt * (coeff * ((rho - rho_l) / dx))

    if sqrt_eps != 0.0:
        if linear_mob:
            nm = _logmean_clipped(coeff * rho_l, coeff * rho) if use_logmean \
                else np.maximum(0.5 * (coeff * rho_l + coeff * rho), 0.0)
        else:
            nm = np.full(n, coeff)
        flux = flux + sqrt_eps * (np.sqrt(nm) * db)

    out = rho + div_periodic(flux, dx)
    return out, clipped


def em_step_l2grad_periodic(z, m, db, sqrt_eps, dt, dx):
    """Euler-Maruyama step of the pointwise-metric flow of the
    squared-gradient functional: z + dt m div(grad z) + sqrt_eps sqrt(m) dB
    (periodic). Always admissible; returns (z_new, False)."""
    g = grad_periodic(z, dx)
    out = z + dt * (m * div_periodic(g, dx))
    if sqrt_eps != 0.0:
        out = out + sqrt_eps * (np.sqrt(m) * db)
    return out, False


def em_step_l2grad_bounded(z, m, db, sqrt_eps, dt, dx):
    """No-flux variant of ``em_step_l2grad_periodic``."""
    g = grad_bounded(z, dx)
    out = z + dt * (m * div_bounded(g, dx))
    if sqrt_eps != 0.0:
        out = out + sqrt_eps * (np.sqrt(m) * db)
    return out, False


def em_step_wboltz_bounded(rho, coeff, linear_mob, use_logmean, db, sqrt_eps, dt, dx):
    """No-flux variant of ``em_step_wboltz_periodic``; ``db`` covers the
    interior faces only and boundary fluxes stay identically zero."""
    n = rho.shape[0]
    a = rho[:-1]
    b = rho[1:]
    clipped = bool(np.any(rho <= 0.0))

    flux = np.zeros(n + 1)
    if not clipped:
        ds = -(np.log(rho) + 1.0)
        if linear_mob:
            mf = _logmean(coeff * a, coeff * b) if use_logmean \
                else 0.5 * (coeff * a + coeff * b)
        else:
            mf = np.full(n - 1, coeff)
        flux[1:n] = -dt * (mf * ((ds[1:] - ds[:-1]) / dx))
    else:
        flux[1:n] = dt * (coeff * ((b - a) / dx))

    if sqrt_eps != 0.0:
        if linear_mob:
            nm = _logmean_clipped(coeff * a, coeff * b) if use_logmean \
                else np.maximum(0.5 * (coeff * a + coeff * b), 0.0)
        else:
            nm = np.full(n - 1, coeff)
        flux[1:n] = flux[1:n] + sqrt_eps * (np.sqrt(nm) * db)

    out = rho + div_bounded(flux, dx)
    return out, clipped
