"""Per-state maximum-entropy-production saddle solvers.

Each solver maximizes the entropy rate <dS, zdot> under a quadratic length
penalty (and, where applicable, the conservation constraint
zdot + div J = 0 with a Lagrange multiplier). The objectives are quadratic,
so stationarity is one sparse symmetric indefinite linear system; the
assembled solve deliberately avoids the closed-form inverse — the metric
operators in :mod:`meppflow.metrics` provide the independent oracle those
solutions are tested against.

Keeping the stationarity row of the rate variable in the system pins the
multiplier to dS pointwise, so no extra gauge condition is needed even on
periodic grids.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError
from .functionals import PhaseField
from .grid import (PERIODIC, Field, FluxField, Grid1D, gradient_matrix,
                   inner_l2_weighted, same_grid)


@dataclass(frozen=True)
class MeppSolution:
    """Stationary point of a constrained entropy-production objective."""

    zdot: object                     # Field, or (Field, Field) for the pair case
    flux: FluxField | None
    multiplier: Field | None
    lagrangian_value: float


def _embed_flux(grid: Grid1D, active: np.ndarray) -> FluxField:
    if grid.bc == PERIODIC:
        return FluxField(grid, active)
    full = np.zeros(grid.n_faces)
    full[1:grid.n_cells] = active
    return FluxField(grid, full)


def solve_unconstrained(z: Field, s, eta: Field) -> MeppSolution:
    """Maximize <dS, zdot> - <zdot, eta zdot> over unconstrained velocities.

    The stationarity system 2 eta zdot = dS is assembled and solved as a
    linear system; the closed form zdot = dS / (2 eta) is left to the tests.
    """
    grid = same_grid(z, eta)
    if np.any(eta.values <= 0.0):
        i = int(np.flatnonzero(eta.values <= 0.0)[0])
        raise DomainError(f"length penalty must be positive; cell {i} fails", index=i)
    ds = s.derivative(z)
    a = sp.diags(2.0 * eta.values).tocsc()
    zdot = spla.spsolve(a, ds.values)
    zdot_f = Field(grid, zdot)
    value = inner_l2_weighted(ds, zdot_f) - inner_l2_weighted(zdot_f, zdot_f, eta)
    return MeppSolution(zdot=zdot_f, flux=None, multiplier=None,
                        lagrangian_value=value)


def solve_conserved(z: Field, s, h: FluxField) -> MeppSolution:
    """Maximize <dS, zdot> - <lambda, zdot + div J> - <J, H J> over
    (zdot, J, lambda) on a closed grid.

    Solved as one symmetric indefinite sparse system; the solution satisfies
    lambda = dS, grad lambda = 2 H J and zdot = -div J, and must match the
    conservative metric action with face mobility (2H)^-1.
    """
    grid = same_grid(z, h)
    if grid.bc not in (PERIODIC, "no_flux"):
        raise DomainError("conserved maximization needs a closed grid "
                          "(periodic or no_flux)")
    g = gradient_matrix(grid)
    m, n = g.shape
    h_act = h.values[grid.interior_faces()]
    if np.any(h_act <= 0.0):
        i = int(np.flatnonzero(h_act <= 0.0)[0])
        raise DomainError(f"flux penalty must be positive; face {i} fails", index=i)

    ds = s.derivative(z)
    eye = sp.identity(n, format="csr")
    kkt = sp.bmat([
        [None,            None,                  -eye],
        [None,            sp.diags(-2.0 * h_act), g],
        [-eye,            g.T,                   None],
    ], format="csc")
    rhs = np.concatenate([-ds.values, np.zeros(m), np.zeros(n)])
    sol = spla.spsolve(kkt, rhs)
    zdot = Field(grid, sol[:n])
    flux = _embed_flux(grid, sol[n:n + m])
    lam = Field(grid, sol[n + m:])

    penalty = float(np.dot(h_act * sol[n:n + m], sol[n:n + m]) * grid.dx)
    residual = zdot.values + (-(g.T) @ sol[n:n + m])
    value = (inner_l2_weighted(ds, zdot)
             - float(np.dot(lam.values, residual) * grid.dx) - penalty)
    return MeppSolution(zdot=zdot, flux=flux, multiplier=lam,
                        lagrangian_value=value)


def _pair_forces(s, z_u: Field, z_c: Field) -> tuple[Field, Field]:
    if isinstance(s, PhaseField):
        # energy is the conserved component, phase the non-conserved one
        ds_e, ds_phi = s.derivative(z_c, z_u)
        return ds_phi, ds_e
    raise DomainError(
        f"coupled maximization needs a two-field functional, got {type(s).__name__}")


def solve_coupled(z_u: Field, z_c: Field, s, h_u: Field, h_c: Field,
                  h_uc: Field) -> MeppSolution:
    """Coupled variant: maximize
    <dS, zdot> - <Lambda, zdot_c + div J> - <[zdot_u, J], H [zdot_u, J]>
    with pointwise SPD blocks H = [[h_u, h_uc], [h_uc, h_c]]. The cross
    block pairs cell i with its left face.
    """
    grid = same_grid(z_u, z_c, h_u, h_c, h_uc)
    if grid.bc not in (PERIODIC, "no_flux"):
        raise DomainError("coupled maximization needs a closed grid")
    hu, hc, huc = h_u.values, h_c.values, h_uc.values
    det = hu * hc - huc ** 2
    bad = (hu <= 0.0) | (hc <= 0.0) | (det <= 0.0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"resistivity block at cell {i} is not positive definite",
                          index=i)

    ds_u, ds_c = _pair_forces(s, z_u, z_c)
    g = gradient_matrix(grid)
    m, n = g.shape
    paired = np.arange(n) if grid.bc == PERIODIC else np.arange(1, n)
    # cross-coupling matrix: row = paired cell, column = its face
    cross = sp.coo_matrix(
        (2.0 * huc[paired], (paired, np.arange(m))), shape=(n, m)).tocsr()
    eye = sp.identity(n, format="csr")

    kkt = sp.bmat([
        [sp.diags(-2.0 * hu), None,  -cross,                      None],
        [None,                None,  None,                        -eye],
        [-cross.T,            None,  sp.diags(-2.0 * hc[paired]), g],
        [None,                -eye,  g.T,                         None],
    ], format="csc")
    rhs = np.concatenate([-ds_u.values, -ds_c.values, np.zeros(m), np.zeros(n)])
    sol = spla.spsolve(kkt, rhs)
    zu_dot = Field(grid, sol[:n])
    zc_dot = Field(grid, sol[n:2 * n])
    j_act = sol[2 * n:2 * n + m]
    lam = Field(grid, sol[2 * n + m:])
    flux = _embed_flux(grid, j_act)

    penalty = float((np.dot(hu * zu_dot.values, zu_dot.values)
                     + 2.0 * np.dot(huc[paired] * zu_dot.values[paired], j_act)
                     + np.dot(hc[paired] * j_act, j_act)) * grid.dx)
    residual = zc_dot.values + (-(g.T) @ j_act)
    value = (inner_l2_weighted(ds_u, zu_dot) + inner_l2_weighted(ds_c, zc_dot)
             - float(np.dot(lam.values, residual) * grid.dx) - penalty)
    return MeppSolution(zdot=(zu_dot, zc_dot), flux=flux, multiplier=lam,
                        lagrangian_value=value)


def onsager_flux(x: FluxField, conductivity) -> FluxField:
    """Linear flux-force closure J = L X, the maximizer of the classical
    flux-based objective <q, X> - 1/2 <X, L X>; L >= 0 facewise."""
    if isinstance(conductivity, FluxField):
        same_grid(x, conductivity)
        lvals = conductivity.values
    else:
        lvals = np.full(x.grid.n_faces, float(conductivity))
    if np.any(lvals < 0.0):
        i = int(np.flatnonzero(lvals < 0.0)[0])
        raise DomainError(f"negative conductivity at face {i}", index=i)
    vals = lvals * x.values
    if x.grid.bc == "no_flux":
        vals = vals.copy()
        vals[0] = 0.0
        vals[-1] = 0.0
    return FluxField(x.grid, vals)
