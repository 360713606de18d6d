"""Entropy functionals S(z) with analytic variational derivatives and a
finite-difference oracle.

Variants
--------
dirichlet     S = -1/2 sum_f (grad rho)^2 dx, derivative div(grad rho)
boltzmann     S = -sum_i rho log(rho) dx,     derivative -(log rho + 1)
thermal       S = sum_i c_v log(e / c_v) dx,  derivative c_v / e = 1/T
phase_field   two-field entropy s(e, phi, grad phi) built from the free
              energy density
                  f = w phi^2 (1-phi)^2
                    + latent_heat * p(phi) * (T - t_melt) / t_melt
                    + kappa/2 |grad phi|^2  - c_v T log(T / t_melt)
              with p(phi) = phi^2 (3 - 2 phi). The induced energy closure is
                  e = c_v T + w g(phi) - latent_heat p(phi) + kappa/2 |grad phi|^2
              so temperature follows from (e, phi) locally; the derivatives
              are dS/de = 1/T and dS/dphi = -d(f/T)/dphi + div(d(f/T)/d grad phi),
              realized here as the exact gradient of the discrete entropy.

Derivatives are reported as densities (discrete partials divided by dx) so
that the cell inner product of dS with a velocity equals dS/dt.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DomainError
from .grid import (PERIODIC, Field, Grid1D, div_values, grad_values,
                   same_grid)


def _first_bad(mask) -> int:
    return int(np.flatnonzero(mask)[0])


@dataclass(frozen=True)
class Dirichlet:
    """Negative squared-gradient functional of a single field."""

    n_fields = 1

    def admissibility_violation(self, z: np.ndarray):
        return None

    def value(self, z: Field) -> float:
        g = grad_values(z.grid, z.values)
        return float(-0.5 * np.dot(g, g) * z.grid.dx)

    def derivative(self, z: Field) -> Field:
        g = grad_values(z.grid, z.values)
        return Field(z.grid, div_values(z.grid, g))

    def derivative_fd(self, z: Field, h: float = 1e-5) -> Field:
        return _fd_scalar(self, z, h)

    def force_jacobian(self, z: Field):
        from .grid import divergence_matrix, gradient_matrix
        return ("matrix", divergence_matrix(z.grid) @ gradient_matrix(z.grid))


@dataclass(frozen=True)
class Boltzmann:
    """Mixing entropy -rho log rho of a strictly positive density."""

    n_fields = 1

    def admissibility_violation(self, z: np.ndarray):
        bad = z <= 0.0
        return _first_bad(bad) if bad.any() else None

    def _check(self, z: Field):
        i = self.admissibility_violation(z.values)
        if i is not None:
            raise DomainError(
                f"boltzmann entropy needs rho > 0; cell {i} has {z.values[i]}",
                index=i)

    def value(self, z: Field) -> float:
        self._check(z)
        v = z.values
        return float(-np.dot(v, np.log(v)) * z.grid.dx)

    def derivative(self, z: Field) -> Field:
        self._check(z)
        return Field(z.grid, -(np.log(z.values) + 1.0))

    def derivative_fd(self, z: Field, h: float = 1e-5) -> Field:
        return _fd_scalar(self, z, h)

    def force_jacobian(self, z: Field):
        return ("diag", -1.0 / z.values)


@dataclass(frozen=True)
class Thermal:
    """Entropy of a caloric medium with constant volumetric heat capacity;
    e = c_v T, so ds/de = 1/T."""

    c_v: float = 1.0
    n_fields = 1

    def __post_init__(self):
        if not self.c_v > 0.0:
            raise DomainError(f"heat capacity must be positive, got {self.c_v}")

    def admissibility_violation(self, e: np.ndarray):
        bad = e <= 0.0
        return _first_bad(bad) if bad.any() else None

    def _check(self, e: Field):
        i = self.admissibility_violation(e.values)
        if i is not None:
            raise DomainError(
                f"thermal entropy needs e > 0; cell {i} has {e.values[i]}",
                index=i)

    def value(self, e: Field) -> float:
        self._check(e)
        return float(self.c_v * np.sum(np.log(e.values / self.c_v)) * e.grid.dx)

    def derivative(self, e: Field) -> Field:
        self._check(e)
        return Field(e.grid, self.c_v / e.values)

    def derivative_fd(self, e: Field, h: float = 1e-5) -> Field:
        return _fd_scalar(self, e, h)

    def force_jacobian(self, e: Field):
        return ("diag", -self.c_v / e.values ** 2)


def _double_well(phi):
    return phi ** 2 * (1.0 - phi) ** 2


def _double_well_prime(phi):
    return 2.0 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)


def _interp(phi):
    return phi ** 2 * (3.0 - 2.0 * phi)


def _interp_prime(phi):
    return 6.0 * phi * (1.0 - phi)


@dataclass(frozen=True)
class PhaseField:
    """Two-field entropy of an energy density coupled to a phase indicator.

    Parameters: w (double-well height), kappa (gradient-energy
    coefficient), latent_heat, t_melt (transition temperature), c_v
    (volumetric heat capacity of the caloric part).
    """

    w: float = 1.0
    kappa: float = 1e-3
    latent_heat: float = 1.0
    t_melt: float = 1.0
    c_v: float = 1.0
    n_fields = 2

    def __post_init__(self):
        if self.w < 0.0 or self.kappa < 0.0:
            raise DomainError("well height and gradient coefficient must be >= 0")
        if not self.t_melt > 0.0:
            raise DomainError(f"transition temperature must be positive, got {self.t_melt}")
        if not self.c_v > 0.0:
            raise DomainError(f"heat capacity must be positive, got {self.c_v}")

    # -- energy/temperature closure -----------------------------------

    def _grad_energy_density(self, grid: Grid1D, phi: np.ndarray) -> np.ndarray:
        g = grad_values(grid, phi)
        g2 = g * g
        if grid.bc == PERIODIC:
            right = np.roll(g2, -1)
            return 0.25 * self.kappa * (g2 + right)
        return 0.25 * self.kappa * (g2[:-1] + g2[1:])

    def temperature_values(self, grid: Grid1D, e: np.ndarray, phi: np.ndarray) -> np.ndarray:
        gamma = self._grad_energy_density(grid, phi)
        t = (e - self.w * _double_well(phi) + self.latent_heat * _interp(phi)
             - gamma) / self.c_v
        bad = t <= 0.0
        if bad.any():
            i = _first_bad(bad)
            raise DomainError(
                f"nonpositive temperature at cell {i} (T = {t[i]})", index=i)
        return t

    def admissibility_violation(self, grid: Grid1D, e: np.ndarray, phi: np.ndarray):
        gamma = self._grad_energy_density(grid, phi)
        t = (e - self.w * _double_well(phi) + self.latent_heat * _interp(phi)
             - gamma) / self.c_v
        bad = t <= 0.0
        return _first_bad(bad) if bad.any() else None

    def temperature(self, e: Field, phi: Field) -> Field:
        grid = same_grid(e, phi)
        return Field(grid, self.temperature_values(grid, e.values, phi.values))

    def energy_from_temperature(self, t: Field, phi: Field) -> Field:
        """Invert the closure: energy density carrying the given temperature."""
        grid = same_grid(t, phi)
        gamma = self._grad_energy_density(grid, phi.values)
        e = (self.c_v * t.values + self.w * _double_well(phi.values)
             - self.latent_heat * _interp(phi.values) + gamma)
        return Field(grid, e)

    # -- entropy and derivatives ---------------------------------------

    def value(self, e: Field, phi: Field) -> float:
        grid = same_grid(e, phi)
        t = self.temperature_values(grid, e.values, phi.values)
        s = (self.c_v * np.log(t / self.t_melt) + self.c_v
             - (self.latent_heat / self.t_melt) * _interp(phi.values))
        return float(np.sum(s) * grid.dx)

    def derivative(self, e: Field, phi: Field) -> tuple[Field, Field]:
        grid = same_grid(e, phi)
        t = self.temperature_values(grid, e.values, phi.values)
        ds_de = 1.0 / t

        pv = phi.values
        local = ((-self.w * _double_well_prime(pv)
                  + self.latent_heat * _interp_prime(pv)) / t
                 - (self.latent_heat / self.t_melt) * _interp_prime(pv))
        # Exact discrete counterpart of div(kappa/T grad phi): the face
        # weight is kappa times the arithmetic face mean of 1/T.
        inv_t = 1.0 / t
        if grid.bc == PERIODIC:
            beta = self.kappa * kernels.face_arith_periodic(inv_t)
        else:
            beta = self.kappa * kernels.face_arith_bounded(inv_t)
        g = grad_values(grid, pv)
        ds_dphi = local + div_values(grid, beta * g)
        return Field(grid, ds_de), Field(grid, ds_dphi)

    def derivative_fd(self, e: Field, phi: Field, h: float = 1e-5
                      ) -> tuple[Field, Field]:
        grid = same_grid(e, phi)
        inv = 1.0 / (2.0 * h * grid.dx)
        out_e = np.empty(grid.n_cells)
        out_p = np.empty(grid.n_cells)
        ev, pv = e.values.copy(), phi.values.copy()
        for i in range(grid.n_cells):
            ev[i] += h
            plus = self.value(Field(grid, ev), phi)
            ev[i] -= 2 * h
            minus = self.value(Field(grid, ev), phi)
            ev[i] += h
            out_e[i] = (plus - minus) * inv

            pv[i] += h
            plus = self.value(e, Field(grid, pv))
            pv[i] -= 2 * h
            minus = self.value(e, Field(grid, pv))
            pv[i] += h
            out_p[i] = (plus - minus) * inv
        return Field(grid, out_e), Field(grid, out_p)

    def force_jacobian_energy(self, e: Field, phi: Field):
        """d(1/T)/de at fixed phi (diagonal), for linearized implicit steps."""
        grid = same_grid(e, phi)
        t = self.temperature_values(grid, e.values, phi.values)
        return ("diag", -1.0 / (self.c_v * t ** 2))


EntropyFunctional = Dirichlet | Boltzmann | Thermal | PhaseField


def _fd_scalar(functional, z: Field, h: float) -> Field:
    grid = z.grid
    inv = 1.0 / (2.0 * h * grid.dx)
    out = np.empty(grid.n_cells)
    v = z.values.copy()
    for i in range(grid.n_cells):
        v[i] += h
        plus = functional.value(Field(grid, v))
        v[i] -= 2 * h
        minus = functional.value(Field(grid, v))
        v[i] += h
        out[i] = (plus - minus) * inv
    return Field(grid, out)
