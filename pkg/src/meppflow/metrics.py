"""Metric operators of the gradient flow dz/dt = K dS.

Three families:

* ``L2Metric``      pointwise mobility, (K F)_i = m_i F_i
* ``WassersteinMetric``  conservative transport metric,
                    K F = -div(M grad F) with a face mobility M >= 0
* ``CoupledMetric`` one non-conserved and one conserved scalar coupled
                    through pointwise 2x2 resistivity blocks H; the block
                    mobility is M = (2H)^-1 via the Schur formulas in
                    :func:`invert_H_blocks`

Each operator supports ``apply`` (the velocity K F) and ``inv_norm_sq``
(the squared dual norm ||v||^2 in the inverse metric, evaluated
variationally: for conservative variants the flux carrying v is recovered
by a constrained quadratic solve, so the operator is never inverted as an
explicit difference formula).

Discretization note for the coupled family: the cross block couples the
non-conserved rate of cell i with the flux through its left face, so the
saddle system inverts pointwise and the closed-form block action and the
assembled saddle solve agree to solver precision. On bounded grids cell 0
has no paired face and its non-conserved component decouples there.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from ._backend import kernels
from .errors import DomainError, RangeError
from .expressions import Expr, evaluate
from .grid import (NO_FLUX, PERIODIC, Field, FluxField, Grid1D, div_values,
                   grad_values, gradient_matrix, same_grid)

ARITHMETIC = "arithmetic"
LOG_MEAN = "log_mean"

_MEAN_RTOL = 1e-8


# -- mobility / coefficient specifications ----------------------------------

@dataclass(frozen=True)
class ConstantMobility:
    value: float


@dataclass(frozen=True)
class LinearMobility:
    """Mobility proportional to the state itself (mass diffusion: M = m rho)."""
    coeff: float = 1.0


@dataclass(frozen=True)
class ExprMobility:
    """Mobility given by an expression over x and named state fields."""
    expr: Expr
    names: tuple[str, ...]


def as_mobility(spec):
    if isinstance(spec, (ConstantMobility, LinearMobility, ExprMobility)):
        return spec
    if isinstance(spec, (int, float)):
        return ConstantMobility(float(spec))
    if callable(spec):
        return spec
    raise TypeError(f"cannot interpret {spec!r} as a mobility")


def _coeff_cells(spec, grid: Grid1D, fields: dict[str, np.ndarray]) -> np.ndarray:
    """Evaluate a coefficient spec to one value per cell."""
    if isinstance(spec, ConstantMobility):
        return np.full(grid.n_cells, spec.value)
    if isinstance(spec, LinearMobility):
        (z,) = fields.values()
        return spec.coeff * z
    if isinstance(spec, ExprMobility):
        env = {"x": grid.cell_centers()}
        env.update(fields)
        out = evaluate(spec.expr, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (grid.n_cells,)).copy()
    # plain callable of the state array(s)
    out = spec(*fields.values())
    return np.broadcast_to(np.asarray(out, dtype=float), (grid.n_cells,)).copy()


# -- face averaging ----------------------------------------------------------

def face_mean_values(rule: str, grid: Grid1D, cells: np.ndarray) -> np.ndarray:
    if rule == ARITHMETIC:
        if grid.bc == PERIODIC:
            return kernels.face_arith_periodic(cells)
        return kernels.face_arith_bounded(cells)
    if rule == LOG_MEAN:
        bad = cells <= 0.0
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"log-mean averaging needs positive values; cell {i} has {cells[i]}",
                index=i)
        if grid.bc == PERIODIC:
            return kernels.face_logmean_periodic(cells)
        return kernels.face_logmean_bounded(cells)
    raise DomainError(f"unknown face averaging rule {rule!r}")


def face_mobility(rule: str, z: Field) -> FluxField:
    """Average cell values onto faces (``arithmetic`` or ``log_mean``; the
    latter makes rho_face * grad(log rho) equal grad(rho) exactly). On
    no-flux grids the boundary faces carry no flux and are reported as 0."""
    vals = face_mean_values(rule, z.grid, z.values)
    if z.grid.bc == NO_FLUX:
        vals = vals.copy()
        vals[0] = 0.0
        vals[-1] = 0.0
    return FluxField(z.grid, vals)


# -- block inversion ---------------------------------------------------------

def invert_H_blocks(h_u, h_c, h_uc):
    """Invert pointwise 2x2 resistivity blocks: M = (2H)^-1 through the
    Schur complements

        M_u  =  1/2 [H_u - H_uc H_c^-1 H_uc]^-1
        M_c  =  1/2 [H_c - H_uc H_u^-1 H_uc]^-1
        M_uc = -1/2 [H_u - H_uc H_c^-1 H_uc]^-1 H_uc H_c^-1

    Inputs may be scalars or arrays; each block [[H_u, H_uc], [H_uc, H_c]]
    must be symmetric positive definite.
    """
    h_u = np.asarray(h_u, dtype=float)
    h_c = np.asarray(h_c, dtype=float)
    h_uc = np.asarray(h_uc, dtype=float)
    det = h_u * h_c - h_uc ** 2
    bad = (h_u <= 0.0) | (h_c <= 0.0) | (det <= 0.0)
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise DomainError(f"resistivity block {i} is not positive definite", index=i)
    schur_u = h_u - h_uc * (h_uc / h_c)
    schur_c = h_c - h_uc * (h_uc / h_u)
    m_u = 0.5 / schur_u
    m_c = 0.5 / schur_c
    m_uc = -0.5 / schur_u * (h_uc / h_c)
    if m_u.ndim == 0:
        return float(m_u), float(m_c), float(m_uc)
    return m_u, m_c, m_uc


def sym_sqrt_blocks(m_u, m_c, m_uc):
    """Symmetric square root of pointwise SPD 2x2 blocks (closed form)."""
    det = m_u * m_c - m_uc ** 2
    s = np.sqrt(det)
    t = np.sqrt(m_u + m_c + 2.0 * s)
    return (m_u + s) / t, (m_c + s) / t, m_uc / t


def chol_blocks(m_u, m_c, m_uc):
    """Lower-triangular factor L with L L^T = [[m_u, m_uc], [m_uc, m_c]]."""
    l11 = np.sqrt(m_u)
    l21 = m_uc / l11
    l22 = np.sqrt(m_c - l21 ** 2)
    return l11, l21, l22


# -- solvers shared by the conservative variants ------------------------------

def _check_zero_mean(grid: Grid1D, v: np.ndarray, what: str,
                     scale_hint: float = 0.0):
    # Tolerance keyed to the larger of the velocity and state scales so that
    # round-off noise on a resting path passes while genuine mass drift in a
    # user-supplied path is rejected.
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    floor = max(scale * grid.length, scale_hint, 1e-300)
    if abs(float(np.sum(v) * grid.dx)) > _MEAN_RTOL * floor:
        raise RangeError(
            f"{what} must have zero discrete mean to lie in the operator range "
            f"(mean = {float(np.mean(v)):.3e})")


def _poisson_solve(grid: Grid1D, face_coeff: np.ndarray, rhs: np.ndarray,
                   scale_hint: float = 0.0) -> np.ndarray:
    """Solve (G^T diag(face_coeff) G) p = rhs with a zero-mean gauge,
    component by component when zero coefficients disconnect the chain.
    ``face_coeff`` lives on the active faces."""
    n = grid.n_cells
    g = gradient_matrix(grid)
    live = face_coeff > 0.0
    if live.all():
        comp_count, labels = 1, np.zeros(n, dtype=int)
    else:
        rows = []
        cols = []
        gcoo = g.tocoo()
        # adjacency from faces with positive mobility
        face_cells: dict[int, list[int]] = {}
        for r, c in zip(gcoo.row, gcoo.col):
            face_cells.setdefault(r, []).append(c)
        for f, cells in face_cells.items():
            if live[f] and len(cells) == 2:
                rows.append(cells[0])
                cols.append(cells[1])
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        comp_count, labels = connected_components(adj, directed=False)

    a = (g.T @ sp.diags(np.where(live, face_coeff, 0.0)) @ g).tocsr()
    p = np.zeros(n)
    for comp in range(comp_count):
        idx = np.flatnonzero(labels == comp)
        if comp_count > 1:
            _check_zero_mean(grid, rhs[idx],
                             "the velocity on a disconnected mobility component",
                             scale_hint=scale_hint)
        sub = a[idx][:, idx]
        m = idx.size
        ones = np.ones((m, 1))
        bordered = sp.bmat([[sub, ones], [ones.T, None]], format="csc")
        sol = spla.spsolve(bordered, np.concatenate([rhs[idx], [0.0]]))
        p[idx] = sol[:m]
    return p


# -- the metric operators -----------------------------------------------------

@dataclass(frozen=True)
class L2Metric:
    """Pointwise multiplicative metric with cell mobility m(z) >= 0."""

    mobility: object = 1.0
    state_name: str = "z"

    def __post_init__(self):
        object.__setattr__(self, "mobility", as_mobility(self.mobility))

    def mobility_values(self, z: Field) -> np.ndarray:
        m = _coeff_cells(self.mobility, z.grid, {self.state_name: z.values})
        if np.any(m < 0.0):
            i = int(np.flatnonzero(m < 0.0)[0])
            raise DomainError(f"negative mobility at cell {i}", index=i)
        return m

    def apply_values(self, grid: Grid1D, z: np.ndarray, f: np.ndarray) -> np.ndarray:
        m = _coeff_cells(self.mobility, grid, {self.state_name: z})
        if np.any(m < 0.0):
            i = int(np.flatnonzero(m < 0.0)[0])
            raise DomainError(f"negative mobility at cell {i}", index=i)
        return m * f

    def apply(self, z: Field, f: Field) -> Field:
        grid = same_grid(z, f)
        return Field(grid, self.apply_values(grid, z.values, f.values))

    def inv_norm_sq(self, z: Field, v: Field) -> float:
        grid = same_grid(z, v)
        m = self.mobility_values(z)
        vv = v.values
        zero = m == 0.0
        if np.any(zero & (vv != 0.0)):
            i = int(np.flatnonzero(zero & (vv != 0.0))[0])
            raise DomainError(
                f"velocity is nonzero at cell {i} where the mobility vanishes",
                index=i)
        out = np.zeros_like(vv)
        np.divide(vv * vv, m, out=out, where=~zero)
        return float(np.sum(out) * grid.dx)


@dataclass(frozen=True)
class WassersteinMetric:
    """Conservative transport metric K = -div(M grad .) with face mobility
    obtained from the cell values of M(z) by the configured averaging rule."""

    mobility: object = LinearMobility(1.0)
    face_mean: str = LOG_MEAN
    state_name: str = "z"

    def __post_init__(self):
        object.__setattr__(self, "mobility", as_mobility(self.mobility))
        if self.face_mean not in (ARITHMETIC, LOG_MEAN):
            raise DomainError(f"unknown face averaging rule {self.face_mean!r}")

    def face_mobility_values(self, grid: Grid1D, z: np.ndarray) -> np.ndarray:
        if grid.bc not in (PERIODIC, NO_FLUX):
            raise DomainError("the conservative transport metric needs a "
                              "closed grid (periodic or no_flux)")
        cells = _coeff_cells(self.mobility, grid, {self.state_name: z})
        faces = face_mean_values(self.face_mean, grid, cells)
        if np.any(faces < 0.0):
            i = int(np.flatnonzero(faces < 0.0)[0])
            raise DomainError(f"negative face mobility at face {i}", index=i)
        return faces

    def apply_values(self, grid: Grid1D, z: np.ndarray, f: np.ndarray) -> np.ndarray:
        mf = self.face_mobility_values(grid, z)
        if grid.bc == PERIODIC:
            return kernels.wasserstein_apply_periodic(mf, f, grid.dx)
        return kernels.wasserstein_apply_bounded(mf, f, grid.dx)

    def apply(self, z: Field, f: Field) -> Field:
        grid = same_grid(z, f)
        return Field(grid, self.apply_values(grid, z.values, f.values))

    def operator_matrix(self, z: Field) -> sp.csr_matrix:
        """Sparse matrix of K at the given state (for linearized steps and
        covariance oracles)."""
        g = gradient_matrix(z.grid)
        mf = self.face_mobility_values(z.grid, z.values)[z.grid.interior_faces()]
        return (g.T @ sp.diags(mf) @ g).tocsr()

    def inv_norm_sq(self, z: Field, v: Field) -> float:
        grid = same_grid(z, v)
        _check_zero_mean(grid, v.values, "a conserved velocity component",
                         scale_hint=float(np.max(np.abs(z.values))))
        mf = self.face_mobility_values(grid, z.values)[grid.interior_faces()]
        p = _poisson_solve(grid, mf, v.values,
                           scale_hint=float(np.max(np.abs(z.values))))
        g = gradient_matrix(grid) @ p
        return float(np.dot(mf * g, g) * grid.dx)


@dataclass(frozen=True)
class CoupledMetric:
    """Block metric for a (non-conserved, conserved) pair with pointwise
    2x2 resistivity blocks evaluated per cell."""

    h_u: object = 1.0
    h_c: object = 1.0
    h_uc: object = 0.0
    state_names: tuple[str, str] = ("u", "c")

    def __post_init__(self):
        object.__setattr__(self, "h_u", as_mobility(self.h_u))
        object.__setattr__(self, "h_c", as_mobility(self.h_c))
        object.__setattr__(self, "h_uc", as_mobility(self.h_uc))

    def blocks(self, grid: Grid1D, zu: np.ndarray, zc: np.ndarray):
        if grid.bc not in (PERIODIC, NO_FLUX):
            raise DomainError("the coupled metric needs a closed grid "
                              "(periodic or no_flux)")
        fields = {self.state_names[0]: zu, self.state_names[1]: zc}
        hu = _coeff_cells(self.h_u, grid, fields)
        hc = _coeff_cells(self.h_c, grid, fields)
        huc = _coeff_cells(self.h_uc, grid, fields)
        det = hu * hc - huc ** 2
        bad = (hu <= 0.0) | (hc <= 0.0) | (det <= 0.0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"resistivity block at cell {i} is not positive definite", index=i)
        return hu, hc, huc

    @staticmethod
    def _paired_cells(grid: Grid1D) -> slice:
        # cell i pairs with its left face; on bounded grids cell 0 has none
        return slice(0, grid.n_cells) if grid.bc == PERIODIC \
            else slice(1, grid.n_cells)

    def apply_values(self, grid: Grid1D, zu, zc, fu, fc):
        hu, hc, huc = self.blocks(grid, zu, zc)
        m_u, m_c, m_uc = invert_H_blocks(hu, hc, huc)
        gfc = grad_values(grid, fc)
        pc = self._paired_cells(grid)
        gp = gfc[grid.interior_faces()]

        zu_dot = np.empty(grid.n_cells)
        zu_dot[pc] = m_u[pc] * fu[pc] + m_uc[pc] * gp
        flux = np.zeros(grid.n_faces)
        flux[grid.interior_faces()] = m_uc[pc] * fu[pc] + m_c[pc] * gp
        if grid.bc != PERIODIC:
            zu_dot[0] = fu[0] / (2.0 * hu[0])
        zc_dot = -div_values(grid, flux)
        return zu_dot, zc_dot, flux

    def apply(self, z: tuple[Field, Field], f: tuple[Field, Field]
              ) -> tuple[Field, Field]:
        grid = same_grid(*z, *f)
        zu_dot, zc_dot, _ = self.apply_values(
            grid, z[0].values, z[1].values, f[0].values, f[1].values)
        return Field(grid, zu_dot), Field(grid, zc_dot)

    def apply_with_flux(self, z, f):
        grid = same_grid(*z, *f)
        zu_dot, zc_dot, flux = self.apply_values(
            grid, z[0].values, z[1].values, f[0].values, f[1].values)
        return Field(grid, zu_dot), Field(grid, zc_dot), FluxField(grid, flux)

    def inv_norm_sq(self, z: tuple[Field, Field], v: tuple[Field, Field]) -> float:
        grid = same_grid(*z, *v)
        vu, vc = v[0].values, v[1].values
        _check_zero_mean(grid, vc, "the conserved velocity component",
                         scale_hint=float(np.max(np.abs(z[1].values))))
        hu, hc, huc = self.blocks(grid, z[0].values, z[1].values)
        pc = self._paired_cells(grid)
        a = hc[pc]                 # face coefficient of the flux penalty
        b = huc[pc] * vu[pc]       # cross drive on the paired faces
        g = gradient_matrix(grid)
        rhs = vc + g.T @ (b / a)   # vc - div(b/a) with div = -G^T
        p = _poisson_solve(grid, 1.0 / (4.0 * a), rhs,
                           scale_hint=float(np.max(np.abs(rhs))) + 1.0)
        flux = ((g @ p) - 4.0 * b) / (4.0 * a)
        val = 2.0 * float(np.sum(hu * vu * vu) * grid.dx)
        val += 2.0 * float(np.sum(2.0 * b * flux + a * flux * flux) * grid.dx)
        return val


MetricOp = L2Metric | WassersteinMetric | CoupledMetric
Mobility = ConstantMobility | LinearMobility | ExprMobility | Callable
