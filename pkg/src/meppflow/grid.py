"""1-D staggered grid: cell-centered states, face-centered fluxes.

Scalar states (density, energy, phase, multipliers) live at cell centers
x_i = (i + 1/2) dx; fluxes live at faces x_j = j dx. The discrete gradient
(cells -> faces) and divergence (faces -> cells) are exact negative
adjoints under the natural dx-weighted inner products, so every
integration-by-parts identity downstream holds to machine precision
instead of O(dx).

Boundary handling:
    periodic    n faces, face 0 identified with face n
    no_flux     n+1 faces, boundary fluxes pinned to zero
    dirichlet   n+1 faces, boundary values held at the wall; gradients at
                the end faces use the half-cell spacing to the wall value
                (first order at the wall, and the discrete steady state of
                a constant-coefficient flux is exactly linear through the
                cell centers)
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._backend import kernels
from .errors import DomainError, GridMismatchError

PERIODIC = "periodic"
NO_FLUX = "no_flux"
DIRICHLET = "dirichlet"

_BC_KINDS = (PERIODIC, NO_FLUX, DIRICHLET)


@dataclass(frozen=True)
class Grid1D:
    """Uniform staggered grid over [0, length]."""

    n_cells: int
    length: float = 1.0
    bc: str = PERIODIC
    bc_left: float | None = None
    bc_right: float | None = None

    def __post_init__(self):
        if self.n_cells < 3:
            raise DomainError(f"grid needs at least 3 cells, got {self.n_cells}")
        if not self.length > 0.0:
            raise DomainError(f"grid length must be positive, got {self.length}")
        if self.bc not in _BC_KINDS:
            raise DomainError(f"unknown boundary kind {self.bc!r}")
        if self.bc == DIRICHLET:
            if self.bc_left is None or self.bc_right is None:
                raise DomainError("dirichlet grid requires bc_left and bc_right")
        elif self.bc_left is not None or self.bc_right is not None:
            raise DomainError(f"boundary values only apply to dirichlet grids, not {self.bc!r}")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def n_faces(self) -> int:
        return self.n_cells if self.bc == PERIODIC else self.n_cells + 1

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def face_coords(self) -> np.ndarray:
        return np.arange(self.n_faces) * self.dx

    def interior_faces(self) -> slice:
        """Faces that carry degrees of freedom on a closed grid."""
        return slice(0, self.n_cells) if self.bc == PERIODIC \
            else slice(1, self.n_cells)


def _freeze(values) -> np.ndarray:
    v = np.array(values, dtype=float)
    v.setflags(write=False)
    return v


class Field:
    """Immutable cell-centered scalar field."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid1D, values):
        v = _freeze(values)
        if v.shape != (grid.n_cells,):
            raise GridMismatchError(
                f"field needs {grid.n_cells} cell values, got shape {v.shape}")
        if not np.isfinite(v).all():
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DomainError(f"non-finite field value at cell {bad}", index=bad)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __len__(self):
        return self.grid.n_cells

    def __repr__(self):
        return f"Field(n={self.grid.n_cells}, bc={self.grid.bc})"

    @classmethod
    def full(cls, grid: Grid1D, value: float) -> "Field":
        return cls(grid, np.full(grid.n_cells, float(value)))

    def x(self) -> np.ndarray:
        return self.grid.cell_centers()


class FluxField:
    """Immutable face-centered field. Under no-flux boundaries the end
    faces are identically zero."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid1D, values):
        v = _freeze(values)
        if v.shape != (grid.n_faces,):
            raise GridMismatchError(
                f"flux field needs {grid.n_faces} face values, got shape {v.shape}")
        if not np.isfinite(v).all():
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DomainError(f"non-finite flux value at face {bad}", index=bad)
        if grid.bc == NO_FLUX and (v[0] != 0.0 or v[-1] != 0.0):
            raise DomainError("no-flux grid requires zero boundary fluxes")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("FluxField is immutable")

    def __len__(self):
        return self.grid.n_faces

    def __repr__(self):
        return f"FluxField(n_faces={self.grid.n_faces}, bc={self.grid.bc})"

    @classmethod
    def full(cls, grid: Grid1D, value: float) -> "FluxField":
        v = np.full(grid.n_faces, float(value))
        if grid.bc == NO_FLUX:
            v[0] = 0.0
            v[-1] = 0.0
        return cls(grid, v)

    def x(self) -> np.ndarray:
        return self.grid.face_coords()


def same_grid(*objs):
    g = objs[0].grid
    for o in objs[1:]:
        if o is not None and o.grid is not g and o.grid != g:
            raise GridMismatchError("operands live on different grids")
    return g


# -- raw-array stencils (used by the integrators; public ops wrap them) -----

def grad_values(grid: Grid1D, p: np.ndarray) -> np.ndarray:
    if grid.bc == PERIODIC:
        return kernels.grad_periodic(p, grid.dx)
    if grid.bc == NO_FLUX:
        return kernels.grad_bounded(p, grid.dx)
    return kernels.grad_dirichlet(p, grid.dx, grid.bc_left, grid.bc_right)


def div_values(grid: Grid1D, j: np.ndarray) -> np.ndarray:
    if grid.bc == PERIODIC:
        return kernels.div_periodic(j, grid.dx)
    return kernels.div_bounded(j, grid.dx)


def gradient(p: Field) -> FluxField:
    """Discrete gradient, cells to faces. Periodic wraps; no-flux end faces
    are zero; dirichlet end faces difference against the wall values over
    the half cell."""
    return FluxField(p.grid, grad_values(p.grid, p.values))


def divergence(j: FluxField) -> Field:
    """Discrete divergence, faces to cells; exact negative adjoint of
    :func:`gradient` on periodic and no-flux grids."""
    return Field(j.grid, div_values(j.grid, j.values))


def inner_l2_weighted(f: Field, g: Field, w: Field | None = None) -> float:
    """Weighted cell inner product sum_i w_i f_i g_i dx (w omitted: plain L2)."""
    grid = same_grid(f, g) if w is None else same_grid(f, g, w)
    if w is None:
        return float(np.dot(f.values, g.values) * grid.dx)
    return float(np.dot(f.values * g.values, w.values) * grid.dx)


def inner_faces(j1: FluxField, j2: FluxField) -> float:
    """Face inner product sum_f j1_f j2_f dx."""
    grid = same_grid(j1, j2)
    return float(np.dot(j1.values, j2.values) * grid.dx)


def h1_seminorm_weighted(p1: Field, p2: Field, m: FluxField) -> float:
    """Weighted H1 pairing sum_f m_f (grad p1)_f (grad p2)_f dx; m >= 0."""
    grid = same_grid(p1, p2, m)
    if np.any(m.values < 0.0):
        bad = int(np.flatnonzero(m.values < 0.0)[0])
        raise DomainError(f"negative H1 weight at face {bad}", index=bad)
    g1 = grad_values(grid, p1.values)
    g2 = grad_values(grid, p2.values)
    return float(np.dot(m.values * g1, g2) * grid.dx)


def total(f: Field) -> float:
    """Conserved total sum_i f_i dx."""
    return float(np.sum(f.values) * f.grid.dx)


def write_values_csv(obj, path):
    """Serialize a Field or FluxField as ``x,value`` rows in ascending x
    with full round-trip float formatting."""
    import csv
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "value"])
        for xi, vi in zip(obj.x(), obj.values):
            wr.writerow([repr(float(xi)), repr(float(vi))])


def read_values_csv(grid: Grid1D, path, kind: str = "field"):
    """Load a Field (``kind='field'``) or FluxField (``kind='flux'``) written
    by :func:`write_values_csv`; coordinates must match the grid."""
    import csv
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["x", "value"]:
            raise DomainError(f"unexpected CSV header {header!r}")
        rows = [(float(a), float(b)) for a, b in rd]
    xs = np.array([r[0] for r in rows])
    vals = np.array([r[1] for r in rows])
    expect = grid.cell_centers() if kind == "field" else grid.face_coords()
    if xs.shape != expect.shape or not np.allclose(xs, expect, atol=1e-12):
        raise DomainError("CSV coordinates do not match the grid")
    return Field(grid, vals) if kind == "field" else FluxField(grid, vals)


# -- sparse operator assembly (saddle solvers, invariant checks) ------------

def gradient_matrix(grid: Grid1D) -> sp.csr_matrix:
    """Matrix of the discrete gradient restricted to the active faces
    (all faces on periodic grids, interior faces on bounded grids)."""
    n = grid.n_cells
    inv = 1.0 / grid.dx
    if grid.bc == PERIODIC:
        rows = np.repeat(np.arange(n), 2)
        cols = np.empty(2 * n, dtype=int)
        vals = np.empty(2 * n)
        cols[0::2] = np.arange(n)            # right cell of face f is cell f
        cols[1::2] = (np.arange(n) - 1) % n  # left cell
        vals[0::2] = inv
        vals[1::2] = -inv
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m = n - 1  # interior faces 1..n-1
    rows = np.repeat(np.arange(m), 2)
    cols = np.empty(2 * m, dtype=int)
    vals = np.empty(2 * m)
    cols[0::2] = np.arange(1, n)
    cols[1::2] = np.arange(0, n - 1)
    vals[0::2] = inv
    vals[1::2] = -inv
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def divergence_matrix(grid: Grid1D) -> sp.csr_matrix:
    """Matrix of the discrete divergence on the active faces; equals the
    negative transpose of :func:`gradient_matrix` on closed grids."""
    return (-gradient_matrix(grid).T).tocsr()
