"""Stochastically perturbed gradient flows
dz = K dS dt + sqrt(eps) sigma dB with sigma a square root of the metric.

Noise discretization: space-time white noise over one step is an i.i.d.
Gaussian per cell (or face) with variance dt/dx. For conservative metrics
the root is taken in divergence form, sigma dB = div(M^(1/2) dB), so every
replica preserves the conserved total exactly; for the block metric the
pointwise 2x2 mobility root acts on a (cell, face) increment pair and the
divergence is applied to the conserved row. Different roots of the same
metric (symmetric vs triangular) are statistically equivalent.

Reproducibility: increments come from a counter-based generator keyed by
(seed, stream_id) with the counter jumped to (step, where), so trajectories
are independent streams, any step can be replayed in isolation, and equal
(seed, stream_id) reproduce increments bit for bit.

Mobility under noise excursions (negative density): the mobility inside
the square root is evaluated at the state clipped at zero; the
deterministic drift is untouched. Runs report how many steps clipped.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .evolve import Trajectory, make_engine
from .grid import NO_FLUX, PERIODIC, Field, FluxField, Grid1D, div_values
from .metrics import (ARITHMETIC, CoupledMetric, L2Metric,
                      WassersteinMetric, _coeff_cells, chol_blocks,
                      invert_H_blocks, sym_sqrt_blocks)

_CELLS_CODE = 0
_FACES_CODE = 1

SYMMETRIC_ROOT = "symmetric"
CHOLESKY_ROOT = "cholesky"


@dataclass(frozen=True)
class NoiseConfig:
    """Noise strength and stream identity; equal (seed, stream_id) give
    bit-identical increments."""

    epsilon: float
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise DomainError(f"noise strength must be >= 0, got {self.epsilon}")


def _generator(cfg: NoiseConfig, step: int, domain_code: int) -> np.random.Generator:
    key = np.array([int(cfg.seed) % 2 ** 64, int(cfg.stream_id) % 2 ** 64],
                   dtype=np.uint64)
    counter = np.array([0, int(step) % 2 ** 64, domain_code, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _face_count(grid: Grid1D) -> int:
    if grid.bc == PERIODIC:
        return grid.n_cells
    if grid.bc == NO_FLUX:
        return grid.n_cells - 1
    return grid.n_cells + 1


def sheet_increment_values(grid: Grid1D, dt: float, cfg: NoiseConfig,
                           where: str, step: int) -> np.ndarray:
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    scale = np.sqrt(dt / grid.dx)
    if where == "cells":
        gen = _generator(cfg, step, _CELLS_CODE)
        return scale * gen.standard_normal(grid.n_cells)
    if where == "faces":
        gen = _generator(cfg, step, _FACES_CODE)
        return scale * gen.standard_normal(_face_count(grid))
    raise DomainError(f"increments live on 'cells' or 'faces', not {where!r}")


def sheet_increment(grid: Grid1D, dt: float, cfg: NoiseConfig,
                    where: str = "cells", step: int = 0):
    """One space-time white-noise increment: i.i.d. N(0, dt/dx) per cell or
    per active face."""
    vals = sheet_increment_values(grid, dt, cfg, where, step)
    if where == "cells":
        return Field(grid, vals)
    return _embed_face_values(grid, vals)


def _embed_face_values(grid: Grid1D, active: np.ndarray) -> FluxField:
    if grid.bc == PERIODIC or active.shape == (grid.n_faces,):
        return FluxField(grid, active)
    full = np.zeros(grid.n_faces)
    full[1:grid.n_cells] = active
    return FluxField(grid, full)


def _clipped_face_mean(rule: str, grid: Grid1D, cells: np.ndarray) -> np.ndarray:
    """Face average of nonnegative cell values; zero where a side vanishes
    (continuous limit of the logarithmic mean)."""
    cells = np.maximum(cells, 0.0)
    if grid.bc == PERIODIC:
        a = np.roll(cells, 1)
        b = cells
    else:
        a = cells[:-1]
        b = cells[1:]
    if rule == ARITHMETIC:
        out = 0.5 * (a + b)
    else:
        good = (a > 0.0) & (b > 0.0)
        sa = np.where(good, a, 1.0)
        sb = np.where(good, b, 1.0)
        d = sb - sa
        tiny = np.abs(d) <= 1e-12 * np.abs(sa)
        num = np.where(tiny, 1.0, d)
        den = np.where(tiny, 1.0, np.log(sb) - np.log(sa))
        out = np.where(good, np.where(tiny, sa, num / den), 0.0)
    return out


def noise_action_values(metric, grid: Grid1D, z_arrays: tuple, db,
                        clip: bool = False, root: str = SYMMETRIC_ROOT):
    """Raw-array realization of sigma dB. ``db`` holds active-face values
    for conservative variants, cell values for L2, and a (cells, faces)
    pair for the block metric."""
    if isinstance(metric, L2Metric):
        (z,) = z_arrays
        zv = np.maximum(z, 0.0) if clip else z
        m = _coeff_cells(metric.mobility, grid, {metric.state_name: zv})
        if clip:
            m = np.maximum(m, 0.0)
        elif np.any(m < 0.0):
            i = int(np.flatnonzero(m < 0.0)[0])
            raise DomainError(f"negative mobility at cell {i}", index=i)
        return np.sqrt(m) * db

    if isinstance(metric, WassersteinMetric):
        (z,) = z_arrays
        if clip:
            cells = _coeff_cells(metric.mobility, grid,
                                 {metric.state_name: np.maximum(z, 0.0)})
            faces = _clipped_face_mean(metric.face_mean, grid, cells)
        else:
            faces = metric.face_mobility_values(grid, z)[grid.interior_faces()]
        flux = np.zeros(grid.n_faces)
        flux[grid.interior_faces()] = np.sqrt(faces) * db
        return div_values(grid, flux)

    if isinstance(metric, CoupledMetric):
        zu, zc = z_arrays
        dbc, dbf = db
        hu, hc, huc = metric.blocks(grid, zu, zc)
        m_u, m_c, m_uc = invert_H_blocks(hu, hc, huc)
        factors = (sym_sqrt_blocks if root == SYMMETRIC_ROOT else chol_blocks)(
            m_u, m_c, m_uc)
        pc = metric._paired_cells(grid)
        u_noise = np.empty(grid.n_cells)
        flux = np.zeros(grid.n_faces)
        if root == SYMMETRIC_ROOT:
            s_u, s_c, s_uc = factors
            u_noise[pc] = s_u[pc] * dbc[pc] + s_uc[pc] * dbf
            flux[grid.interior_faces()] = s_uc[pc] * dbc[pc] + s_c[pc] * dbf
        else:
            l11, l21, l22 = factors
            u_noise[pc] = l11[pc] * dbc[pc]
            flux[grid.interior_faces()] = l21[pc] * dbc[pc] + l22[pc] * dbf
        if grid.bc != PERIODIC:
            u_noise[0] = np.sqrt(m_u[0]) * dbc[0]
        return u_noise, -div_values(grid, flux)

    raise DomainError(f"no noise realization for metric {type(metric).__name__}")


def noise_action(metric, z, db, root: str = SYMMETRIC_ROOT):
    """sigma dB at an admissible state (strict mobility domain checks).
    For the conservative variants the result sums to zero exactly."""
    if isinstance(metric, CoupledMetric):
        grid = z[0].grid
        out_u, out_c = noise_action_values(
            metric, grid, (z[0].values, z[1].values),
            (db[0].values, db[1].values[grid.interior_faces()]), root=root)
        return Field(grid, out_u), Field(grid, out_c)
    grid = z.grid
    vals = db.values if isinstance(db, Field) else db.values[grid.interior_faces()]
    return Field(grid, noise_action_values(metric, grid, (z.values,), vals,
                                           root=root))


def _draw_db(metric, grid, dt, cfg, step):
    if isinstance(metric, L2Metric):
        return sheet_increment_values(grid, dt, cfg, "cells", step)
    if isinstance(metric, WassersteinMetric):
        return sheet_increment_values(grid, dt, cfg, "faces", step)
    return (sheet_increment_values(grid, dt, cfg, "cells", step),
            sheet_increment_values(grid, dt, cfg, "faces", step))


def step_em(z, metric, functional, dt: float, cfg: NoiseConfig, step: int = 0):
    """One Euler-Maruyama step (Ito convention, no drift correction):
    z + dt K dS + sqrt(eps) sigma dB. With eps = 0 this is bit-identical to
    the deterministic explicit step."""
    pair = isinstance(z, tuple)
    grid = (z[0] if pair else z).grid
    engine = make_engine(grid, metric, functional)
    sqrt_eps = float(np.sqrt(cfg.epsilon))
    db = _draw_db(metric, grid, dt, cfg, step) if sqrt_eps != 0.0 else None
    if pair:
        du, dc = engine.drift(z[0].values, z[1].values)
        new_u = z[0].values + dt * du
        new_c = z[1].values + dt * dc
        if sqrt_eps != 0.0:
            nu, nc = noise_action_values(metric, grid,
                                         (z[0].values, z[1].values), db, clip=True)
            new_u = new_u + sqrt_eps * nu
            new_c = new_c + sqrt_eps * nc
        return Field(grid, new_u), Field(grid, new_c)
    out, _ = engine.em_step(z.values, db, sqrt_eps, dt)
    return Field(grid, out)


@dataclass
class PathInfo:
    clipped_steps: int
    in_tube: bool | None = None


def sample_path(z0, metric, functional, dt: float, n_steps: int,
                cfg: NoiseConfig, record: bool = True,
                tube=None, tube_event: str = "stay",
                names: tuple[str, ...] | None = None
                ) -> tuple[Trajectory | None, PathInfo]:
    """Integrate one stochastic trajectory.

    ``tube = (reference, radius)`` tracks membership in the sup-norm tube
    of the given radius around the reference (a (n_steps+1, n) array or a
    single frozen profile). ``tube_event`` selects the tracked event:
    ``"stay"`` (inside at every sample time) or ``"reach"`` (inside at
    some sample time). With ``record=False`` integration stops as soon as
    the event is decided and only the bookkeeping is returned.
    """
    if tube_event not in ("stay", "reach"):
        raise DomainError(f"tube event must be 'stay' or 'reach', "
                          f"not {tube_event!r}")
    pair = isinstance(z0, tuple)
    grid = (z0[0] if pair else z0).grid
    engine = make_engine(grid, metric, functional)
    sqrt_eps = float(np.sqrt(cfg.epsilon))

    ref = radius = None
    in_tube = None
    if tube is not None:
        ref, radius = tube
        ref = np.asarray(ref, dtype=float)
        in_tube = tube_event == "stay"

    if pair:
        state = (np.array(z0[0].values), np.array(z0[1].values))
    else:
        state = np.array(z0.values)
    states = [np.stack(state) if pair else state.copy()] if record else None
    times = [0.0]
    clipped = 0

    def _ref_at(k):
        return ref if ref.ndim == 1 else ref[k]

    def _update_membership(probe, k):
        nonlocal in_tube
        inside = np.max(np.abs(probe - _ref_at(k))) <= radius
        if tube_event == "stay" and not inside:
            in_tube = False
            return True
        if tube_event == "reach" and inside:
            in_tube = True
            return True
        return False

    decided = False
    if tube is not None:
        decided = _update_membership(state[1] if pair else state, 0)

    for k in range(n_steps):
        if decided and not record:
            break
        db = _draw_db(metric, grid, dt, cfg, k) if sqrt_eps != 0.0 else None
        if pair:
            du, dc = engine.drift(state[0], state[1])
            new_u = state[0] + dt * du
            new_c = state[1] + dt * dc
            if sqrt_eps != 0.0:
                nu, nc = noise_action_values(metric, grid, state, db, clip=True)
                new_u = new_u + sqrt_eps * nu
                new_c = new_c + sqrt_eps * nc
            state = (new_u, new_c)
            probe = state[1]
        else:
            state, was_clipped = engine.em_step(state, db, sqrt_eps, dt)
            clipped += int(was_clipped)
            probe = state
        times.append((k + 1) * dt)
        if record:
            states.append(np.stack(state) if pair else state.copy())
        if tube is not None and not decided:
            decided = _update_membership(probe, k + 1)

    info = PathInfo(clipped_steps=clipped, in_tube=in_tube)
    if not record:
        return None, info
    stacked = np.array(states)
    if pair:
        if names is None:
            names = ("u", "c")
        data = {names[0]: stacked[:, 0, :], names[1]: stacked[:, 1, :]}
        conserved = {names[0]: False, names[1]: True}
    else:
        if names is None:
            names = ("z",)
        data = {names[0]: stacked}
        conserved = {names[0]: isinstance(metric, WassersteinMetric)}
    traj = Trajectory(grid=grid, times=np.array(times[:stacked.shape[0]]),
                      names=names, data=data, conserved=conserved,
                      meta={"epsilon": cfg.epsilon, "seed": cfg.seed,
                            "stream_id": cfg.stream_id,
                            "clipped_steps": clipped})
    return traj, info


# -- ensembles -----------------------------------------------------------------


def worker_count(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MEPP_THREADS", "")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _ensemble_chunk(args):
    (z0_vals, pair, grid, metric, functional, dt, n_steps, epsilon, seed,
     streams, tube, tube_event, want_final) = args
    if pair:
        z0 = (Field(grid, z0_vals[0]), Field(grid, z0_vals[1]))
    else:
        z0 = Field(grid, z0_vals)
    out = []
    for sid in streams:
        cfg = NoiseConfig(epsilon=epsilon, seed=seed, stream_id=int(sid))
        traj, info = sample_path(z0, metric, functional, dt, n_steps, cfg,
                                 record=want_final, tube=tube,
                                 tube_event=tube_event)
        final = None
        if want_final:
            final = np.stack(traj.state_arrays(traj.n_times - 1))
        out.append((sid, info.clipped_steps, info.in_tube, final))
    return out


def run_ensemble(z0, metric, functional, dt: float, n_steps: int,
                 epsilon: float, n_trajectories: int, seed: int,
                 tube=None, tube_event: str = "stay",
                 want_final: bool = True, workers=None):
    """Integrate independent trajectories (streams 0..N-1). Returns a list
    of (stream_id, clipped_steps, in_tube, final_state) sorted by stream,
    so the result is independent of worker scheduling."""
    pair = isinstance(z0, tuple)
    grid = (z0[0] if pair else z0).grid
    z0_vals = (np.stack([z0[0].values, z0[1].values]) if pair
               else np.array(z0.values))
    nw = worker_count(workers)
    streams = np.arange(n_trajectories)
    if nw == 1:
        results = _ensemble_chunk((z0_vals, pair, grid, metric, functional,
                                   dt, n_steps, epsilon, seed, streams, tube,
                                   tube_event, want_final))
    else:
        chunks = np.array_split(streams, nw)
        jobs = [(z0_vals, pair, grid, metric, functional, dt, n_steps,
                 epsilon, seed, chunk, tube, tube_event, want_final)
                for chunk in chunks if chunk.size]
        results = []
        with ProcessPoolExecutor(max_workers=nw) as pool:
            for part in pool.map(_ensemble_chunk, jobs):
                results.extend(part)
    results.sort(key=lambda r: r[0])
    return results


# -- fluctuation-dissipation probe ----------------------------------------------


@dataclass
class FdReport:
    n_draws: int
    n_probes: int
    epsilon: float
    dt: float
    max_dev_sigmas: float        # worst |empirical - expected| in std errors
    mass_residual: float         # worst conserved-total violation per draw
    probes: list                 # (empirical, expected, deviation_sigmas)
    passed: bool


def fd_check(metric, z, dt: float, epsilon: float, n_draws: int = 10000,
             n_probes: int = 20, seed: int = 0, sigma_band: float = 4.0,
             root: str = SYMMETRIC_ROOT) -> FdReport:
    """Check that the noise covariance realizes the metric: for probe
    vectors v, the empirical variance of <v, sqrt(eps) sigma dB> must match
    eps * dt * <v, K v> within ``sigma_band`` standard errors."""
    pair = isinstance(z, tuple)
    grid = (z[0] if pair else z).grid
    dx = grid.dx
    cfg = NoiseConfig(epsilon=epsilon, seed=seed, stream_id=0)
    sqrt_eps = float(np.sqrt(epsilon))

    samples = []
    mass_res = 0.0
    for j in range(n_draws):
        db = _draw_db(metric, grid, dt, cfg, j)
        if pair:
            nu, nc = noise_action_values(metric, grid,
                                         (z[0].values, z[1].values), db)
            xi = np.concatenate([nu, nc]) * sqrt_eps
            mass_res = max(mass_res, abs(float(np.sum(nc) * dx)) * sqrt_eps)
        else:
            xi = sqrt_eps * noise_action_values(metric, grid, (z.values,), db)
            if isinstance(metric, WassersteinMetric):
                mass_res = max(mass_res, abs(float(np.sum(xi) * dx)))
        samples.append(xi)
    xi_mat = np.array(samples)

    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed % 2 ** 64, 2 ** 63 + 1], dtype=np.uint64)))
    dim = xi_mat.shape[1]
    probes = []
    max_dev = 0.0
    for _ in range(n_probes):
        v = rng.standard_normal(dim)
        s = xi_mat @ v * dx
        empirical = float(np.mean(s * s))
        if pair:
            vf = (Field(grid, v[:grid.n_cells]), Field(grid, v[grid.n_cells:]))
            kv = metric.apply(z, vf)
            quad = float((np.dot(v[:grid.n_cells], kv[0].values)
                          + np.dot(v[grid.n_cells:], kv[1].values)) * dx)
        else:
            kv = metric.apply(z, Field(grid, v))
            quad = float(np.dot(v, kv.values) * dx)
        expected = epsilon * dt * quad
        stderr = expected * np.sqrt(2.0 / n_draws)
        dev = abs(empirical - expected) / stderr if stderr > 0 else 0.0
        max_dev = max(max_dev, dev)
        probes.append((empirical, expected, dev))
    return FdReport(n_draws=n_draws, n_probes=n_probes, epsilon=epsilon,
                    dt=dt, max_dev_sigmas=max_dev, mass_residual=mass_res,
                    probes=probes, passed=bool(max_dev <= sigma_band))
