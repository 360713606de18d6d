"""Time integration of dz/dt = K dS with diagnostics.

The generic driver `run_gradient_flow` integrates any (metric, functional)
pair. Two schemes:

* ``explicit``       z + dt * K(z) dS(z)
* ``semi_implicit``  mobility/metric frozen at z, force linearized around z
                     and evaluated at the new state through one sparse
                     solve; the final update re-applies the metric to the
                     corrected force in flux form, so conserved totals are
                     exact to round-off regardless of solver residual.

Steps that produce inadmissible states (nonpositive density or
temperature) raise :class:`StepRejected`; the drivers respond by halving
dt for the offending step and resuming with the nominal dt.

`run_heat` integrates the conduction example de/dt = div(K grad T) with
K = (2 H T^2)^-1 at arithmetically face-averaged T; each step also
evaluates the resistivity form of the same flux, (2H)^-1 times the
face-averaged chain-rule gradient of 1/T, and records the worst
disagreement (an exact identity up to round-off).

`run_phase_field` integrates the coupled pair
    de/dt   = div(k grad T),   k = (2 H T^2)^-1
    dphi/dt = dS/dphi / (2 eta)
with temperature recovered from the (e, phi) closure each step.
"""

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._backend import kernels
from .errors import DomainError, StepRejected
from .functionals import Boltzmann, Dirichlet, PhaseField
from .grid import (DIRICHLET, NO_FLUX, PERIODIC, Field, FluxField, Grid1D,
                   div_values, grad_values, gradient_matrix, total)
from .metrics import (ConstantMobility, CoupledMetric, L2Metric,
                      LinearMobility, LOG_MEAN, WassersteinMetric)

_MAX_HALVINGS = 40


@dataclass
class Trajectory:
    """Time-sampled states of one run plus cheap per-time bookkeeping."""

    grid: Grid1D
    times: np.ndarray                     # strictly increasing, shape (T,)
    names: tuple[str, ...]
    data: dict[str, np.ndarray]           # name -> (T, n_cells)
    conserved: dict[str, bool]
    entropy: np.ndarray | None = None     # S(t) when produced by a run
    totals: dict[str, np.ndarray] | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or (t.size > 1 and not np.all(np.diff(t) > 0.0)):
            raise DomainError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        for name in self.names:
            if self.data[name].shape != (t.size, self.grid.n_cells):
                raise DomainError(f"trajectory component {name!r} has wrong shape")

    @property
    def n_times(self) -> int:
        return self.times.size

    def state_arrays(self, k: int) -> tuple[np.ndarray, ...]:
        return tuple(self.data[name][k] for name in self.names)

    def state_fields(self, k: int) -> tuple[Field, ...]:
        return tuple(Field(self.grid, self.data[name][k]) for name in self.names)


# -- engines -----------------------------------------------------------------


class _ScalarEngine:
    """Single-field flow for L2 and conservative transport metrics."""

    def __init__(self, grid: Grid1D, metric, functional):
        self.grid = grid
        self.metric = metric
        self.s = functional
        self._zero_db = None
        self.fused_kind = None
        closed = grid.bc in (PERIODIC, NO_FLUX)
        if (closed and isinstance(metric, WassersteinMetric)
                and isinstance(functional, Boltzmann)
                and isinstance(metric.mobility,
                               (LinearMobility, ConstantMobility))):
            self.fused_kind = "wboltz"
            mob = metric.mobility
            self.linear_mob = isinstance(mob, LinearMobility)
            self.coeff = mob.coeff if self.linear_mob else mob.value
            self.use_logmean = metric.face_mean == LOG_MEAN
            self._zero_db = np.zeros(
                grid.n_cells if grid.bc == PERIODIC else grid.n_cells - 1)
        elif (closed and isinstance(metric, L2Metric)
                and isinstance(functional, Dirichlet)
                and isinstance(metric.mobility, ConstantMobility)):
            self.fused_kind = "l2grad"
            self.coeff = metric.mobility.value
            self._zero_db = np.zeros(grid.n_cells)

    def admissibility_violation(self, z: np.ndarray):
        return self.s.admissibility_violation(z)

    def ds_values(self, z: np.ndarray) -> np.ndarray:
        return self.s.derivative(Field(self.grid, z)).values

    def drift(self, z: np.ndarray) -> np.ndarray:
        return self.metric.apply_values(self.grid, z, self.ds_values(z))

    def em_step(self, z: np.ndarray, db, sqrt_eps: float, dt: float):
        """One Euler-Maruyama step; deterministic when sqrt_eps == 0.
        Returns (new_state, clipped_mobility_flag)."""
        if self.fused_kind is not None:
            if db is None:
                db = self._zero_db
            if self.fused_kind == "wboltz":
                stepper = (kernels.em_step_wboltz_periodic
                           if self.grid.bc == PERIODIC
                           else kernels.em_step_wboltz_bounded)
                return stepper(z, self.coeff, self.linear_mob,
                               self.use_logmean, db, sqrt_eps, dt,
                               self.grid.dx)
            stepper = (kernels.em_step_l2grad_periodic
                       if self.grid.bc == PERIODIC
                       else kernels.em_step_l2grad_bounded)
            return stepper(z, self.coeff, db, sqrt_eps, dt, self.grid.dx)
        out = z + dt * self.drift(z)
        if sqrt_eps != 0.0:
            from .stochastic import noise_action_values
            out = out + sqrt_eps * noise_action_values(
                self.metric, self.grid, (z,), db, clip=True)
        return out, False

    def step_explicit(self, z: np.ndarray, dt: float) -> np.ndarray:
        out, _ = self.em_step(z, None, 0.0, dt)
        return out

    def step_semi_implicit(self, z: np.ndarray, dt: float) -> np.ndarray:
        ds0 = self.ds_values(z)
        kind, jac = self.s.force_jacobian(Field(self.grid, z))
        if isinstance(self.metric, L2Metric):
            k_mat = sp.diags(self.metric.mobility_values(Field(self.grid, z)))
        else:
            k_mat = self.metric.operator_matrix(Field(self.grid, z))
        j_mat = sp.diags(jac) if kind == "diag" else jac
        n = self.grid.n_cells
        a = (sp.identity(n) - dt * (k_mat @ j_mat)).tocsc()
        delta = spla.spsolve(a, dt * (k_mat @ ds0))
        force = ds0 + j_mat @ delta
        return z + dt * self.metric.apply_values(self.grid, z, force)


class _CoupledEngine:
    """(non-conserved, conserved) pair under the block metric + a
    two-field entropy; state order is (z_u, z_c) = (phi, e)."""

    def __init__(self, grid: Grid1D, metric: CoupledMetric, functional: PhaseField):
        self.grid = grid
        self.metric = metric
        self.s = functional

    def admissibility_violation(self, zu, zc):
        return self.s.admissibility_violation(self.grid, zc, zu)

    def forces(self, zu, zc):
        ds_e, ds_phi = self.s.derivative(Field(self.grid, zc), Field(self.grid, zu))
        return ds_phi.values, ds_e.values

    def drift(self, zu, zc):
        fu, fc = self.forces(zu, zc)
        du, dc, _ = self.metric.apply_values(self.grid, zu, zc, fu, fc)
        return du, dc

    def step_explicit(self, zu, zc, dt):
        du, dc = self.drift(zu, zc)
        return zu + dt * du, zc + dt * dc

    def step_semi_implicit(self, zu, zc, dt):
        fu, fc = self.forces(zu, zc)
        _, jac = self.s.force_jacobian_energy(Field(self.grid, zc), Field(self.grid, zu))
        hu, hc, huc = self.metric.blocks(self.grid, zu, zc)
        pc = self.metric._paired_cells(self.grid)
        from .metrics import invert_H_blocks
        _, m_c, _ = invert_H_blocks(hu, hc, huc)
        g = gradient_matrix(self.grid)
        kc = (g.T @ sp.diags(m_c[pc]) @ g).tocsr()
        n = self.grid.n_cells
        du0, dc0, _ = self.metric.apply_values(self.grid, zu, zc, fu, fc)
        a = (sp.identity(n) - dt * (kc @ sp.diags(jac))).tocsc()
        delta_c = spla.spsolve(a, dt * dc0)
        fc_corr = fc + jac * delta_c
        du, dc, _ = self.metric.apply_values(self.grid, zu, zc, fu, fc_corr)
        return zu + dt * du, zc + dt * dc


def make_engine(grid: Grid1D, metric, functional):
    if isinstance(metric, CoupledMetric):
        if not isinstance(functional, PhaseField):
            raise DomainError("the coupled metric needs a two-field functional")
        return _CoupledEngine(grid, metric, functional)
    return _ScalarEngine(grid, metric, functional)


# -- public stepping ----------------------------------------------------------


def step(z, metric, functional, dt: float, scheme: str = "explicit"):
    """Advance one state by one step; dt = 0 returns the state unchanged.
    Raises :class:`StepRejected` if the result is inadmissible."""
    if dt < 0.0:
        raise DomainError(f"dt must be nonnegative, got {dt}")
    pair = isinstance(z, tuple)
    grid = (z[0] if pair else z).grid
    engine = make_engine(grid, metric, functional)
    if dt == 0.0:
        return z
    arrays = tuple(f.values for f in z) if pair else (z.values,)
    new = _engine_step(engine, arrays, dt, scheme)
    bad = engine.admissibility_violation(*new)
    if bad is not None:
        raise StepRejected(f"step produced an inadmissible state at cell {bad}",
                           cell=bad)
    if pair:
        return tuple(Field(grid, v) for v in new)
    return Field(grid, new[0])


def _engine_step(engine, arrays, dt, scheme):
    if scheme not in ("explicit", "semi_implicit"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if isinstance(engine, _CoupledEngine):
        fn = engine.step_explicit if scheme == "explicit" else engine.step_semi_implicit
        return fn(arrays[0], arrays[1], dt)
    fn = engine.step_explicit if scheme == "explicit" else engine.step_semi_implicit
    return (fn(arrays[0], dt),)


def _advance_with_halving(engine, arrays, dt, scheme):
    """One nominal step with halving on rejection; returns (state, dt_used)."""
    sub = dt
    for _ in range(_MAX_HALVINGS):
        new = _engine_step(engine, arrays, sub, scheme)
        if engine.admissibility_violation(*new) is None:
            return new, sub
        sub *= 0.5
    raise StepRejected("state stayed inadmissible after repeated dt halving")


def _conserved_flags(metric, names):
    if isinstance(metric, CoupledMetric):
        return {names[0]: False, names[1]: True}
    return {names[0]: isinstance(metric, WassersteinMetric)}


def run_gradient_flow(z0, metric, functional, dt: float, n_steps: int,
                      scheme: str = "semi_implicit",
                      names: tuple[str, ...] | None = None) -> Trajectory:
    """Integrate dz/dt = K dS from z0 for n_steps nominal steps."""
    pair = isinstance(z0, tuple)
    grid = (z0[0] if pair else z0).grid
    engine = make_engine(grid, metric, functional)
    if names is None:
        names = ("u", "c") if pair else ("z",)
    arrays = tuple(np.array(f.values) for f in (z0 if pair else (z0,)))
    bad = engine.admissibility_violation(*arrays)
    if bad is not None:
        raise DomainError(f"initial state inadmissible at cell {bad}", index=bad)

    times = [0.0]
    series = [np.stack(arrays)]
    svals = [_entropy_of(functional, grid, arrays, pair)]
    t = 0.0
    halved = 0
    for _ in range(n_steps):
        arrays, used = _advance_with_halving(engine, arrays, dt, scheme)
        if used != dt:
            halved += 1
        t += used
        times.append(t)
        series.append(np.stack(arrays))
        svals.append(_entropy_of(functional, grid, arrays, pair))

    stacked = np.array(series)
    data = {name: stacked[:, i, :] for i, name in enumerate(names)}
    conserved = _conserved_flags(metric, names)
    totals = {name: np.sum(data[name], axis=1) * grid.dx
              for name, flag in conserved.items() if flag}
    return Trajectory(grid=grid, times=np.array(times), names=tuple(names),
                      data=data, conserved=conserved,
                      entropy=np.array(svals), totals=totals,
                      meta={"scheme": scheme, "halved_steps": halved})


def _entropy_of(functional, grid, arrays, pair):
    if pair:
        # state order (phi, e); the functional takes (e, phi)
        return functional.value(Field(grid, arrays[1]), Field(grid, arrays[0]))
    return functional.value(Field(grid, arrays[0]))


# -- worked example: heat conduction ------------------------------------------


def _face_temperature(grid: Grid1D, t: np.ndarray) -> np.ndarray:
    if grid.bc == PERIODIC:
        return kernels.face_arith_periodic(t)
    tf = kernels.face_arith_bounded(t)
    if grid.bc == DIRICHLET:
        tf = tf.copy()
        tf[0] = 0.5 * (grid.bc_left + t[0])
        tf[-1] = 0.5 * (t[-1] + grid.bc_right)
    return tf


def run_heat(t0: Field, c_v: float = 1.0, resistivity: FluxField | None = None,
             conductivity: float | None = None, dt: float = 1e-4,
             n_steps: int = 100, scheme: str = "semi_implicit") -> Trajectory:
    """Heat conduction de/dt = div(K grad T), e = c_v T.

    Exactly one of ``resistivity`` (face field H, giving K = (2 H T^2)^-1
    at face-averaged T) or ``conductivity`` (constant K) must be supplied.
    The state is recorded as the energy density e. Works on all boundary
    kinds, including dirichlet walls held at the grid's boundary values.
    """
    if (resistivity is None) == (conductivity is None):
        raise DomainError("supply exactly one of resistivity or conductivity")
    grid = t0.grid
    if np.any(t0.values <= 0.0):
        i = int(np.flatnonzero(t0.values <= 0.0)[0])
        raise DomainError(f"initial temperature must be positive; cell {i} fails",
                          index=i)
    t = np.array(t0.values)
    n = grid.n_cells

    def k_and_h(tvals):
        tf = _face_temperature(grid, tvals)
        if conductivity is not None:
            kf = np.full(grid.n_faces, float(conductivity))
            hf = 1.0 / (2.0 * kf * tf * tf)
        else:
            hf = resistivity.values
            kf = np.empty(grid.n_faces)
            act = slice(None) if grid.bc != NO_FLUX else slice(1, n)
            kf[act] = 1.0 / ((2.0 * hf[act]) * (tf[act] * tf[act]))
            if grid.bc == NO_FLUX:
                kf[0] = 0.0
                kf[-1] = 0.0
        return tf, kf, hf

    def fluxes(tvals, kf, tf, hf):
        gt = grad_values(grid, tvals)
        q_fourier = -kf * gt
        # resistivity route: q = (2H)^-1 X with the face-averaged chain-rule
        # form X = -grad T / T_face^2 of the inverse-temperature gradient
        if conductivity is not None:
            q_resist = (1.0 / (2.0 * hf)) * (-gt / (tf * tf))
        else:
            q_resist = np.zeros_like(q_fourier)
            act = slice(None) if grid.bc != NO_FLUX else slice(1, n)
            q_resist[act] = (1.0 / (2.0 * hf[act])) * (-gt[act] / (tf[act] * tf[act]))
        if grid.bc == NO_FLUX:
            q_fourier[0] = q_fourier[-1] = 0.0
            q_resist[0] = q_resist[-1] = 0.0
        return q_fourier, q_resist

    thermal_s = lambda tv: float(c_v * np.sum(np.log(tv)) * grid.dx)

    times = [0.0]
    states = [c_v * t.copy()]
    svals = [thermal_s(t)]
    cross_res = 0.0
    tcur = 0.0
    for _ in range(n_steps):
        sub = dt
        for _ in range(_MAX_HALVINGS):
            tf, kf, hf = k_and_h(t)
            q, q2 = fluxes(t, kf, tf, hf)
            cross_res = max(cross_res, float(np.max(np.abs(q - q2))))
            if scheme == "explicit":
                t_new = t + (sub / c_v) * (-div_values(grid, q))
            else:
                t_new = _heat_semi_implicit(grid, t, kf, c_v, sub)
            if np.all(t_new > 0.0):
                break
            sub *= 0.5
        else:
            raise StepRejected("temperature stayed nonpositive after dt halving")
        t = t_new
        tcur += sub
        times.append(tcur)
        states.append(c_v * t.copy())
        svals.append(thermal_s(t))

    data = {"e": np.array(states)}
    conserved = {"e": grid.bc != DIRICHLET}
    totals = ({"e": np.sum(data["e"], axis=1) * grid.dx}
              if conserved["e"] else {})
    return Trajectory(grid=grid, times=np.array(times), names=("e",),
                      data=data, conserved=conserved, entropy=np.array(svals),
                      totals=totals,
                      meta={"scheme": scheme, "c_v": c_v,
                            "cross_form_residual": cross_res})


def _heat_semi_implicit(grid: Grid1D, t: np.ndarray, kf: np.ndarray,
                        c_v: float, dt: float) -> np.ndarray:
    """Backward step with conductivity frozen at the current state, then a
    flux-form update so closed-system energy is exact."""
    n = grid.n_cells
    if grid.bc == DIRICHLET:
        # affine gradient: rows for all faces, plus wall sources
        inv = 1.0 / grid.dx
        rows_b, cols_b, vals_b = [0, n], [0, n - 1], [2.0 * inv, -2.0 * inv]
        for f in range(1, n):
            rows_b += [f, f]
            cols_b += [f, f - 1]
            vals_b += [inv, -inv]
        b = sp.csr_matrix((vals_b, (rows_b, cols_b)), shape=(n + 1, n))
        b0 = np.zeros(n + 1)
        b0[0] = -2.0 * inv * grid.bc_left
        b0[n] = 2.0 * inv * grid.bc_right
        d = sp.csr_matrix(
            (np.concatenate([np.full(n, -inv), np.full(n, inv)]),
             (np.concatenate([np.arange(n), np.arange(n)]),
              np.concatenate([np.arange(n), np.arange(1, n + 1)]))),
            shape=(n, n + 1))
        lap = d @ sp.diags(kf) @ b
        rhs = (c_v / dt) * t + d @ (kf * b0)
        t_star = spla.spsolve(((c_v / dt) * sp.identity(n) - lap).tocsc(), rhs)
        return np.asarray(t_star)
    g = gradient_matrix(grid)
    kf_act = kf[grid.interior_faces()]
    lap = -(g.T @ sp.diags(kf_act) @ g)
    a = ((c_v / dt) * sp.identity(n) - lap).tocsc()
    t_star = spla.spsolve(a, (c_v / dt) * t)
    # flux-form final update at the solved state
    q = np.zeros(grid.n_faces)
    q[grid.interior_faces()] = -kf_act * (g @ t_star)
    return t + (dt / c_v) * (-div_values(grid, q))


# -- worked example: interface motion coupled to heat -------------------------


def run_phase_field(t0: Field, phi0: Field, functional: PhaseField,
                    eta: Field, resistivity: FluxField, dt: float,
                    n_steps: int, scheme: str = "explicit",
                    isothermal: bool = False) -> Trajectory:
    """Coupled energy/phase flow driven by the two-field entropy.

    The phase relaxes as dphi/dt = (dS/dphi) / (2 eta); energy conducts as
    de/dt = div(k grad T) with k = (2 H T^2)^-1. With ``isothermal`` the
    temperature profile is held at t0, only phi evolves, and the recorded
    "entropy" is the isothermal driving functional -int f/T dx (heat-bath
    bookkeeping).
    """
    grid = t0.grid
    if np.any(eta.values <= 0.0):
        raise DomainError("phase length penalty must be positive")
    s = functional
    e = np.array(s.energy_from_temperature(t0, phi0).values)
    phi = np.array(phi0.values)
    two_eta = 2.0 * eta.values

    def monitor(ev, pv):
        if isothermal:
            return _massieu_value(s, grid, t0.values, pv)
        return s.value(Field(grid, ev), Field(grid, pv))

    times = [0.0]
    e_states = [e.copy()]
    phi_states = [phi.copy()]
    svals = [monitor(e, phi)]
    tcur = 0.0
    for _ in range(n_steps):
        sub = dt
        for _ in range(_MAX_HALVINGS):
            e_new, phi_new = _phase_field_step(
                grid, s, e, phi, two_eta, resistivity, sub, scheme, isothermal, t0)
            if s.admissibility_violation(grid, e_new, phi_new) is None:
                break
            sub *= 0.5
        else:
            raise StepRejected("state stayed inadmissible after dt halving")
        e, phi = e_new, phi_new
        tcur += sub
        times.append(tcur)
        e_states.append(e.copy())
        phi_states.append(phi.copy())
        svals.append(monitor(e, phi))

    data = {"phi": np.array(phi_states), "e": np.array(e_states)}
    conserved = {"phi": False, "e": grid.bc != DIRICHLET and not isothermal}
    totals = {"e": np.sum(data["e"], axis=1) * grid.dx} if conserved["e"] else {}
    return Trajectory(grid=grid, times=np.array(times), names=("phi", "e"),
                      data=data, conserved=conserved, entropy=np.array(svals),
                      totals=totals,
                      meta={"scheme": scheme, "isothermal": isothermal})


def _massieu_value(s: PhaseField, grid: Grid1D, tvals, phi) -> float:
    from .functionals import _double_well, _interp
    g = grad_values(grid, phi)
    g2 = g * g
    if grid.bc == PERIODIC:
        gamma = 0.25 * s.kappa * (g2 + np.roll(g2, -1))
    else:
        gamma = 0.25 * s.kappa * (g2[:-1] + g2[1:])
    f = (s.w * _double_well(phi)
         + s.latent_heat * _interp(phi) * (tvals - s.t_melt) / s.t_melt
         + gamma - s.c_v * tvals * np.log(tvals / s.t_melt))
    return float(-np.sum(f / tvals) * grid.dx)


def _phase_field_step(grid, s, e, phi, two_eta, resistivity, dt, scheme,
                      isothermal, t0):
    if isothermal:
        tvals = t0.values
        e_for_force = s.energy_from_temperature(t0, Field(grid, phi)).values
        _, ds_phi = s.derivative(Field(grid, e_for_force), Field(grid, phi))
        return e.copy(), phi + dt * (ds_phi.values / two_eta)

    tvals = s.temperature_values(grid, e, phi)
    _, ds_phi = s.derivative(Field(grid, e), Field(grid, phi))
    phi_new = phi + dt * (ds_phi.values / two_eta)

    tf = _face_temperature(grid, tvals)
    hf = resistivity.values
    kf = np.zeros(grid.n_faces)
    act = grid.interior_faces() if grid.bc == NO_FLUX else slice(None)
    kf[act] = 1.0 / ((2.0 * hf[act]) * (tf[act] * tf[act]))
    if scheme == "explicit":
        q = -kf * grad_values(grid, tvals)
        if grid.bc == NO_FLUX:
            q[0] = q[-1] = 0.0
        e_new = e + dt * (-div_values(grid, q))
    else:
        t_star = _heat_semi_implicit(grid, tvals, kf, s.c_v, dt)
        # energy update in flux form at the solved temperature profile
        g = gradient_matrix(grid)
        q = np.zeros(grid.n_faces)
        q[grid.interior_faces()] = -kf[grid.interior_faces()] * (g @ np.asarray(t_star))
        e_new = e + dt * (-div_values(grid, q))
    return e_new, phi_new


# -- diagnostics ---------------------------------------------------------------


@dataclass
class DiagnosticsTable:
    times: np.ndarray
    entropy: np.ndarray
    mass: np.ndarray
    phi: np.ndarray          # 1/2 ||zdot||^2 in the inverse metric
    psi: np.ndarray          # 1/2 ||dS||^2 in the metric
    ds_dt: np.ndarray


def _time_derivatives(traj: Trajectory) -> dict[str, np.ndarray]:
    return {name: np.gradient(traj.data[name], traj.times, axis=0, edge_order=2)
            for name in traj.names}


def diagnostics(traj: Trajectory, metric, functional) -> DiagnosticsTable:
    """Per-time entropy, conserved total, both dissipation potentials and a
    finite-difference entropy rate. The metric/functional pair must be the
    one that generated the flow for the optimal-path identities to hold."""
    grid = traj.grid
    pair = isinstance(metric, CoupledMetric)
    zdot = _time_derivatives(traj)
    nt = traj.n_times
    s_series = np.empty(nt)
    phi_series = np.empty(nt)
    psi_series = np.empty(nt)
    mass = np.zeros(nt)
    cons_names = [n for n, f in traj.conserved.items() if f]
    for k in range(nt):
        fields = traj.state_fields(k)
        if pair:
            zu, zc = fields
            s_series[k] = functional.value(zc, zu)
            ds_e, ds_phi = functional.derivative(zc, zu)
            force = (ds_phi, ds_e)
            vel = (Field(grid, zdot[traj.names[0]][k]),
                   Field(grid, zdot[traj.names[1]][k]))
            kf = metric.apply((zu, zc), force)
            psi_series[k] = 0.5 * grid.dx * (
                np.dot(force[0].values, kf[0].values)
                + np.dot(force[1].values, kf[1].values))
            phi_series[k] = 0.5 * metric.inv_norm_sq((zu, zc), vel)
        else:
            (z,) = fields
            s_series[k] = functional.value(z)
            ds = functional.derivative(z)
            vel = Field(grid, zdot[traj.names[0]][k])
            kf = metric.apply(z, ds)
            psi_series[k] = 0.5 * grid.dx * np.dot(ds.values, kf.values)
            phi_series[k] = 0.5 * metric.inv_norm_sq(z, vel)
        if cons_names:
            mass[k] = sum(total(Field(grid, traj.data[n][k])) for n in cons_names)
    ds_dt = np.gradient(s_series, traj.times, edge_order=2)
    return DiagnosticsTable(times=traj.times.copy(), entropy=s_series,
                            mass=mass, phi=phi_series, psi=psi_series,
                            ds_dt=ds_dt)


# -- CSV serialization ---------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path):
    """Rows t,x,var,value ordered by time, then variable, then ascending x;
    full round-trip float formatting."""
    x = traj.grid.cell_centers()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "var", "value"])
        for k, t in enumerate(traj.times):
            for name in traj.names:
                row = traj.data[name][k]
                for xi, vi in zip(x, row):
                    wr.writerow([repr(float(t)), repr(float(xi)), name,
                                 repr(float(vi))])


def read_trajectory_csv(path, grid: Grid1D, names: tuple[str, ...],
                        conserved: dict[str, bool]) -> Trajectory:
    times: list[float] = []
    index: dict[float, int] = {}
    frames: dict[str, list[np.ndarray]] = {n: [] for n in names}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["t", "x", "var", "value"]:
            raise DomainError(f"unexpected trajectory header {header!r}")
        for row in rd:
            t, _, var, val = float(row[0]), float(row[1]), row[2], float(row[3])
            if var not in frames:
                raise DomainError(f"unknown trajectory variable {var!r}")
            if t not in index:
                index[t] = len(times)
                times.append(t)
                for nm in names:
                    frames[nm].append(np.full(grid.n_cells, np.nan))
            k = index[t]
            arr = frames[var][k]
            pos = int(np.argmin(np.abs(grid.cell_centers() - float(row[1]))))
            arr[pos] = val
    data = {n: np.array(frames[n]) for n in names}
    for n in names:
        if np.isnan(data[n]).any():
            raise DomainError(f"trajectory CSV is missing cells for {n!r}")
    return Trajectory(grid=grid, times=np.array(times), names=names,
                      data=data, conserved=conserved)


def write_diagnostics_csv(table: DiagnosticsTable, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "S", "mass", "Phi", "Psi", "dSdt"])
        for k in range(table.times.size):
            wr.writerow([repr(float(v)) for v in
                         (table.times[k], table.entropy[k], table.mass[k],
                          table.phi[k], table.psi[k], table.ds_dt[k])])
