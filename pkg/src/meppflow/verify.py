"""Built-in invariant suite behind the ``verify`` CLI subcommand.

Each check computes a residual against a stated tolerance; the command
prints one table row per check and exits nonzero when any row fails. The
checks mirror the structural identities the package is built on: discrete
adjointness, finite-difference agreement of the analytic variational
derivatives, metric symmetry/positivity, the dual representation of the
diffusion velocity, block inversion, and the equivalence of the assembled
entropy-production saddle points with the closed-form metric action.
"""

from dataclasses import dataclass

import numpy as np

from . import mepp
from .functionals import Boltzmann, Dirichlet, PhaseField, Thermal
from .grid import (Field, FluxField, Grid1D, divergence, gradient,
                   inner_faces, inner_l2_weighted, total)
from .metrics import (CoupledMetric, L2Metric, LinearMobility,
                      WassersteinMetric, invert_H_blocks)


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def _rng(seed=0):
    return np.random.default_rng(seed)


def check_adjointness(ns=(8, 64, 256), trials=20, seed=1) -> CheckResult:
    rng = _rng(seed)
    worst = 0.0
    for n in ns:
        for bc in ("periodic", "no_flux"):
            grid = Grid1D(n, 1.0, bc)
            for _ in range(trials):
                p = Field(grid, rng.standard_normal(n))
                jv = rng.standard_normal(grid.n_faces)
                if bc == "no_flux":
                    jv[0] = jv[-1] = 0.0
                j = FluxField(grid, jv)
                lhs = inner_faces(gradient(p), j)
                rhs = -inner_l2_weighted(p, divergence(j))
                scale = max(abs(lhs), abs(rhs), 1e-300)
                worst = max(worst, abs(lhs - rhs) / scale)
    return CheckResult("grid: <grad p, J> = -<p, div J>", worst, 1e-13)


def check_divergence_mass(seed=2) -> CheckResult:
    rng = _rng(seed)
    worst = 0.0
    for bc in ("periodic", "no_flux"):
        grid = Grid1D(64, 2.0, bc)
        jv = rng.standard_normal(grid.n_faces)
        if bc == "no_flux":
            jv[0] = jv[-1] = 0.0
        d = divergence(FluxField(grid, jv))
        worst = max(worst, abs(total(d)))
    return CheckResult("grid: div sums to zero on closed grids", worst, 1e-13)


def check_functional_oracles(seed=3) -> CheckResult:
    rng = _rng(seed)
    grid = Grid1D(24, 1.0, "periodic")
    worst = 0.0

    def rel(a, b):
        scale = max(np.max(np.abs(a)), 1e-300)
        return float(np.max(np.abs(a - b)) / scale)

    for _ in range(10):
        rho = Field(grid, 0.5 + rng.random(grid.n_cells))
        s = Boltzmann()
        worst = max(worst, rel(s.derivative(rho).values,
                               s.derivative_fd(rho).values))
        s2 = Dirichlet()
        z = Field(grid, rng.standard_normal(grid.n_cells))
        worst = max(worst, rel(s2.derivative(z).values,
                               s2.derivative_fd(z).values))
        s3 = Thermal(c_v=1.5)
        e = Field(grid, 1.0 + rng.random(grid.n_cells))
        worst = max(worst, rel(s3.derivative(e).values,
                               s3.derivative_fd(e).values))
        s4 = PhaseField(w=1.0, kappa=2e-3, latent_heat=0.5, t_melt=1.0)
        phi = Field(grid, rng.random(grid.n_cells))
        e4 = s4.energy_from_temperature(
            Field(grid, 0.8 + 0.4 * rng.random(grid.n_cells)), phi)
        de, dphi = s4.derivative(e4, phi)
        de_fd, dphi_fd = s4.derivative_fd(e4, phi)
        worst = max(worst, rel(de.values, de_fd.values))
        worst = max(worst, rel(dphi.values, dphi_fd.values))
    return CheckResult("functionals: analytic dS matches central differences",
                       worst, 1e-6)


def check_metric_symmetry(seed=4) -> CheckResult:
    rng = _rng(seed)
    grid = Grid1D(48, 1.0, "periodic")
    z = Field(grid, 0.5 + rng.random(grid.n_cells))
    worst = 0.0
    for metric in (L2Metric(mobility=LinearMobility(1.0)),
                   WassersteinMetric(mobility=LinearMobility(1.0))):
        for _ in range(10):
            f = Field(grid, rng.standard_normal(grid.n_cells))
            g = Field(grid, rng.standard_normal(grid.n_cells))
            a = inner_l2_weighted(f, metric.apply(z, g))
            b = inner_l2_weighted(g, metric.apply(z, f))
            worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
            quad = inner_l2_weighted(f, metric.apply(z, f))
            worst = max(worst, max(0.0, -quad))
    return CheckResult("metrics: K is symmetric positive semi-definite",
                       worst, 1e-12)


def check_dual_representation(seed=5) -> CheckResult:
    rng = _rng(seed)
    grid = Grid1D(128, 1.0, "periodic")
    s = Boltzmann()
    worst = 0.0
    for _ in range(20):
        rho = Field(grid, 0.5 + rng.random(grid.n_cells))
        metric = WassersteinMetric(mobility=LinearMobility(1.0),
                                   face_mean="log_mean")
        v1 = metric.apply(rho, s.derivative(rho)).values
        lap = divergence(gradient(rho)).values
        worst = max(worst, float(np.max(np.abs(v1 - lap))
                                 / max(np.max(np.abs(lap)), 1e-300)))
    return CheckResult("metrics: transport/Boltzmann velocity equals the "
                       "diffusion form", worst, 1e-12)


def check_norm_duality(seed=6) -> CheckResult:
    rng = _rng(seed)
    grid = Grid1D(48, 1.0, "periodic")
    z = Field(grid, 0.6 + rng.random(grid.n_cells))
    worst = 0.0
    for metric in (L2Metric(mobility=LinearMobility(1.0)),
                   WassersteinMetric(mobility=LinearMobility(1.0))):
        for _ in range(10):
            f = Field(grid, rng.standard_normal(grid.n_cells))
            v = metric.apply(z, f)
            a = metric.inv_norm_sq(z, v)
            b = inner_l2_weighted(f, v)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    return CheckResult("metrics: ||K F||^2 in the inverse metric equals "
                       "<F, K F>", worst, 1e-10)


def check_block_inversion(seed=7, trials=1000) -> CheckResult:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(trials):
        a = rng.random() + 0.1
        c = rng.random() + 0.1
        b = (rng.random() - 0.5) * 2.0 * np.sqrt(a * c) * 0.95
        m_u, m_c, m_uc = invert_H_blocks(a, c, b)
        m = np.array([[m_u, m_uc], [m_uc, m_c]])
        h = np.array([[a, b], [b, c]])
        worst = max(worst, float(np.max(np.abs(2.0 * m @ h - np.eye(2)))))
    return CheckResult("metrics: Schur block inverse satisfies 2 M H = I",
                       worst, 1e-12)


def _mepp_residuals(seed=8, trials=10):
    """Worst (oracle, production-identity, multiplier) residuals per variant."""
    rng = _rng(seed)
    grid = Grid1D(48, 1.0, "periodic")
    s = Boltzmann()
    out = {}

    worst_o = worst_p = 0.0
    for _ in range(trials):
        rho = Field(grid, 0.5 + rng.random(grid.n_cells))
        eta = Field(grid, 0.2 + rng.random(grid.n_cells))
        sol = mepp.solve_unconstrained(rho, s, eta)
        oracle = L2Metric(mobility=lambda z: 1.0 / (2.0 * eta.values)) \
            .apply(rho, s.derivative(rho))
        scale = max(np.max(np.abs(oracle.values)), 1e-300)
        worst_o = max(worst_o, float(np.max(np.abs(sol.zdot.values
                                                   - oracle.values)) / scale))
        prod = inner_l2_weighted(s.derivative(rho), sol.zdot)
        quad = 2.0 * inner_l2_weighted(sol.zdot, sol.zdot, eta)
        worst_p = max(worst_p, abs(prod - quad) / max(abs(prod), 1e-300))
    out["unconstrained"] = (worst_o, worst_p, 0.0)

    worst_o = worst_p = worst_m = 0.0
    for _ in range(trials):
        rho = Field(grid, 0.5 + rng.random(grid.n_cells))
        hvals = 0.2 + rng.random(grid.n_faces)
        h = FluxField(grid, hvals)
        sol = mepp.solve_conserved(rho, s, h)
        # oracle: conservative metric action with face mobility (2H)^-1
        from .grid import grad_values, div_values
        ds = s.derivative(rho)
        flux = (1.0 / (2.0 * hvals)) * grad_values(grid, ds.values)
        oracle = -div_values(grid, flux)
        scale = max(np.max(np.abs(oracle)), 1e-300)
        worst_o = max(worst_o, float(np.max(np.abs(sol.zdot.values - oracle))
                                     / scale))
        prod = inner_l2_weighted(ds, sol.zdot)
        quad = 2.0 * inner_faces(sol.flux,
                                 FluxField(grid, hvals * sol.flux.values))
        worst_p = max(worst_p, abs(prod - quad) / max(abs(prod), 1e-300))
        worst_m = max(worst_m, float(np.max(np.abs(sol.multiplier.values
                                                   - ds.values))
                                     / max(np.max(np.abs(ds.values)), 1e-300)))
    out["conserved"] = (worst_o, worst_p, worst_m)

    worst_o = worst_p = worst_m = 0.0
    pf = PhaseField(w=1.0, kappa=2e-3, latent_heat=0.4, t_melt=1.0)
    for _ in range(trials):
        phi = Field(grid, 0.2 + 0.6 * rng.random(grid.n_cells))
        tfield = Field(grid, 0.8 + 0.4 * rng.random(grid.n_cells))
        e = pf.energy_from_temperature(tfield, phi)
        hu = 0.5 + rng.random()
        hc = 0.5 + rng.random()
        huc = (rng.random() - 0.5) * np.sqrt(hu * hc)
        sol = mepp.solve_coupled(phi, e, pf,
                                 Field.full(grid, hu), Field.full(grid, hc),
                                 Field.full(grid, huc))
        metric = CoupledMetric(h_u=hu, h_c=hc, h_uc=huc)
        du, dc = metric.apply((phi, e), mepp._pair_forces(pf, phi, e))
        scale = max(np.max(np.abs(du.values)), np.max(np.abs(dc.values)), 1e-300)
        worst_o = max(worst_o, float(max(
            np.max(np.abs(sol.zdot[0].values - du.values)),
            np.max(np.abs(sol.zdot[1].values - dc.values))) / scale))
        fu, fc = mepp._pair_forces(pf, phi, e)
        prod = (inner_l2_weighted(fu, sol.zdot[0])
                + inner_l2_weighted(fc, sol.zdot[1]))
        jv = sol.flux.values[grid.interior_faces()]
        zu = sol.zdot[0].values
        paired = np.arange(grid.n_cells)
        quad = 2.0 * float((np.sum(hu * zu * zu)
                            + 2.0 * np.sum(huc * zu[paired] * jv)
                            + np.sum(hc * jv * jv)) * grid.dx)
        worst_p = max(worst_p, abs(prod - quad) / max(abs(prod), 1e-300))
        worst_m = max(worst_m, float(np.max(np.abs(sol.multiplier.values
                                                   - fc.values))
                                     / max(np.max(np.abs(fc.values)), 1e-300)))
    out["coupled"] = (worst_o, worst_p, worst_m)
    return out


def mepp_table(seed=8, trials=10):
    res = _mepp_residuals(seed=seed, trials=trials)
    checks = []
    for variant, (oracle, prod, mult) in res.items():
        checks.append(CheckResult(f"mepp[{variant}]: saddle equals metric "
                                  "action", oracle, 1e-10))
        checks.append(CheckResult(f"mepp[{variant}]: entropy rate equals "
                                  "twice the penalty", prod, 1e-10))
        if variant != "unconstrained":
            checks.append(CheckResult(f"mepp[{variant}]: multiplier equals dS",
                                      mult, 1e-12))
    return checks


def run_verification(model=None) -> list[CheckResult]:
    checks = [
        check_adjointness(),
        check_divergence_mass(),
        check_functional_oracles(),
        check_metric_symmetry(),
        check_dual_representation(),
        check_norm_duality(),
        check_block_inversion(),
    ]
    checks.extend(mepp_table())
    if model is not None:
        checks.append(_check_model(model))
    return checks


def _check_model(model) -> CheckResult:
    """Model-specific smoke check: the initial state is admissible and one
    nominal step preserves conserved totals."""
    from .evolve import run_gradient_flow
    z0 = model.initial_state
    traj = run_gradient_flow(z0, model.metric, model.functional,
                             model.dt, min(model.steps, 5),
                             scheme=model.scheme, names=model.names)
    worst = 0.0
    for name, series in (traj.totals or {}).items():
        scale = max(abs(series[0]), 1e-300)
        worst = max(worst, float(np.max(np.abs(series - series[0])) / scale))
    if traj.entropy is not None and traj.entropy.size > 1:
        drop = float(np.min(np.diff(traj.entropy)))
        worst = max(worst, max(0.0, -drop))
    return CheckResult("model: conserved totals and entropy monotonicity "
                       "over a short run", worst, 1e-12)


def format_table(checks) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'residual':>12}  {'tol':>8}  status"]
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{c.name:<{width}}  {c.residual:>12.3e}  "
                     f"{c.tol:>8.0e}  {status}")
    return "\n".join(lines)
