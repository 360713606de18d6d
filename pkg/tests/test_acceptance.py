"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured numbers (run with ``pytest tests/test_acceptance.py -v -s``).
Tolerances are fixed here, not tuned at runtime."""

import numpy as np
import pytest

import meppflow as mf
from meppflow import (Boltzmann, Field, FluxField, Grid1D, LinearMobility,
                      NoiseConfig, Thermal, Trajectory, TubeSpec,
                      WassersteinMetric)
from meppflow.grid import div_values, grad_values
from meppflow.mepp import _pair_forces

MODELS = ("models/diffusion.mod", "models/heat.mod", "models/interface.mod",
          "models/relaxation.mod")


def _report(name, detail):
    print(f"[PASS] {name}: {detail}")


# -- 1: adjointness & conservation backbone ---------------------------------

def test_c01_adjointness_and_conservation():
    rng = np.random.default_rng(101)
    worst = 0.0
    for n in (8, 64, 256):
        for bc in ("periodic", "no_flux"):
            g = Grid1D(n, 1.0, bc)
            for _ in range(100):
                p = Field(g, rng.standard_normal(n))
                jv = rng.standard_normal(g.n_faces)
                if bc == "no_flux":
                    jv[0] = jv[-1] = 0.0
                j = FluxField(g, jv)
                lhs = mf.inner_faces(mf.gradient(p), j)
                rhs = -mf.inner_l2_weighted(p, mf.divergence(j))
                worst = max(worst, abs(lhs - rhs)
                            / max(abs(lhs), abs(rhs), 1e-300))
    assert worst <= 1e-13

    # conserved totals: deterministic and stochastic runs
    drift_worst = 0.0
    for path in ("models/diffusion.mod", "models/heat.mod",
                 "models/interface.mod"):
        model = mf.load_model(path)
        traj = mf.run_gradient_flow(model.initial_state, model.metric,
                                    model.functional, model.dt, 200,
                                    scheme=model.scheme, names=model.names)
        for series in traj.totals.values():
            drift_worst = max(drift_worst, float(
                np.max(np.abs(np.diff(series))) / max(abs(series[0]), 1e-300)))
    model = mf.load_model("models/diffusion.mod")
    for sid in range(5):
        cfg = NoiseConfig(epsilon=0.25, seed=9, stream_id=sid)
        straj, _ = mf.sample_path(model.initial_state, model.metric,
                                  model.functional, model.dt, 200, cfg,
                                  names=model.names)
        series = np.sum(straj.data["rho"], axis=1) * model.grid.dx
        drift_worst = max(drift_worst, float(
            np.max(np.abs(np.diff(series))) / abs(series[0])))
    assert drift_worst <= 1e-12
    _report("C1 adjointness & conservation",
            f"adjointness {worst:.2e} <= 1e-13, "
            f"per-step total drift {drift_worst:.2e} <= 1e-12")


# -- 2: dual representation of the diffusion velocity ------------------------

def test_c02_dual_representation():
    rng = np.random.default_rng(102)
    g = Grid1D(128, 1.0, "periodic")
    s = Boltzmann()
    worst = 0.0
    for _ in range(20):
        rho = Field(g, 0.5 + rng.random(128))
        for m in (1.0, 0.7):
            k = WassersteinMetric(mobility=LinearMobility(m),
                                  face_mean="log_mean")
            v1 = k.apply(rho, s.derivative(rho)).values
            v2 = m * mf.divergence(mf.gradient(rho)).values
            worst = max(worst, float(np.max(np.abs(v1 - v2))
                                     / np.max(np.abs(v2))))
    assert worst <= 1e-12
    _report("C2 dual representation", f"relative gap {worst:.2e} <= 1e-12")


# -- 3: constrained maximization generates the metric -------------------------

def test_c03_mepp_generates_gradient_flow():
    rng = np.random.default_rng(103)
    g = Grid1D(48, 1.0, "periodic")
    s = Boltzmann()
    worst_o = worst_m = 0.0
    for _ in range(50):
        rho = Field(g, 0.4 + rng.random(48))
        eta = Field(g, 0.2 + rng.random(48))
        sol = mf.solve_unconstrained(rho, s, eta)
        oracle = s.derivative(rho).values / (2.0 * eta.values)
        worst_o = max(worst_o, float(np.max(np.abs(sol.zdot.values - oracle))
                                     / np.max(np.abs(oracle))))
    for _ in range(50):
        rho = Field(g, 0.4 + rng.random(48))
        hv = 0.2 + rng.random(48)
        sol = mf.solve_conserved(rho, s, FluxField(g, hv))
        ds = s.derivative(rho)
        flux = grad_values(g, ds.values) / (2.0 * hv)
        oracle = -div_values(g, flux)
        worst_o = max(worst_o, float(np.max(np.abs(sol.zdot.values - oracle))
                                     / np.max(np.abs(oracle))))
        worst_m = max(worst_m, float(
            np.max(np.abs(sol.multiplier.values - ds.values))
            / np.max(np.abs(ds.values))))
    pf = mf.PhaseField(w=1.0, kappa=2e-3, latent_heat=0.4, t_melt=1.0)
    for _ in range(50):
        phi = Field(g, 0.2 + 0.6 * rng.random(48))
        e = pf.energy_from_temperature(Field(g, 0.8 + 0.4 * rng.random(48)),
                                       phi)
        hu = 0.3 + rng.random()
        hc = 0.3 + rng.random()
        huc = (rng.random() - 0.5) * 1.8 * np.sqrt(hu * hc)
        sol = mf.solve_coupled(phi, e, pf, Field.full(g, hu),
                               Field.full(g, hc), Field.full(g, huc))
        k = mf.CoupledMetric(h_u=hu, h_c=hc, h_uc=huc)
        du, dc = k.apply((phi, e), _pair_forces(pf, phi, e))
        scale = max(np.max(np.abs(du.values)), np.max(np.abs(dc.values)))
        worst_o = max(worst_o, float(max(
            np.max(np.abs(sol.zdot[0].values - du.values)),
            np.max(np.abs(sol.zdot[1].values - dc.values))) / scale))
        fc = _pair_forces(pf, phi, e)[1]
        worst_m = max(worst_m, float(
            np.max(np.abs(sol.multiplier.values - fc.values))
            / np.max(np.abs(fc.values))))
    assert worst_o <= 1e-10
    assert worst_m <= 1e-12
    _report("C3 maximization generates the flow",
            f"oracle gap {worst_o:.2e} <= 1e-10, "
            f"multiplier gap {worst_m:.2e} <= 1e-12")


# -- 4: block inversion --------------------------------------------------------

def test_c04_block_inversion():
    m_u, m_c, m_uc = mf.invert_H_blocks(2.0, 2.0, 1.0)
    assert m_u == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert m_c == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert m_uc == pytest.approx(-1.0 / 6.0, rel=1e-14)
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(1000):
        a = 0.1 + rng.random()
        c = 0.1 + rng.random()
        b = (rng.random() - 0.5) * 2.0 * 0.95 * np.sqrt(a * c)
        mu, mc, muc = mf.invert_H_blocks(a, c, b)
        m = np.array([[mu, muc], [muc, mc]])
        h = np.array([[a, b], [b, c]])
        worst = max(worst, float(np.max(np.abs(2.0 * m @ h - np.eye(2)))))
    assert worst <= 1e-12
    _report("C4 block inversion",
            f"worked case (1/3, 1/3, -1/6) exact, ||2MH - I|| {worst:.2e}")


# -- 5: heat example -----------------------------------------------------------

def test_c05_heat_example():
    g = Grid1D(32, 1.0, "dirichlet", bc_left=1.0, bc_right=2.0)
    traj = mf.run_heat(Field.full(g, 1.5), c_v=1.0, conductivity=0.5,
                       dt=0.05, n_steps=400, scheme="semi_implicit")
    dev = float(np.max(np.abs(traj.data["e"][-1] - (1.0 + g.cell_centers()))))
    assert dev <= 1e-8
    cross = traj.meta["cross_form_residual"]
    assert cross <= 1e-12

    # resistivity route vs linear flux-force closure on the same force
    g2 = Grid1D(64, 1.0, "periodic")
    rng = np.random.default_rng(105)
    s = Thermal(c_v=1.0)
    e = Field(g2, 1.0 + 0.5 * rng.random(64))
    hv = 0.3 + rng.random(64)
    sol = mf.solve_conserved(e, s, FluxField(g2, hv))
    x = mf.gradient(s.derivative(e))
    q = mf.onsager_flux(x, FluxField(g2, 1.0 / (2.0 * hv)))
    gap = float(np.max(np.abs(q.values - sol.flux.values))
                / np.max(np.abs(q.values)))
    assert gap <= 1e-12
    _report("C5 heat example",
            f"steady-state deviation {dev:.2e} <= 1e-8, cross-form "
            f"{cross:.2e} <= 1e-12, flux-closure gap {gap:.2e} <= 1e-12")


# -- 6: entropy as a Lyapunov functional ---------------------------------------

def test_c06_lyapunov_on_shipped_models():
    worst = np.inf
    for path in MODELS:
        model = mf.load_model(path)
        traj = mf.run_gradient_flow(model.initial_state, model.metric,
                                    model.functional, model.dt, 10_000,
                                    scheme=model.scheme, names=model.names)
        worst = min(worst, float(np.min(np.diff(traj.entropy))))
        assert np.min(np.diff(traj.entropy)) >= -1e-12, path
    _report("C6 Lyapunov", f"10^4 steps per shipped model, smallest entropy "
            f"increment {worst:.2e} >= -1e-12")


# -- 7: optimal-path identity under refinement ----------------------------------

def test_c07_optimal_path_identity_refinement():
    res_phi, res_psi = [], []
    for n, dtv, steps in ((32, 1.6e-4, 125), (64, 4e-5, 500),
                          (128, 1e-5, 2000)):
        g = Grid1D(n, 1.0, "periodic")
        rho0 = Field(g, 1.0 + 0.5 * np.sin(2 * np.pi * g.cell_centers()))
        k = WassersteinMetric(mobility=LinearMobility(1.0))
        traj = mf.run_gradient_flow(rho0, k, Boltzmann(), dtv, steps,
                                    scheme="semi_implicit", names=("rho",))
        d = mf.diagnostics(traj, k, Boltzmann())
        res_phi.append(float(np.mean(np.abs(d.ds_dt - 2 * d.phi))
                             / np.mean(np.abs(d.ds_dt))))
        res_psi.append(float(np.mean(np.abs(d.ds_dt - 2 * d.psi))
                             / np.mean(np.abs(d.ds_dt))))
    orders_phi = np.log2(np.array(res_phi[:-1]) / np.array(res_phi[1:]))
    orders_psi = np.log2(np.array(res_psi[:-1]) / np.array(res_psi[1:]))
    assert np.all(np.diff(res_phi) < 0) and np.all(np.diff(res_psi) < 0)
    assert np.all(orders_phi >= 1.0) and np.all(orders_psi >= 1.0)
    _report("C7 optimal-path identity",
            f"residuals {[f'{r:.1e}' for r in res_phi]} decreasing, measured "
            f"orders {[f'{o:.2f}' for o in orders_phi]} >= 1")


# -- 8: rate functional ----------------------------------------------------------

def test_c08_rate_functional():
    g = Grid1D(64, 1.0, "periodic")
    rho0 = Field(g, 1.0 + 0.5 * np.sin(2 * np.pi * g.cell_centers()))
    k = WassersteinMetric(mobility=LinearMobility(1.0))
    s = Boltzmann()

    vals = []
    for n_steps, dtv in ((200, 1e-4), (400, 5e-5), (800, 2.5e-5)):
        traj = mf.run_gradient_flow(rho0, k, s, dtv, n_steps,
                                    scheme="explicit", names=("rho",))
        vals.append(mf.rate_functional(traj, k, s).rate_value)
    orders = np.log2(np.array(vals[:-1]) / np.array(vals[1:]))
    assert np.all(orders >= 1.0)

    t_end = 0.05
    nt = 51
    frozen = Trajectory(grid=g, times=np.linspace(0, t_end, nt),
                        names=("rho",),
                        data={"rho": np.tile(rho0.values, (nt, 1))},
                        conserved={"rho": True})
    rep = mf.rate_functional(frozen, k, s)
    ds = s.derivative(rho0)
    psi0 = 0.5 * mf.inner_l2_weighted(ds, k.apply(rho0, ds))
    frozen_rel = abs(rep.rate_value - t_end * psi0) / (t_end * psi0)
    assert frozen_rel <= 1e-10

    traj = mf.run_gradient_flow(rho0, k, s, 1e-4, 200, scheme="explicit",
                                names=("rho",))
    base, tt = traj.data["rho"], traj.times
    pert = np.sin(4 * np.pi * g.cell_centers())
    bump = np.sin(np.pi * tt / tt[-1]) ** 2

    def rate_at(a):
        return mf.rate_functional(
            Trajectory(grid=g, times=tt, names=("rho",),
                       data={"rho": base + a * np.outer(bump, pert)},
                       conserved={"rho": True}), k, s).rate_value

    ratio = rate_at(2e-2) / rate_at(1e-2)
    assert ratio == pytest.approx(4.0, rel=0.02)

    rng = np.random.default_rng(108)
    wiggle = rng.standard_normal((tt.size, 64))
    wiggle -= wiggle.mean(axis=1, keepdims=True)
    arb = Trajectory(grid=g, times=tt, names=("rho",),
                     data={"rho": base + 0.03 * wiggle},
                     conserved={"rho": True})
    rep_arb = mf.rate_functional(arb, k, s)
    ident = rep_arb.identity_residual_max / max(
        1.0, float(np.max(np.abs(rep_arb.ds_rate))))
    assert ident <= 1e-10
    _report("C8 rate functional",
            f"refinement orders {[f'{o:.2f}' for o in orders]}, frozen-path "
            f"gap {frozen_rel:.1e}, quadratic ratio {ratio:.4f}, expansion "
            f"identity {ident:.1e} <= 1e-10")


# -- 9: fluctuation-dissipation -------------------------------------------------

def test_c09_fluctuation_dissipation():
    model = mf.load_model("models/diffusion.mod")
    g = model.grid
    eps = model.noise.epsilon
    worst_dev = worst_mass = 0.0
    for state, seed in ((Field.full(g, 1.0), 1091),
                        (model.initial[0], 1092)):
        rep = mf.fd_check(model.metric, state, dt=model.dt, epsilon=eps,
                          n_draws=10_000, n_probes=20, seed=seed)
        assert rep.passed, f"max deviation {rep.max_dev_sigmas:.2f} sigma"
        worst_dev = max(worst_dev, rep.max_dev_sigmas)
        worst_mass = max(worst_mass, rep.mass_residual)
    assert worst_mass <= 1e-12
    _report("C9 fluctuation-dissipation",
            f"worst probe deviation {worst_dev:.2f} sigma <= 4, conserved "
            f"total residual {worst_mass:.2e} <= 1e-12")


# -- 10: decay trend of tube probabilities ---------------------------------------

def test_c10_decay_trend():
    model = mf.load_model("models/relaxation.mod")
    x = model.grid.cell_centers()
    # a displaced profile the deterministic path never approaches
    tube = TubeSpec(reference=-0.6 * np.sin(2 * np.pi * x), radius=0.45,
                    event="reach")
    det = mf.empirical_rate_decay(model.initial_state, model.metric,
                                  model.functional, model.dt, model.steps,
                                  tube, eps_list=(0.0,), n_replicas=1,
                                  seed=29)[0]
    assert det.p_hat == 0.0
    rows = mf.empirical_rate_decay(model.initial_state, model.metric,
                                   model.functional, model.dt, model.steps,
                                   tube, eps_list=(0.4, 0.2, 0.1),
                                   n_replicas=10_000, seed=29,
                                   rate_sample_cap=5)
    hits = [r.hits for r in rows]
    assert hits[0] > hits[1] > hits[2] > 0
    exps = [r.minus_eps_log_p for r in rows]
    assert all(0.0 < e < 10.0 for e in exps)  # order-of-magnitude diagnostic
    _report("C10 decay trend",
            f"hits per 10^4: {hits} (monotone), -eps log P = "
            f"{[f'{e:.2f}' for e in exps]} (O(1) diagnostic)")


# -- 11: parser robustness --------------------------------------------------------

def test_c11_parser_robustness():
    sources = {path: open(path, "rb").read() for path in MODELS}
    for path, text in sources.items():
        spec = mf.parse_model(text)
        assert mf.parse_model(mf.serialize_model(spec)) == spec, path

    rng = np.random.default_rng(111)
    base = sources["models/diffusion.mod"]
    crashes = 0
    for i in range(100_000):
        data = bytearray(base)
        for _ in range(int(rng.integers(1, 10))):
            pos = int(rng.integers(0, len(data)))
            data[pos] = int(rng.integers(0, 256))
        if rng.random() < 0.05:
            data = bytearray(rng.integers(0, 256, size=rng.integers(0, 200),
                                          dtype=np.uint8).tobytes())
        try:
            mf.parse_model(bytes(data))
        except mf.ModelError:
            pass
        except Exception:
            crashes += 1
    assert crashes == 0

    from meppflow.verify import run_verification
    checks = run_verification(mf.load_model("models/diffusion.mod"))
    assert all(c.passed for c in checks)
    _report("C11 parser robustness",
            "10^5 fuzz iterations, zero crashes; round-trip equality on all "
            "fixtures; verification suite clean")
