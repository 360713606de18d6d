import numpy as np
import pytest

from meppflow import (Boltzmann, ConstantMobility, Dirichlet, Field, Grid1D,
                      L2Metric, LinearMobility, RangeError,
                      Trajectory, TubeSpec, WassersteinMetric, decompose,
                      empirical_rate_decay, inner_l2_weighted, rate_functional,
                      run_gradient_flow)


@pytest.fixture
def dk():
    g = Grid1D(64, 1.0, "periodic")
    rho0 = Field(g, 1.0 + 0.5 * np.sin(2 * np.pi * g.cell_centers()))
    k = WassersteinMetric(mobility=LinearMobility(1.0), face_mean="log_mean")
    return g, rho0, k, Boltzmann()


def frozen_traj(g, field, t_end, nt):
    return Trajectory(grid=g, times=np.linspace(0.0, t_end, nt),
                      names=("rho",),
                      data={"rho": np.tile(field.values, (nt, 1))},
                      conserved={"rho": True})


def test_frozen_path_rate_is_horizon_times_psi(dk):
    g, rho0, k, s = dk
    t_end = 0.05
    traj = frozen_traj(g, rho0, t_end, 51)
    rep = rate_functional(traj, k, s)
    ds = s.derivative(rho0)
    psi0 = 0.5 * inner_l2_weighted(ds, k.apply(rho0, ds))
    assert rep.rate_value == pytest.approx(t_end * psi0, rel=1e-12)
    assert np.allclose(rep.psi, psi0, rtol=1e-12)
    assert np.allclose(rep.pointwise_gap, 2.0 * psi0, rtol=1e-10)


def test_zero_path_at_equilibrium_all_zero():
    g = Grid1D(32, 1.0, "periodic")
    k = WassersteinMetric(mobility=LinearMobility(1.0))
    s = Boltzmann()
    traj = frozen_traj(g, Field.full(g, 1.0), 0.1, 21)
    rep = rate_functional(traj, k, s)
    # dS is spatially constant at the uniform state: everything vanishes
    assert rep.rate_value <= 1e-20
    assert np.max(np.abs(rep.phi)) <= 1e-20
    assert np.max(np.abs(rep.psi)) <= 1e-20


def test_rate_nonnegative_and_identity_on_arbitrary_paths(dk):
    g, rho0, k, s = dk
    rng = np.random.default_rng(0)
    tt = np.linspace(0.0, 0.02, 41)
    base = np.tile(rho0.values, (41, 1))
    wiggle = rng.standard_normal((41, 64))
    wiggle -= wiggle.mean(axis=1, keepdims=True)  # stay on the mass shell
    data = base + 0.05 * wiggle
    traj = Trajectory(grid=g, times=tt, names=("rho",), data={"rho": data},
                      conserved={"rho": True})
    rep = rate_functional(traj, k, s)
    assert rep.rate_value >= -1e-12
    assert rep.identity_residual_max <= 1e-10 * max(
        1.0, float(np.max(np.abs(rep.ds_rate))))


def test_decompose_matches_rate_functional(dk):
    g, rho0, k, s = dk
    traj = run_gradient_flow(rho0, k, s, 1e-4, 50, scheme="explicit",
                             names=("rho",))
    a = rate_functional(traj, k, s)
    b = decompose(traj, k, s)
    assert a.rate_value == b.rate_value
    assert np.array_equal(a.phi, b.phi)


def test_optimal_path_rate_vanishes_under_refinement(dk):
    g, rho0, k, s = dk
    vals = []
    for n_steps, dtv in ((200, 1e-4), (400, 5e-5), (800, 2.5e-5)):
        traj = run_gradient_flow(rho0, k, s, dtv, n_steps, scheme="explicit",
                                 names=("rho",))
        vals.append(rate_functional(traj, k, s).rate_value)
    orders = np.log2(np.array(vals[:-1]) / np.array(vals[1:]))
    assert np.all(np.diff(vals) < 0)
    assert np.all(orders >= 1.0)


def test_optimal_path_identity_pointwise(dk):
    g, rho0, k, s = dk
    traj = run_gradient_flow(rho0, k, s, 5e-5, 200, scheme="explicit",
                             names=("rho",))
    rep = rate_functional(traj, k, s)
    ds_dt = np.gradient(
        [Boltzmann().value(Field(g, row)) for row in traj.data["rho"]],
        traj.times, edge_order=2)
    resid = np.abs(ds_dt - 2.0 * rep.phi[:len(ds_dt)])
    assert np.mean(resid) / np.mean(np.abs(ds_dt)) < 5e-3


def test_quadratic_scaling(dk):
    g, rho0, k, s = dk
    traj = run_gradient_flow(rho0, k, s, 1e-4, 200, scheme="explicit",
                             names=("rho",))
    base = traj.data["rho"]
    tt = traj.times
    pert = np.sin(4 * np.pi * g.cell_centers())
    bump = np.sin(np.pi * tt / tt[-1]) ** 2

    def rate_at(a):
        data = base + a * np.outer(bump, pert)
        return rate_functional(
            Trajectory(grid=g, times=tt, names=("rho",), data={"rho": data},
                       conserved={"rho": True}), k, s).rate_value

    ratio = rate_at(2e-2) / rate_at(1e-2)
    assert ratio == pytest.approx(4.0, rel=0.02)


def test_optimal_path_attains_smallest_rate(dk):
    g, rho0, k, s = dk
    traj = run_gradient_flow(rho0, k, s, 1e-4, 200, scheme="explicit",
                             names=("rho",))
    base = traj.data["rho"]
    tt = traj.times
    i0 = rate_functional(traj, k, s).rate_value
    rng = np.random.default_rng(1)
    shape = np.sin(np.pi * tt / tt[-1])
    for _ in range(20):
        xi = rng.standard_normal(64)
        xi -= xi.mean()
        data = base + 5e-3 * np.outer(shape, xi)
        ip = rate_functional(
            Trajectory(grid=g, times=tt, names=("rho",), data={"rho": data},
                       conserved={"rho": True}), k, s).rate_value
        assert ip > i0


def test_rate_rejects_mass_drifting_path(dk):
    g, rho0, k, s = dk
    tt = np.linspace(0.0, 0.01, 11)
    drift = 1.0 + 0.05 * tt / tt[-1]
    data = np.outer(drift, rho0.values)
    traj = Trajectory(grid=g, times=tt, names=("rho",), data={"rho": data},
                      conserved={"rho": True})
    with pytest.raises(RangeError) as err:
        rate_functional(traj, k, s)
    assert "time index" in str(err.value)


def test_rate_invariant_under_time_refinement(dk):
    # piecewise-linear midpoint insertion changes the rate only at O(dt^2)
    g, rho0, k, s = dk
    traj = run_gradient_flow(rho0, k, s, 2e-4, 60, scheme="semi_implicit",
                             names=("rho",))
    coarse = rate_functional(traj, k, s).rate_value
    tt = traj.times
    data = traj.data["rho"]
    tt_f = np.sort(np.concatenate([tt, 0.5 * (tt[:-1] + tt[1:])]))
    data_f = np.empty((tt_f.size, g.n_cells))
    data_f[0::2] = data
    data_f[1::2] = 0.5 * (data[:-1] + data[1:])
    fine = rate_functional(
        Trajectory(grid=g, times=tt_f, names=("rho",), data={"rho": data_f},
                   conserved={"rho": True}), k, s).rate_value
    assert fine == pytest.approx(coarse, rel=0.15)


def _slow_relaxation_setup():
    g = Grid1D(8, 1.0, "periodic")
    k = L2Metric(mobility=ConstantMobility(1.0))
    s = Dirichlet()
    return g, k, s


def test_decay_stay_event_around_deterministic_path():
    # generous tube around the flow itself: small-noise paths stay inside
    g, k, s = _slow_relaxation_setup()
    z0 = Field(g, 0.5 * np.sin(2 * np.pi * g.cell_centers()))
    det = run_gradient_flow(z0, k, s, 8e-4, 150, scheme="explicit",
                            names=("z",))
    tube = TubeSpec(reference=det.data["z"], radius=0.8, event="stay")
    rows = empirical_rate_decay(z0, k, s, 8e-4, 150, tube,
                                eps_list=(0.05, 0.0), n_replicas=200, seed=3)
    assert rows[1].p_hat == 1.0          # eps = 0: membership indicator
    assert rows[1].minus_eps_log_p == 0.0
    assert rows[0].p_hat >= 0.9
    assert rows[0].minus_eps_log_p <= 0.05


def test_decay_reach_event_monotone_trend():
    # tube the deterministic path never enters: hits decay with the noise
    g, k, s = _slow_relaxation_setup()
    z0 = Field.full(g, 0.0)
    ref = 0.6 * np.sin(2 * np.pi * g.cell_centers())
    tube = TubeSpec(reference=ref, radius=0.45, event="reach")
    rows = empirical_rate_decay(z0, k, s, 8e-4, 300, tube,
                                eps_list=(0.4, 0.2, 0.1), n_replicas=600,
                                seed=29, rate_sample_cap=5)
    hits = [r.hits for r in rows]
    assert hits[0] > hits[1] > hits[2] > 0
    # the eps = 0 path never reaches the displaced tube
    row0 = empirical_rate_decay(z0, k, s, 8e-4, 300, tube, eps_list=(0.0,),
                                n_replicas=1, seed=29)[0]
    assert row0.p_hat == 0.0
    # sampled tube paths carry a positive rate estimate
    assert rows[0].min_rate_in_tube is not None
    assert rows[0].min_rate_in_tube > 0.0


def test_decay_censored_rows_reported():
    g, k, s = _slow_relaxation_setup()
    z0 = Field.full(g, 0.0)
    ref = 5.0 * np.sin(2 * np.pi * g.cell_centers())  # unreachably far
    tube = TubeSpec(reference=ref, radius=0.1, event="reach")
    rows = empirical_rate_decay(z0, k, s, 8e-4, 50, tube, eps_list=(0.2,),
                                n_replicas=50, seed=1)
    assert rows[0].censored
    assert rows[0].minus_eps_log_p is None
