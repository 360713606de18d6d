import numpy as np
import pytest

from meppflow import (Boltzmann, Dirichlet, DomainError, Field, Grid1D,
                      PhaseField, Thermal, divergence, gradient)


def rel_max(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300)


def test_boltzmann_values():
    g = Grid1D(8, 1.0, "periodic")
    s = Boltzmann()
    assert s.value(Field.full(g, 1.0)) == pytest.approx(0.0, abs=1e-15)
    assert s.value(Field.full(g, 2.0)) == pytest.approx(-2.0 * np.log(2.0),
                                                        rel=1e-14)
    assert np.allclose(s.derivative(Field.full(g, 1.0)).values, -1.0)


def test_boltzmann_positivity_error_names_cell():
    g = Grid1D(4, 1.0, "periodic")
    s = Boltzmann()
    with pytest.raises(DomainError) as err:
        s.value(Field(g, [1.0, 1.0, -0.5, 1.0]))
    assert err.value.index == 2


def test_dirichlet_values():
    g = Grid1D(8, 1.0, "periodic")
    s = Dirichlet()
    assert s.value(Field.full(g, 7.0)) == 0.0
    z = Field(g, np.sin(2 * np.pi * g.cell_centers()))
    assert np.array_equal(s.derivative(z).values,
                          divergence(gradient(z)).values)


def test_dirichlet_derivative_approximates_laplacian():
    g = Grid1D(256, 1.0, "periodic")
    x = g.cell_centers()
    z = Field(g, np.sin(2 * np.pi * x))
    ds = Dirichlet().derivative(z).values
    exact = -(2 * np.pi) ** 2 * np.sin(2 * np.pi * x)
    assert np.max(np.abs(ds - exact)) < 1e-2 * np.max(np.abs(exact))


def test_thermal_inverse_temperature():
    g = Grid1D(6, 1.0, "periodic")
    s = Thermal(c_v=1.0)
    e = Field.full(g, 2.0)
    assert np.allclose(s.derivative(e).values, 0.5)
    # ds/de * e = c_v elementwise
    rng = np.random.default_rng(0)
    s2 = Thermal(c_v=2.5)
    e2 = Field(g, 1.0 + rng.random(6))
    assert np.allclose(s2.derivative(e2).values * e2.values, 2.5, rtol=1e-14)


@pytest.mark.parametrize("bc", ["periodic", "no_flux"])
def test_fd_oracle_campaign(bc):
    # 100 random admissible states across the variants, 1e-6 relative
    rng = np.random.default_rng(42)
    g = Grid1D(20, 1.0, bc)
    pf = PhaseField(w=1.2, kappa=3e-3, latent_heat=0.7, t_melt=1.1, c_v=0.9)
    for _ in range(25):
        rho = Field(g, 0.4 + rng.random(20))
        s = Boltzmann()
        assert rel_max(s.derivative(rho).values,
                       s.derivative_fd(rho).values) < 1e-6

        z = Field(g, rng.standard_normal(20))
        s2 = Dirichlet()
        assert rel_max(s2.derivative(z).values,
                       s2.derivative_fd(z).values) < 1e-6

        e = Field(g, 0.8 + rng.random(20))
        s3 = Thermal(c_v=1.3)
        assert rel_max(s3.derivative(e).values,
                       s3.derivative_fd(e).values) < 1e-6

        phi = Field(g, rng.random(20))
        tfield = Field(g, 0.8 + 0.5 * rng.random(20))
        e4 = pf.energy_from_temperature(tfield, phi)
        de, dphi = pf.derivative(e4, phi)
        de_fd, dphi_fd = pf.derivative_fd(e4, phi)
        assert rel_max(de.values, de_fd.values) < 1e-6
        assert rel_max(dphi.values, dphi_fd.values) < 1e-6


def test_boltzmann_concave_along_segments():
    rng = np.random.default_rng(7)
    g = Grid1D(16, 1.0, "periodic")
    s = Boltzmann()
    for _ in range(30):
        a = Field(g, 0.2 + rng.random(16))
        b = Field(g, 0.2 + rng.random(16))
        mid = Field(g, 0.5 * (a.values + b.values))
        assert s.value(mid) >= 0.5 * (s.value(a) + s.value(b)) - 1e-12


def test_phase_field_temperature_closure():
    g = Grid1D(12, 1.0, "no_flux")
    pf = PhaseField(w=1.0, kappa=1e-3, latent_heat=0.5, t_melt=1.0)
    rng = np.random.default_rng(3)
    phi = Field(g, rng.random(12))
    t = Field(g, 0.7 + 0.6 * rng.random(12))
    e = pf.energy_from_temperature(t, phi)
    assert np.allclose(pf.temperature(e, phi).values, t.values, rtol=1e-13)
    # ds/de is exactly the inverse temperature
    de, _ = pf.derivative(e, phi)
    assert np.allclose(de.values, 1.0 / t.values, rtol=1e-13)


def test_phase_field_nonpositive_temperature_error():
    g = Grid1D(8, 1.0, "no_flux")
    pf = PhaseField(w=1.0, kappa=1e-3, latent_heat=0.5, t_melt=1.0)
    phi = Field.full(g, 0.0)
    e = Field.full(g, -1.0)
    with pytest.raises(DomainError):
        pf.temperature(e, phi)


def test_phase_field_parameter_validation():
    with pytest.raises(DomainError):
        PhaseField(w=-1.0)
    with pytest.raises(DomainError):
        PhaseField(t_melt=0.0)
    with pytest.raises(DomainError):
        Thermal(c_v=0.0)
