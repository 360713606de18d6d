"""Backend parity: the compiled kernels and the NumPy fallback compute the
same values (bit-identical for linear stencils, within a couple of ulps for
kernels containing a logarithm, whose libm and SIMD roundings may differ)."""

import numpy as np
import pytest

from meppflow import _kernels_py as kpy

compiled = pytest.importorskip("meppflow._kernels")


def _ulp_close(a, b, ulps=4):
    return np.all(np.abs(a - b) <= ulps * np.spacing(np.maximum(
        np.abs(a), np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(123)


def test_linear_kernels_bit_identical(rng):
    n = 37
    p = rng.standard_normal(n)
    jb = rng.standard_normal(n + 1)
    jp = rng.standard_normal(n)
    dx = 1.0 / n
    assert np.array_equal(compiled.grad_periodic(p, dx), kpy.grad_periodic(p, dx))
    assert np.array_equal(compiled.grad_bounded(p, dx), kpy.grad_bounded(p, dx))
    assert np.array_equal(compiled.grad_dirichlet(p, dx, 1.0, 2.0),
                          kpy.grad_dirichlet(p, dx, 1.0, 2.0))
    assert np.array_equal(compiled.div_periodic(jp, dx), kpy.div_periodic(jp, dx))
    assert np.array_equal(compiled.div_bounded(jb, dx), kpy.div_bounded(jb, dx))
    assert np.array_equal(compiled.face_arith_periodic(p),
                          kpy.face_arith_periodic(p))
    assert np.array_equal(compiled.face_arith_bounded(p),
                          kpy.face_arith_bounded(p))


def test_wasserstein_apply_bit_identical(rng):
    n = 41
    f = rng.standard_normal(n)
    mf_p = rng.random(n)
    mf_b = rng.random(n + 1)
    dx = 1.0 / n
    assert np.array_equal(compiled.wasserstein_apply_periodic(mf_p, f, dx),
                          kpy.wasserstein_apply_periodic(mf_p, f, dx))
    assert np.array_equal(compiled.wasserstein_apply_bounded(mf_b, f, dx),
                          kpy.wasserstein_apply_bounded(mf_b, f, dx))


def test_logmean_kernels_ulp_close(rng):
    z = 0.5 + rng.random(33)
    a = compiled.face_logmean_periodic(z)
    b = kpy.face_logmean_periodic(z)
    assert _ulp_close(a, b)
    a = compiled.face_logmean_bounded(z)
    b = kpy.face_logmean_bounded(z)
    assert _ulp_close(a, b)
    # equal-argument limit branch is exact in both
    same = np.full(8, 0.73)
    assert np.array_equal(compiled.face_logmean_periodic(same),
                          kpy.face_logmean_periodic(same))


@pytest.mark.parametrize("variant", ["periodic", "bounded"])
def test_em_step_parity(rng, variant):
    n = 29
    rho = 0.5 + rng.random(n)
    dx = 1.0 / n
    n_db = n if variant == "periodic" else n - 1
    db = rng.standard_normal(n_db)
    fc = getattr(compiled, f"em_step_wboltz_{variant}")
    fp = getattr(kpy, f"em_step_wboltz_{variant}")
    for linear_mob in (True, False):
        for use_logmean in (True, False):
            for seps in (0.0, 0.3):
                a, ca = fc(rho, 0.8, linear_mob, use_logmean, db, seps,
                           1e-4, dx)
                b, cb = fp(rho, 0.8, linear_mob, use_logmean, db, seps,
                           1e-4, dx)
                assert ca == cb == False  # noqa: E712
                assert _ulp_close(a, b, ulps=8)


@pytest.mark.parametrize("variant", ["periodic", "bounded"])
def test_em_step_parity_clipped(rng, variant):
    n = 17
    rho = 0.5 + rng.random(n)
    rho[4] = -0.1  # inadmissible cell triggers the conservative fallback
    dx = 1.0 / n
    n_db = n if variant == "periodic" else n - 1
    db = rng.standard_normal(n_db)
    fc = getattr(compiled, f"em_step_wboltz_{variant}")
    fp = getattr(kpy, f"em_step_wboltz_{variant}")
    a, ca = fc(rho, 1.0, True, True, db, 0.5, 1e-4, dx)
    b, cb = fp(rho, 1.0, True, True, db, 0.5, 1e-4, dx)
    assert ca and cb
    assert _ulp_close(a, b, ulps=8)
    assert np.all(np.isfinite(a))


def test_mass_conservation_bitwise_structure(rng):
    # the fused step updates through one flux array, so the total moves by
    # at most accumulated round-off
    n = 64
    rho = 1.0 + 0.5 * np.sin(2 * np.pi * (np.arange(n) + 0.5) / n)
    dx = 1.0 / n
    db = rng.standard_normal(n)
    out, _ = compiled.em_step_wboltz_periodic(rho, 1.0, True, True, db,
                                              0.7, 1e-4, dx)
    assert abs(out.sum() - rho.sum()) <= 1e-10
