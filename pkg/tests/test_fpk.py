from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from fracgronwall.errors import DomainError, GridMismatchError, MassDriftError, StabilityError
from fracgronwall.fpk import (
    ABEL_CFL_MAX,
    CFL_MAX,
    DensityField,
    SpaceGrid,
    TestFunction,
    classical_fpk_reference,
    fpk_solve,
    generator_apply,
    kde_l1_distance,
    min_time_steps,
    spatial_operators,
    weak_moment_check,
)
from fracgronwall.grids import TimeGrid
from fracgronwall.sdesim import CoeffSpec, simulate_ensemble
from fracgronwall.singquad import abel_weights

family_specs = st.sampled_from(["zero", "const:0.7", "linear:-0.4", "affine:0.3,0.6", "sin:0.8"])


def test_space_grid():
    g = SpaceGrid(-1.0, 1.0, 20)
    assert g.h == pytest.approx(0.1)
    assert g.centers[0] == pytest.approx(-0.95) and len(g.faces) == 21
    assert SpaceGrid.around(2.0, 1.0, 16) == SpaceGrid(1.0, 3.0, 16)
    for bad in ((1.0, 0.0, 20), (0.0, 1.0, 8), (0.0, math.inf, 20), (0.0, 1.0, 20.5)):
        with pytest.raises(DomainError):
            SpaceGrid(*bad)


# --- stencils --------------------------------------------------------------


def test_advection_stencil():
    g = SpaceGrid(0.0, 1.6, 16)
    A, B = spatial_operators(CoeffSpec.parse("const:1"), g)
    A = A.toarray()
    h = g.h
    i = 5
    assert A[i, i - 1] == pytest.approx(1 / (2 * h))
    assert A[i, i] == pytest.approx(0.0, abs=1e-12)
    assert A[i, i + 1] == pytest.approx(-1 / (2 * h))
    # Wall cells only see their interior face.
    assert A[0, 0] == pytest.approx(-1 / (2 * h)) and A[-1, -1] == pytest.approx(1 / (2 * h))
    assert B.nnz == 0


def test_diffusion_stencil():
    g = SpaceGrid(0.0, 1.6, 16)
    A, _ = spatial_operators(CoeffSpec.parse(sigma2="const:1"), g)
    A = A.toarray()
    h2 = g.h**2
    np.testing.assert_allclose(A[7, 6:9], [0.5 / h2, -1.0 / h2, 0.5 / h2])
    np.testing.assert_allclose(A[0, :2], [-0.5 / h2, 0.5 / h2])


def test_abel_stencil_is_advection_by_sigma1():
    g = SpaceGrid(-2.0, 2.0, 32)
    A, _ = spatial_operators(CoeffSpec.parse(b="affine:0.2,-1"), g)
    _, B = spatial_operators(CoeffSpec.parse(sigma1="affine:0.2,-1"), g)
    np.testing.assert_array_equal(A.toarray(), B.toarray())
    # Central fluxes give a tridiagonal operator.
    assert np.count_nonzero(np.triu(B.toarray(), 2)) == 0


@given(family_specs, family_specs, family_specs)
def test_column_sums_vanish(b, s1, s2):
    g = SpaceGrid(-3.0, 3.0, 40)
    A, B = spatial_operators(CoeffSpec.parse(b, s1, s2), g)
    scale = 1.0 / g.h**2
    assert np.max(np.abs(np.asarray(A.sum(axis=0)))) <= 1e-12 * scale
    assert np.max(np.abs(np.asarray(B.sum(axis=0)))) <= 1e-12 * scale


# --- solver ----------------------------------------------------------------


def test_zero_coefficients_freeze_initial_density():
    g = SpaceGrid.around(0.3, 2.0, 64)
    f = fpk_solve(CoeffSpec(), 0.3, 0.5, TimeGrid(1.0, 20), g)
    assert np.all(f.P == f.P[0])
    assert f.mass[0] == pytest.approx(1.0, abs=1e-14)
    assert f.mean(0) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 0.75])
def test_heat_kernel(alpha):
    g = SpaceGrid.around(0.0, 6.0, 240)
    c = CoeffSpec.parse(sigma2="const:1")
    tg = TimeGrid(1.0, min_time_steps(c, 1.0, g, alpha))
    f = fpk_solve(c, 0.0, alpha, tg, g)
    # The mollified start is N(0, h^2), so the exact law at T is N(0, 1 + h^2).
    exact = norm.pdf(g.centers, scale=math.sqrt(1.0 + g.h**2))
    l1 = np.sum(np.abs(f.P[-1] - exact)) * g.h
    assert l1 <= 0.02
    assert f.min_value >= 0.0
    assert f.mass_drift <= 1e-12


def test_classical_reduction_when_abel_channel_vanishes():
    g = SpaceGrid.around(0.5, 5.0, 100)
    c = CoeffSpec.parse("affine:0.5,-1", "zero", "affine:0.6,0.2")
    tg = TimeGrid(1.0, min_time_steps(c, 1.0, g))
    frac = fpk_solve(c, 0.5, 0.4, tg, g)
    ref = classical_fpk_reference(c, 0.5, tg, g)
    assert np.max(np.abs(frac.P - ref.P)) <= 1e-10 * np.max(ref.P)


def test_constant_shift_moves_the_mean():
    alpha, c1 = 0.75, 1.0
    g = SpaceGrid.around(1.0, 6.0, 240)
    c = CoeffSpec.parse(sigma1=f"const:{c1}", sigma2="const:1")
    tg = TimeGrid(1.0, min_time_steps(c, 1.0, g, alpha))
    f = fpk_solve(c, 1.0, alpha, tg, g)
    t = tg.nodes
    means = np.array([f.mean(k) for k in range(len(t))])
    np.testing.assert_allclose(means, 1.0 + c1 * t**alpha, atol=5e-3)
    assert f.min_value >= 0.0


def test_shift_undershoot_is_confined_to_the_initial_layer():
    # At alpha = 1/2 the explicit Abel channel dips slightly below zero while the
    # mollified point mass starts moving; it recovers quickly.
    alpha = 0.5
    g = SpaceGrid.around(0.5, 8.0, 320)
    c = CoeffSpec.parse(sigma1="const:1", sigma2="const:1")
    tg = TimeGrid(1.0, 800)
    f = fpk_solve(c, 0.5, alpha, tg, g)
    mins = f.P.min(axis=1)
    negative = np.nonzero(mins < -1e-10)[0]
    assert tg.nodes[negative.max()] <= 0.03
    assert mins.min() > -0.05 * f.P[0].max()
    assert f.mean() == pytest.approx(1.5, rel=1e-3)


def test_diffusive_step_restriction():
    g = SpaceGrid.around(0.0, 4.0, 80)
    c = CoeffSpec.parse(sigma2="const:1")
    n = min_time_steps(c, 1.0, g)
    assert (1.0 / n) / g.h**2 <= CFL_MAX < (1.0 / (n - 1)) / g.h**2
    with pytest.raises(StabilityError, match=str(n)):
        fpk_solve(c, 0.0, 0.5, TimeGrid(1.0, n - 1), g)
    fpk_solve(c, 0.0, 0.5, TimeGrid(1.0, n), g)


def test_abel_step_restriction():
    g = SpaceGrid.around(0.0, 4.0, 80)
    c = CoeffSpec.parse(sigma1="const:2")
    n = min_time_steps(c, 1.0, g, 0.5)
    assert 2.0 * (1.0 / n) ** 0.5 / g.h <= ABEL_CFL_MAX
    with pytest.raises(StabilityError):
        fpk_solve(c, 0.0, 0.5, TimeGrid(1.0, n - 1), g)


def test_mass_drift_is_detected():
    # Mass leaks through neither wall, so only a tolerance below rounding trips it.
    g = SpaceGrid.around(0.0, 4.0, 64)
    c = CoeffSpec.parse("sin:1", sigma2="const:0.5")
    tg = TimeGrid(1.0, min_time_steps(c, 1.0, g))
    with pytest.raises(MassDriftError):
        fpk_solve(c, 0.0, 0.5, tg, g, mass_tol=0.0)


def test_start_outside_grid():
    with pytest.raises(DomainError):
        fpk_solve(CoeffSpec(), 100.0, 0.5, TimeGrid(1.0, 4), SpaceGrid(0.0, 1.0, 16))


def test_density_field_shape_check():
    with pytest.raises(GridMismatchError):
        DensityField(TimeGrid(1.0, 2), SpaceGrid(0.0, 1.0, 16), np.zeros((2, 16)))


# --- generator and weak moments --------------------------------------------


def test_generator_examples():
    c = CoeffSpec.parse("linear:-1", "const:2", "const:3")
    assert generator_apply(c, "x", 0.0, 1.5) == (-1.5, 2.0, 3.0)
    assert generator_apply(c, "x2", 0.0, 1.5) == pytest.approx((2 * 1.5 * -1.5 + 9.0, 6.0, 9.0))
    L1, L2, L3 = generator_apply(c, "cos", 0.0, np.array([0.0, math.pi / 2]))
    np.testing.assert_allclose(L1, [-4.5, math.pi / 2], atol=1e-15)
    np.testing.assert_allclose(L2, [0.0, -2.0], atol=1e-15)
    custom = TestFunction("cubic", lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x)
    assert generator_apply(CoeffSpec.parse(sigma2="const:1"), custom, 0.0, 2.0) == (6.0, 0.0, 12.0)
    with pytest.raises(DomainError):
        generator_apply(c, "tan", 0.0, 1.0)


def test_weak_moments_of_the_frozen_process():
    tg = TimeGrid(1.0, 16)
    g = SpaceGrid.around(0.7, 2.0, 64)
    f = fpk_solve(CoeffSpec(), 0.7, 0.5, tg, g)
    e = simulate_ensemble(CoeffSpec(), 0.7, tg, 0.5, abel_weights(0.5, tg), 10, 0)
    for V in ("x", "x2", "cos"):
        r = weak_moment_check(CoeffSpec(), V, f, e)
        assert r.passed
        assert max(r.discrepancies.values()) <= 1e-12
        assert r.to_dict()["passed"] is True


def test_weak_moment_horizon_mismatch():
    f = fpk_solve(CoeffSpec(), 0.0, 0.5, TimeGrid(1.0, 4), SpaceGrid(-1.0, 1.0, 16))
    e = simulate_ensemble(CoeffSpec(), 0.0, TimeGrid(2.0, 4), 0.5, abel_weights(0.5, TimeGrid(2.0, 4)), 4, 0)
    with pytest.raises(GridMismatchError):
        weak_moment_check(CoeffSpec(), "x", f, e)


def test_kde_distance_to_diffusion():
    tg = TimeGrid(1.0, 400)
    g = SpaceGrid.around(0.0, 6.0, 200)
    c = CoeffSpec.parse(sigma2="const:1")
    f = fpk_solve(c, 0.0, 0.5, TimeGrid(1.0, min_time_steps(c, 1.0, g, 0.5)), g)
    e = simulate_ensemble(c, 0.0, tg, 0.5, abel_weights(0.5, tg), 20_000, 11)
    assert kde_l1_distance(f, e.values[:, -1]) <= 0.05
    with pytest.raises(DomainError):
        kde_l1_distance(f, np.zeros(10))
