from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracgronwall.errors import DomainError, GridMismatchError
from fracgronwall.families import Family, parse_family
from fracgronwall.grids import SampledFn, TimeGrid, check_alpha, same_grid


def test_time_grid_nodes_and_spacing():
    g = TimeGrid(2.0, 8)
    assert len(g) == 9
    assert g.h == 0.25
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert g.refine().n_steps == 16
    assert TimeGrid(1.0, 1).nodes.tolist() == [0.0, 1.0]


@pytest.mark.parametrize("t_end, n", [(0.0, 4), (-1.0, 4), (math.inf, 4), (1.0, 0), (1.0, 2.5)])
def test_time_grid_validation(t_end, n):
    with pytest.raises(DomainError):
        TimeGrid(t_end, n)


def test_alpha_range():
    assert check_alpha(0.5) == 0.5
    assert check_alpha(1.0, allow_one=True) == 1.0
    for bad in (0.0, 1.0, -0.2, math.nan):
        with pytest.raises(DomainError):
            check_alpha(bad)


def test_sampled_fn_validation_and_monotonicity():
    g = TimeGrid(1.0, 4)
    with pytest.raises(GridMismatchError):
        SampledFn(g, np.ones(3))
    with pytest.raises(DomainError):
        SampledFn(g, [0, 1, np.inf, 1, 1])
    f = SampledFn.from_callable(g, lambda t: t**2)
    assert f.is_nondecreasing() and f.is_nonnegative()
    assert not SampledFn.from_callable(g, lambda t: -t).is_nondecreasing()
    assert SampledFn.constant(g, 3.0).is_nondecreasing()
    with pytest.raises(GridMismatchError):
        same_grid(g, TimeGrid(1.0, 5))


@pytest.mark.parametrize(
    "text, x, value, deriv",
    [
        ("zero", 2.0, 0.0, 0.0),
        ("const:1.5", 2.0, 1.5, 0.0),
        ("constant:1.5", 2.0, 1.5, 0.0),
        ("linear:-2", 3.0, -6.0, -2.0),
        ("affine:1,0.5", 2.0, 2.0, 0.5),
        ("sin:2", 0.0, 0.0, 2.0),
        ("sinusoidal:2", math.pi / 2, 2.0, 0.0),
    ],
)
def test_family_values(text, x, value, deriv):
    f = parse_family(text)
    assert float(f(x)) == pytest.approx(value, abs=1e-15)
    assert float(f.deriv(x)) == pytest.approx(deriv, abs=1e-15)


@pytest.mark.parametrize("text", ["exp:1", "const", "affine:1", "const:nan", "const:x"])
def test_family_parse_errors(text):
    with pytest.raises(DomainError):
        parse_family(text)


@given(
    st.sampled_from(["const", "linear", "affine", "sin"]),
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.floats(-100, 100),
    st.floats(-100, 100),
)
def test_declared_constants_hold(name, params, x, y):
    arity = {"const": 1, "linear": 1, "affine": 2, "sin": 1}[name]
    f = Family(name, tuple(params[:arity]))
    assert abs(f(x) - f(y)) <= f.lipschitz * abs(x - y) * (1 + 1e-12) + 1e-12
    assert f(x) ** 2 <= f.growth_sq * (1 + x * x) * (1 + 1e-12) + 1e-12


def test_family_spec_round_trip():
    for text in ("zero", "const:0.1", "affine:1,-0.30000000000000004"):
        f = parse_family(text)
        assert parse_family(f.spec()) == f
