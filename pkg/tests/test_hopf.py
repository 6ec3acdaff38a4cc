import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colehopf.burgers import TransformPair
from colehopf.expr import parse
from colehopf.hopf import apply_transform, pole_mask
from colehopf.linsolve import Grid1D, LinearField


def field_from(grid, phi, dphi, times=None):
    return LinearField(grid, np.asarray(phi, float), np.asarray(dphi, float), times)


def test_exponential_gives_constant_log_derivative():
    grid = Grid1D(0, 1, 21)
    k, nu = 1.7, 0.1
    phi = np.exp(k * grid.x)
    out = apply_transform(TransformPair(parse("0"), parse("-2*nu")), field_from(grid, phi, k * phi), {"nu": nu})
    np.testing.assert_allclose(out.psi, -2 * nu * k, rtol=1e-15)
    assert out.masked_fraction == 0.0 and not out.degenerate


def test_variable_pair_is_applied_pointwise():
    grid = Grid1D(0, 1, 11)
    phi, dphi = 2 + np.sin(grid.x), np.cos(grid.x)
    out = apply_transform(TransformPair(parse("x^2"), parse("exp(x)")), field_from(grid, phi, dphi))
    np.testing.assert_allclose(out.psi, grid.x**2 + np.exp(grid.x) * dphi / phi, rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(1e-6, 1e6) | st.floats(-1e6, -1e-6), seed=st.integers(0, 2**31))
def test_gauge_invariance(lam, seed):
    rng = np.random.default_rng(seed)
    grid = Grid1D(0, 1, 17)
    phi = 1 + rng.random(17)
    dphi = rng.normal(size=17)
    pair = TransformPair(parse("sin(x)"), parse("1 + x"))
    a = apply_transform(pair, field_from(grid, phi, dphi)).psi
    b = apply_transform(pair, field_from(grid, phi, dphi).scaled(lam)).psi
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_transform_is_pointwise_local(seed):
    rng = np.random.default_rng(seed)
    grid = Grid1D(0, 1, 13)
    phi = rng.uniform(0.5, 2, 13) * rng.choice([-1, 1])
    dphi = rng.normal(size=13)
    perm = rng.permutation(13)
    pair = TransformPair(parse("0.3"), parse("-2"))
    a = apply_transform(pair, field_from(grid, phi, dphi)).psi
    b = apply_transform(pair, field_from(grid, phi[perm], dphi[perm])).psi
    np.testing.assert_array_equal(b, a[perm])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=5, max_size=30))
def test_positive_fields_are_never_masked(values):
    phi = np.array(values)
    assert not pole_mask(phi).any()


def test_zero_crossing_is_masked_and_rest_is_finite():
    for n in (21, 20):  # zero on a node, and zero between nodes
        grid = Grid1D(0, 1, n)
        phi = grid.x - 0.5
        out = apply_transform(TransformPair(parse("0"), parse("1")), field_from(grid, phi, np.ones(n)))
        assert out.mask.any()
        near = np.abs(grid.x - 0.5) <= grid.dx
        assert out.mask[near].any()
        assert np.all(np.isnan(out.psi[out.mask]))
        assert np.all(np.isfinite(out.psi[~out.mask]))
        assert 0 < out.masked_fraction < 0.2


def test_threshold_is_relative_per_time_level():
    grid = Grid1D(0, 1, 9)
    base = 1 + grid.x
    phi = np.stack([base, 1e-12 * base, 1e-30 * base])
    out = apply_transform(
        TransformPair(parse("0"), parse("1")),
        field_from(grid, phi, np.ones_like(phi) * 1e-30, np.array([0.0, 1.0, 2.0])),
    )
    assert not out.mask.any()
    mixed = np.array([1.0, 1e-9, 1.0, 0.5, 2.0])
    np.testing.assert_array_equal(pole_mask(mixed), [False, True, False, False, False])
    np.testing.assert_array_equal(pole_mask(mixed, eps_pole=1e-10), [False] * 5)


def test_all_zero_field_is_degenerate():
    grid = Grid1D(0, 1, 9)
    out = apply_transform(TransformPair(parse("0"), parse("1")), field_from(grid, np.zeros(9), np.zeros(9)))
    assert out.degenerate and out.masked_fraction == 1.0
    assert np.all(np.isnan(out.psi))


def test_time_levels_keep_their_shape():
    grid = Grid1D(0, 1, 9)
    phi = np.ones((3, 9))
    out = apply_transform(TransformPair(parse("1"), parse("2")), field_from(grid, phi, np.zeros((3, 9)), np.arange(3.0)))
    assert out.psi.shape == (3, 9)
    np.testing.assert_array_equal(out.times, [0, 1, 2])
    np.testing.assert_allclose(out.psi, 1.0)


def test_pair_must_be_evaluable():
    grid = Grid1D(0, 1, 9)
    with pytest.raises(ArithmeticError):
        apply_transform(TransformPair(parse("ln(x - 2)"), parse("1")), field_from(grid, np.ones(9), np.zeros(9)))
