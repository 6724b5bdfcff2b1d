import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cardinal_closed_form, oracle_basis
from kansim.spline import (
    UniformGrid,
    basis_matrix,
    basis_row,
    bspline_degree0,
    bspline_on_knots,
    bspline_recursive,
    cardinal_bspline,
    cardinal_max,
    interval_index,
    interval_indices,
)

UNIT = UniformGrid(t0=0.0, delta=1.0, G=3, P=3)
CENTRED = UniformGrid(t0=-3.0, delta=1.0, G=3, P=3)

grids = st.builds(
    UniformGrid,
    t0=st.floats(-50, 50),
    delta=st.floats(0.01, 10),
    G=st.integers(1, 12),
    P=st.integers(1, 3),
)


def test_grid_layout():
    assert CENTRED.n_intervals == 9
    assert CENTRED.n_basis == 6
    assert CENTRED.domain == (0.0, 3.0)
    assert CENTRED.knots()[[0, -1]].tolist() == [-3.0, 6.0]


@pytest.mark.parametrize(
    "kwargs",
    [dict(delta=0.0, G=3, P=3), dict(delta=1.0, G=0, P=3), dict(delta=1.0, G=3, P=4), dict(delta=1.0, G=3, P=0)],
)
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        UniformGrid(t0=0.0, **kwargs)


def test_from_domain_hits_the_edges():
    g = UniformGrid.from_domain(-1.0, 1.0, G=5, P=3)
    assert g.domain == pytest.approx((-1.0, 1.0))


@pytest.mark.parametrize("i, x, want", [(3, 3.0, 1.0), (3, 4.0, 0.0), (0, -0.5, 0.0)])
def test_degree0(i, x, want):
    assert bspline_degree0(UNIT, i, x) == want


def test_degree0_index_checked():
    with pytest.raises(IndexError):
        bspline_degree0(UNIT, UNIT.n_intervals, 0.5)


@pytest.mark.parametrize("x, want", [(2.0, 2 / 3), (1.0, 1 / 6), (4.5, 0.0)])
def test_recursive_values(x, want):
    assert bspline_recursive(UNIT, 0, 3, x) == pytest.approx(want, abs=1e-15)


def test_recursive_preconditions():
    with pytest.raises(ValueError):
        bspline_recursive(UNIT, 0, 4, 1.0)
    with pytest.raises(IndexError):
        bspline_recursive(UNIT, 6, 3, 1.0)


def test_recursion_total_on_repeated_knots():
    # clamped knot vector: zero-width spans must not divide by zero
    knots = [0, 0, 0, 0, 1, 2, 2, 2, 2]
    xs = np.linspace(0, 1.999, 40)
    sums = [sum(bspline_on_knots(knots, i, 3, x) for i in range(5)) for x in xs]
    assert np.allclose(sums, 1.0)


@pytest.mark.parametrize("p, u, want", [(3, 2.0, 2 / 3), (1, 1.0, 1.0), (3, 0.0, 0.0)])
def test_cardinal_values(p, u, want):
    assert cardinal_bspline(p, u) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cardinal_matches_closed_form(p):
    for u in np.linspace(-0.5, p + 1.5, 301):
        assert cardinal_bspline(p, u) == pytest.approx(cardinal_closed_form(p, u), abs=1e-12)


@pytest.mark.parametrize("p, peak", [(1, 1.0), (2, 0.75), (3, 2 / 3)])
def test_cardinal_peak(p, peak):
    assert cardinal_max(p) == pytest.approx(peak)


@pytest.mark.parametrize("p", [1, 2, 3])
@given(u=st.floats(0, 4))
def test_cardinal_symmetry(p, u):
    u = min(u, p + 1)
    assert cardinal_bspline(p, u) == pytest.approx(cardinal_bspline(p, p + 1 - u), abs=1e-12)


def test_basis_row_at_left_edge():
    # exact oracle values at the knot x = 0 of the t0 = -3 grid
    row = basis_row(CENTRED, 0.0)
    assert row == pytest.approx([1 / 6, 2 / 3, 1 / 6, 0, 0, 0], abs=1e-15)


def test_basis_row_one_past_left_edge():
    row = basis_row(CENTRED, 1.0)
    assert row == pytest.approx([0, 1 / 6, 2 / 3, 1 / 6, 0, 0], abs=1e-15)


def test_basis_row_rejects_out_of_domain():
    with pytest.raises(ValueError):
        basis_row(CENTRED, -0.5)
    with pytest.raises(ValueError):
        basis_row(CENTRED, 3.5)


@settings(max_examples=300)
@given(g=grids, frac=st.floats(0, 1))
def test_basis_row_properties(g, frac):
    lo, hi = g.domain
    x = lo + frac * (hi - lo)
    row = basis_row(g, x)
    assert abs(row.sum() - 1) < 1e-9
    assert (row >= -1e-15).all()
    nz = np.flatnonzero(row > 1e-12)
    assert len(nz) <= g.P + 1
    k = interval_index(g, x)
    assert set(nz) <= set(range(k - g.P, k + 1))


@settings(max_examples=200)
@given(g=grids, frac=st.floats(0, 1))
def test_basis_row_matches_closed_form(g, frac):
    lo, hi = g.domain
    x = lo + frac * (hi - lo)
    assert basis_row(g, x) == pytest.approx(oracle_basis(g.t0, g.delta, g.G, g.P, x), abs=1e-9)


@settings(max_examples=200)
@given(g=grids, frac=st.floats(0, 1), i=st.integers(0, 20))
def test_cardinal_reduction(g, frac, i):
    i = i % g.n_basis
    lo, hi = g.domain
    x = lo + frac * (hi - lo)
    u = (x - g.t0) / g.delta - i
    assert bspline_recursive(g, i, g.P, x) == pytest.approx(cardinal_bspline(g.P, u), abs=1e-9)


@settings(max_examples=200)
@given(
    g=grids,
    frac=st.floats(0.001, 0.999),
    alpha=st.floats(0.1, 10) | st.floats(-10, -0.1),
    beta=st.floats(-100, 100),
)
def test_translation_scaling_invariance(g, frac, alpha, beta):
    lo, hi = g.domain
    x = lo + frac * (hi - lo)
    h = g.transformed(alpha, beta)
    row = basis_row(g, x)
    moved = basis_row(h, alpha * x + beta)
    # a reflection reverses basis order
    if alpha < 0:
        moved = moved[::-1]
    assert moved == pytest.approx(row, abs=1e-9)


@pytest.mark.parametrize("x, k", [(0.5, 3), (-10.0, 3), (10.0, 5), (0.0, 3), (3.0, 5), (2.0, 5), (1.999, 4)])
def test_interval_index(x, k):
    assert interval_index(CENTRED, x) == k


def test_interval_index_snaps_rounding_noise():
    g = UniformGrid.from_domain(-1.0, 1.0, G=5, P=3)
    for i in range(g.P, g.G + g.P):
        x = g.t0 + i * g.delta
        assert interval_index(g, x) == i
        # one ulp below a knot is rounding noise, not the previous interval
        assert interval_index(g, np.nextafter(x, -np.inf)) == i


def test_interval_indices_vectorized():
    xs = np.array([-10, 0.5, 1.5, 2.5, 10])
    assert interval_indices(CENTRED, xs).tolist() == [3, 3, 4, 5, 5]


@settings(max_examples=100)
@given(g=grids, xs=st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_basis_matrix_agrees_with_recursion(g, xs):
    lo, hi = g.domain
    pts = lo + np.array(xs) * (hi - lo)
    mat = basis_matrix(g, pts)
    for x, row in zip(pts, mat):
        assert row == pytest.approx(basis_row(g, x), abs=1e-9)


def test_basis_matrix_clips():
    m = basis_matrix(CENTRED, np.array([-5.0, 7.0]))
    assert m[0] == pytest.approx(basis_row(CENTRED, 0.0))
    assert m[1] == pytest.approx(basis_row(CENTRED, 3.0))
    assert math.isclose(m.sum(axis=1)[1], 1.0)
