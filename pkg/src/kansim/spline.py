"""Floating-point B-spline reference on uniform knot sequences.

Everything quantized in this package is checked against these functions, so
they favour clarity over speed. ``basis_matrix`` is the one vectorized entry
point, used by the float KAN forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 3

# relative slack used when snapping (x - t0) / delta onto an integer knot
_KNOT_SNAP = 1e-9


@dataclass(frozen=True)
class UniformGrid:
    """Extended uniform knot sequence ``t0 + i * delta`` for ``i = 0 .. G + 2P``.

    The layer's input domain is ``[knot(P), knot(G + P)]`` and the basis has
    ``G + P`` functions, the i-th supported on ``[knot(i), knot(i + P + 1))``.
    """

    t0: float
    delta: float
    G: int
    P: int

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError(f"knot spacing must be positive, got {self.delta}")
        if self.G < 1:
            raise ValueError(f"grid size G must be >= 1, got {self.G}")
        if not 1 <= self.P <= MAX_DEGREE:
            raise ValueError(f"spline degree P must be in [1, {MAX_DEGREE}], got {self.P}")

    @classmethod
    def from_domain(cls, lo: float, hi: float, G: int, P: int) -> "UniformGrid":
        """Grid whose input domain is exactly ``[lo, hi]``."""
        if not hi > lo:
            raise ValueError(f"empty domain [{lo}, {hi}]")
        delta = (hi - lo) / G
        return cls(t0=lo - P * delta, delta=delta, G=G, P=P)

    @property
    def n_intervals(self) -> int:
        return self.G + 2 * self.P

    @property
    def n_basis(self) -> int:
        return self.G + self.P

    @property
    def domain(self) -> tuple[float, float]:
        return self.knot(self.P), self.knot(self.G + self.P)

    def knot(self, i: int) -> float:
        return self.t0 + i * self.delta

    def knots(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_intervals + 1)

    def transformed(self, alpha: float, beta: float) -> "UniformGrid":
        """Grid with knots ``alpha * t + beta`` (``alpha`` may be negative)."""
        if alpha == 0:
            raise ValueError("alpha must be non-zero")
        if alpha > 0:
            return UniformGrid(alpha * self.t0 + beta, alpha * self.delta, self.G, self.P)
        # a reflected knot sequence is re-sorted so it still increases
        last = alpha * self.knot(self.n_intervals) + beta
        return UniformGrid(last, -alpha * self.delta, self.G, self.P)


def _knot_value(t: np.ndarray | UniformGrid, i: int) -> float:
    if isinstance(t, UniformGrid):
        return t.knot(i)
    return float(t[i])


def bspline_degree0(grid: UniformGrid, i: int, x: float) -> float:
    if not 0 <= i <= grid.n_intervals - 1:
        raise IndexError(f"degree-0 index {i} outside [0, {grid.n_intervals - 1}]")
    return 1.0 if grid.knot(i) <= x < grid.knot(i + 1) else 0.0


def _cox_de_boor(t, i: int, p: int, x: float) -> float:
    if p == 0:
        return 1.0 if _knot_value(t, i) <= x < _knot_value(t, i + 1) else 0.0
    ti = _knot_value(t, i)
    tip = _knot_value(t, i + p)
    ti1 = _knot_value(t, i + 1)
    tip1 = _knot_value(t, i + p + 1)
    left = 0.0
    if tip != ti:
        left = (x - ti) / (tip - ti) * _cox_de_boor(t, i, p - 1, x)
    right = 0.0
    if tip1 != ti1:
        right = (tip1 - x) / (tip1 - ti1) * _cox_de_boor(t, i + 1, p - 1, x)
    return left + right


def bspline_recursive(grid: UniformGrid, i: int, p: int, x: float) -> float:
    """B_{i,p}(x) by plain Cox-de Boor recursion on the grid's knots."""
    if not 0 <= p <= grid.P:
        raise ValueError(f"degree {p} outside [0, {grid.P}]")
    if i < 0 or i + p + 1 > grid.n_intervals:
        raise IndexError(f"basis index {i} at degree {p} runs past the knot sequence")
    return _cox_de_boor(grid, i, p, x)


def bspline_on_knots(knots, i: int, p: int, x: float) -> float:
    """Cox-de Boor on an arbitrary non-decreasing knot vector.

    Zero-width spans contribute zero, so repeated knots are fine.
    """
    knots = np.asarray(knots, dtype=float)
    if i < 0 or i + p + 1 >= len(knots):
        raise IndexError(f"basis index {i} at degree {p} runs past {len(knots)} knots")
    return _cox_de_boor(knots, i, p, x)


def cardinal_bspline(p: int, u: float) -> float:
    """B_{0,p} on the integer knots 0 .. p+1."""
    if not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {p}")
    if u < 0 or u >= p + 1:
        return 0.0
    return _cox_de_boor(np.arange(p + 2, dtype=float), 0, p, u)


def cardinal_max(p: int) -> float:
    """Peak of B_{0,p}, reached at the support midpoint."""
    return cardinal_bspline(p, (p + 1) / 2)


def _check_in_domain(grid: UniformGrid, x: float) -> None:
    lo, hi = grid.domain
    # a few ulps of slack so dequantized edge codes are accepted
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if x < lo - tol or x > hi + tol:
        raise ValueError(f"x={x} outside input domain [{lo}, {hi}]; clip before calling")


def basis_row(grid: UniformGrid, x: float) -> np.ndarray:
    """All ``G + P`` degree-P basis values at an in-domain ``x``."""
    _check_in_domain(grid, x)
    return np.array([_cox_de_boor(grid, i, grid.P, x) for i in range(grid.n_basis)])


def clip_to_domain(grid: UniformGrid, x):
    lo, hi = grid.domain
    return np.clip(x, lo, hi)


def _scaled_position(grid: UniformGrid, x):
    u = (np.asarray(x, dtype=float) - grid.t0) / grid.delta
    nearest = np.rint(u)
    return np.where(np.abs(u - nearest) <= _KNOT_SNAP * np.maximum(1.0, np.abs(u)), nearest, u)


def interval_index(grid: UniformGrid, x: float) -> int:
    """Index k with knot(k) <= x < knot(k+1) after clamping into the domain.

    Values at or past the right edge land in the last interval ``G + P - 1``.
    """
    if math.isnan(x):
        raise ValueError("x is NaN")
    u = _scaled_position(grid, x)
    return int(np.clip(np.floor(u), grid.P, grid.G + grid.P - 1))


def interval_indices(grid: UniformGrid, xs) -> np.ndarray:
    u = _scaled_position(grid, xs)
    return np.clip(np.floor(u), grid.P, grid.G + grid.P - 1).astype(np.int64)


def basis_matrix(grid: UniformGrid, xs) -> np.ndarray:
    """Vectorized ``basis_row`` over an array of inputs, clipped into the domain.

    Returns shape ``xs.shape + (G + P,)``. Uses the triangular Cox-de Boor
    scheme on the active interval, so it never evaluates outside local support.
    """
    xs = clip_to_domain(grid, np.asarray(xs, dtype=float))
    flat = xs.reshape(-1)
    k = interval_indices(grid, flat)
    P = grid.P
    # local[:, j] holds B_{k-p+j, p}; start with B_{k,0} = 1
    local = np.zeros((flat.size, P + 1))
    local[:, 0] = 1.0
    for p in range(1, P + 1):
        nxt = np.zeros_like(local)
        for j in range(p + 1):
            i = k - p + j
            if j > 0:
                t_i = grid.t0 + i * grid.delta
                w = (flat - t_i) / (p * grid.delta)
                nxt[:, j] += w * local[:, j - 1]
            if j < p:
                t_end = grid.t0 + (i + p + 1) * grid.delta
                w = (t_end - flat) / (p * grid.delta)
                nxt[:, j] += w * local[:, j]
        local = nxt
    out = np.zeros((flat.size, grid.n_basis))
    rows = np.arange(flat.size)
    for j in range(P + 1):
        out[rows, k - P + j] = local[:, j]
    return out.reshape(xs.shape + (grid.n_basis,))
