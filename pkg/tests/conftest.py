"""Independent oracles shared by the tests.

These do not call into the package: closed-form cardinal B-splines, a basis
row built from them, and a scalar triple-loop KAN layer.
"""

import math

import numpy as np
import pytest


def cardinal_closed_form(p: int, u: float) -> float:
    """Piecewise-polynomial cardinal B-spline on knots 0..p+1."""
    if u < 0 or u >= p + 1:
        return 0.0
    if p == 1:
        return u if u < 1 else 2 - u
    if p == 2:
        if u < 1:
            return u * u / 2
        if u < 2:
            return (-2 * u * u + 6 * u - 3) / 2
        return (3 - u) ** 2 / 2
    if p == 3:
        if u < 1:
            return u**3 / 6
        if u < 2:
            return (-3 * u**3 + 12 * u**2 - 12 * u + 4) / 6
        if u < 3:
            return (3 * u**3 - 24 * u**2 + 60 * u - 44) / 6
        return (4 - u) ** 3 / 6
    raise ValueError(p)


def oracle_basis(t0: float, delta: float, G: int, P: int, x: float) -> np.ndarray:
    """All G+P basis values at x, with the right domain edge folded into the last interval."""
    u = (x - t0) / delta
    hi = G + P
    if u >= hi:
        # evaluate the left limit at the right edge of the domain
        u = hi - 1e-12
    return np.array([cardinal_closed_form(P, u - i) for i in range(G + P)])


def oracle_kan_quant(x_q, coeffs, blocks_fn, G, P):
    """Scalar loops over (row, output, feature, lane) with Python ints."""
    BS, K = x_q.shape
    N = coeffs.shape[1]
    out = np.zeros((BS, N), dtype=object)
    for b in range(BS):
        for f in range(K):
            values, k = blocks_fn(int(x_q[b, f]))
            for n in range(N):
                s = 0
                for j, v in enumerate(values):
                    s += int(coeffs[f * (G + P) + k - P + j, n]) * int(v)
                out[b, n] += s
    return out.astype(np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def isclose(a, b, tol=1e-12):
    return math.isclose(a, b, abs_tol=tol)
