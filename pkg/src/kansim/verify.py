"""Self-checks run by ``kansim verify``.

Each check returns a ``CheckResult``; a failing one names the first
offending instance. ``LutFault`` corrupts one stored byte so the harness can
be shown to catch a broken table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline_unit import BSplineLut, QuantParams, _lane_reads, build_lut, calibrate, evaluate_codes
from .hardware import ArrayConfig, PEKind
from .kan_gemm import KanLayerParams, activation_blocks, kan_layer_forward_quant
from .spline import UniformGrid, basis_matrix, basis_row
from .systolic import OpData, simulate_op

G_RANGE = range(2, 11)
P_RANGE = (1, 2, 3)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    metric: float | None = None


@dataclass(frozen=True)
class LutFault:
    """Add ``delta`` to one stored byte of the degree-``degree`` table."""

    degree: int = 3
    row: int = 100
    bank: int = 0
    delta: int = 16

    def apply(self, lut: BSplineLut) -> BSplineLut:
        if lut.degree != self.degree:
            return lut
        table = lut.table.copy()
        table[self.row, self.bank] = (int(table[self.row, self.bank]) + self.delta) % 256
        table.setflags(write=False)
        return BSplineLut(lut.degree, lut.lut_scale, table)


def make_lut(p: int, q: QuantParams, fault: LutFault | None = None) -> BSplineLut:
    lut = build_lut(p, q)
    return fault.apply(lut) if fault is not None else lut


def calibrated(G: int, P: int, lo: float = -1.0, hi: float = 1.0) -> tuple[UniformGrid, QuantParams]:
    return calibrate(UniformGrid.from_domain(lo, hi, G, P))


def lut_error(G: int, P: int, fault: LutFault | None = None) -> float:
    """Worst |dequantized block - float basis| over all 256 input codes, in value units."""
    grid, q = calibrated(G, P)
    lut = make_lut(P, q, fault)
    codes = np.arange(q.depth)
    values, k = evaluate_codes(codes, grid, lut, q)
    x = np.clip(q.dequantize(codes), *grid.domain)
    exact = basis_matrix(grid, x)
    lanes = k[:, None] - P + np.arange(P + 1)
    ref = np.take_along_axis(exact, lanes, axis=1)
    return float(np.abs(values / q.lut_scale - ref).max())


def check_oracle_equivalence(fault: LutFault | None = None) -> CheckResult:
    worst = 0.0
    worst_lsb = 0.0
    for P in P_RANGE:
        for G in G_RANGE:
            err = lut_error(G, P, fault)
            _, q = calibrated(G, P)
            bound = 2 / q.lut_scale
            worst = max(worst, err)
            worst_lsb = max(worst_lsb, err * q.lut_scale)
            if err > bound:
                return CheckResult(
                    "oracle-equivalence", False,
                    f"G={G} P={P}: max error {err:.5f} exceeds 2/lut_scale = {bound:.5f}", err,
                )
    return CheckResult(
        "oracle-equivalence", True,
        f"max LUT error {worst:.5f} ({worst_lsb:.3f} LSB) within the 2/lut_scale bound", worst,
    )


def check_partition_of_unity(n: int = 2000, seed: int = 0, fault: LutFault | None = None) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_f = 0.0
    for i in range(n):
        G = int(rng.integers(1, 16))
        P = int(rng.integers(1, 4))
        lo = float(rng.uniform(-10, 10))
        grid = UniformGrid.from_domain(lo, lo + float(rng.uniform(0.1, 20)), G, P)
        x = float(rng.uniform(*grid.domain))
        s = float(basis_row(grid, x).sum())
        worst_f = max(worst_f, abs(s - 1))
        if abs(s - 1) > 1e-9:
            return CheckResult("partition-of-unity", False, f"float basis sums to {s!r} at G={G} P={P} x={x}")
    for P in P_RANGE:
        for G in G_RANGE:
            grid, q = calibrated(G, P)
            values, _ = evaluate_codes(np.arange(q.depth), grid, make_lut(P, q, fault), q)
            sums = values.sum(axis=1) / q.lut_scale
            dev = float(np.abs(sums - 1).max())
            if dev > (P + 1) / q.lut_scale:
                a = int(np.abs(sums - 1).argmax())
                return CheckResult(
                    "partition-of-unity", False,
                    f"G={G} P={P} code {a}: quantized block sums to {sums[a]:.4f}",
                )
    return CheckResult("partition-of-unity", True, f"{n} float instances within 1e-9 (worst {worst_f:.1e})")


def check_symmetry(fault: LutFault | None = None) -> CheckResult:
    """Reading address a lane j must equal reading 255 - a lane P - j."""
    for P in P_RANGE:
        grid, q = calibrated(5, P)
        lut = make_lut(P, q, fault)
        addr = np.arange(q.depth)
        fwd = _lane_reads(lut, addr).astype(int)
        rev = _lane_reads(lut, q.depth - 1 - addr).astype(int)[:, ::-1]
        bad = np.argwhere(fwd != rev)
        if bad.size:
            a, j = bad[0]
            return CheckResult("symmetry", False, f"P={P} address {a} lane {j}: {fwd[a, j]} vs mirrored {rev[a, j]}")
    return CheckResult("symmetry", True, "mirrored reads agree for P = 1, 2, 3")


def random_kan_layer(rng, G: int, P: int, K: int, N: int) -> KanLayerParams:
    grid, q = calibrated(G, P)
    coeffs = rng.integers(-127, 128, size=(K * (G + P), N))
    return KanLayerParams(K, N, grid, coeffs, q)


def check_simulator(n: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    for i in range(n):
        G = int(rng.integers(2, 8))
        P = int(rng.integers(1, 4))
        K, N, T = (int(v) for v in rng.integers(1, 9, size=3))
        params = random_kan_layer(rng, G, P, K, N)
        x_q = rng.integers(0, 256, size=(T, K))
        R, C = (int(v) for v in rng.integers(1, 6, size=2))
        pe = PEKind.matched(G, P) if rng.random() < 0.5 else PEKind()
        config = ArrayConfig(R, C, pe)
        values, k = activation_blocks(x_q, params)
        data = OpData(params.coeffs.astype(np.int64), values=values, k=k)
        op = params.gemm_ops(T)[0]
        out = simulate_op(op, config, data, stepped=True).output
        ref = kan_layer_forward_quant(x_q, params)
        if not np.array_equal(out, ref):
            return CheckResult(
                "simulator-bit-exact", False,
                f"case {i}: G={G} P={P} K={K} N={N} T={T} on {config.describe()} differs from reference",
            )
    return CheckResult("simulator-bit-exact", True, f"{n} random layers bit-equal to the reference")


def run_all(fault: LutFault | None = None, quick: bool = False) -> list[CheckResult]:
    return [
        check_oracle_equivalence(fault),
        check_partition_of_unity(500 if quick else 2000, fault=fault),
        check_symmetry(fault),
        check_simulator(5 if quick else 20),
    ]
