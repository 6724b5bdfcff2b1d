"""Integer model of the tabulated B-spline unit: Compare, Align, half-LUT lookup.

Input codes are 8-bit and affine: ``x = x_scale * (x_q - x_zero)``. The Align
formula only works when one code step spans ``(G + 2P) / 255`` knot intervals,
so ``calibrate`` fixes ``x_scale = (G + 2P) * delta / 255`` and snaps ``t0``
onto the code lattice. With that calibration the address arithmetic is exact
and the only error left is LUT rounding (half an LSB of ``lut_scale``).

LUT layout: ``depth = 2**addr_bits`` rows, ``ceil((P+1)/2)`` byte banks. Row
``a``, bank ``j`` stores ``round(lut_scale * B(a / (depth - 1) + j))`` where
``B`` is the cardinal B-spline of degree P. Lanes past the support midpoint
are read at the inverted address ``~a``. For even P the middle bank folds
onto itself around the midpoint, so only its first ``depth / 2`` rows are
populated.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spline import UniformGrid, cardinal_bspline, cardinal_max

CODE_MAX = 255
INT8_MAX = 127


class LutOverflowError(ValueError):
    """A quantized B-spline sample does not fit one unsigned byte."""


def default_lut_scale(p: int) -> float:
    """Scale putting the B-spline peak at the int8 maximum (190.5 for P=3)."""
    return INT8_MAX / cardinal_max(p)


@dataclass(frozen=True)
class QuantParams:
    x_scale: float
    x_zero: int
    lut_scale: float
    addr_bits: int = 8

    def __post_init__(self) -> None:
        if not self.x_scale > 0:
            raise ValueError("x_scale must be positive")
        if not self.lut_scale > 0:
            raise ValueError("lut_scale must be positive")
        if not 0 <= self.x_zero <= CODE_MAX:
            raise ValueError(f"x_zero must be an 8-bit code, got {self.x_zero}")
        if not 1 <= self.addr_bits <= 16:
            raise ValueError(f"addr_bits out of range: {self.addr_bits}")

    @property
    def depth(self) -> int:
        return 1 << self.addr_bits

    def dequantize(self, x_q):
        return self.x_scale * (np.asarray(x_q, dtype=float) - self.x_zero)

    def quantize(self, x):
        q = np.floor(np.asarray(x, dtype=float) / self.x_scale + 0.5) + self.x_zero
        return np.clip(q, 0, CODE_MAX).astype(np.int64)


def knot_code(grid: UniformGrid, q: QuantParams) -> int:
    """The quantized first knot ``t_q0``; the grid must sit on the code lattice."""
    exact = grid.t0 / q.x_scale + q.x_zero
    t_q0 = round(exact)
    if abs(exact - t_q0) > 1e-6:
        raise ValueError(f"t0={grid.t0} is not on the input code lattice (code {exact:.6f})")
    return int(t_q0)


def check_calibration(grid: UniformGrid, q: QuantParams) -> None:
    want = grid.n_intervals * grid.delta / CODE_MAX
    if not math.isclose(q.x_scale, want, rel_tol=1e-9):
        raise ValueError(
            f"x_scale={q.x_scale} does not match (G+2P)*delta/255={want}; use calibrate()"
        )
    t_q0 = knot_code(grid, q)
    # the whole input domain must be reachable with 8-bit codes
    lo = t_q0 + CODE_MAX * grid.P / grid.n_intervals
    hi = t_q0 + CODE_MAX * (grid.G + grid.P) / grid.n_intervals
    if lo < -1e-9 or hi > CODE_MAX + 1e-9:
        raise ValueError(f"input domain maps to codes [{lo:.2f}, {hi:.2f}], outside [0, 255]")


def calibrate(
    grid: UniformGrid, lut_scale: float | None = None, addr_bits: int = 8
) -> tuple[UniformGrid, QuantParams]:
    """Min/max calibration of the input codes to the extended knot range.

    Returns the grid with ``t0`` shifted by less than half a code so that it is
    exactly representable, together with the matching quantization.
    """
    x_scale = grid.n_intervals * grid.delta / CODE_MAX
    x_zero = int(np.clip(round(-grid.t0 / x_scale), 0, CODE_MAX))
    t_q0 = round(grid.t0 / x_scale) + x_zero
    snapped = UniformGrid(x_scale * (t_q0 - x_zero), grid.delta, grid.G, grid.P)
    if lut_scale is None:
        lut_scale = default_lut_scale(grid.P)
    q = QuantParams(x_scale=x_scale, x_zero=x_zero, lut_scale=lut_scale, addr_bits=addr_bits)
    check_calibration(snapped, q)
    return snapped, q


@dataclass(frozen=True, eq=False)
class BSplineLut:
    degree: int
    lut_scale: float
    table: np.ndarray  # (depth, n_banks) uint8

    @property
    def depth(self) -> int:
        return self.table.shape[0]

    @property
    def n_banks(self) -> int:
        return self.table.shape[1]

    @property
    def folded_bank(self) -> int | None:
        return self.degree // 2 if self.degree % 2 == 0 else None

    @property
    def stored_bytes(self) -> int:
        n = self.depth * self.n_banks
        if self.folded_bank is not None:
            n -= self.depth // 2
        return n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BSplineLut):
            return NotImplemented
        return (
            self.degree == other.degree
            and self.lut_scale == other.lut_scale
            and np.array_equal(self.table, other.table)
        )

    def sample_point(self, row: int, bank: int) -> float:
        return row / (self.depth - 1) + bank


def _quantize_byte(value: float, scale: float) -> int:
    return int(math.floor(value * scale + 0.5))


def build_lut(p: int, q: QuantParams) -> BSplineLut:
    if not 1 <= p <= 3:
        raise ValueError(f"LUT degree must be in [1, 3], got {p}")
    peak = cardinal_max(p) * q.lut_scale
    if _quantize_byte(cardinal_max(p), q.lut_scale) > CODE_MAX:
        raise LutOverflowError(
            f"lut_scale={q.lut_scale} puts the B-spline peak at {peak:.1f} > 255"
        )
    depth = q.depth
    n_banks = (p + 2) // 2
    folded = p // 2 if p % 2 == 0 else None
    table = np.zeros((depth, n_banks), dtype=np.uint8)
    for bank in range(n_banks):
        rows = depth // 2 if bank == folded else depth
        for a in range(rows):
            u = a / (depth - 1) + bank
            table[a, bank] = _quantize_byte(cardinal_bspline(p, u), q.lut_scale)
    table.setflags(write=False)
    return BSplineLut(degree=p, lut_scale=q.lut_scale, table=table)


@dataclass(frozen=True)
class SparseActivationBlock:
    """``P + 1`` non-zero basis bytes in ascending basis order, plus interval k."""

    values: tuple[int, ...]
    k: int
    P: int

    @property
    def select(self) -> int:
        return self.k - self.P

    def dequantized(self, lut_scale: float) -> np.ndarray:
        return np.asarray(self.values, dtype=float) / lut_scale


def compare(x_q, grid: UniformGrid, q: QuantParams):
    """Interval index from the input code, clamped to ``[P, G + P - 1]``."""
    t_q0 = knot_code(grid, q)
    k = (grid.n_intervals * (np.asarray(x_q, dtype=np.int64) - t_q0)) // CODE_MAX
    k = np.clip(k, grid.P, grid.G + grid.P - 1)
    return int(k) if k.ndim == 0 else k


def align(x_q, k, grid: UniformGrid, q: QuantParams):
    """LUT address ``clip((G+2P)(x_q - t_q0) - 255 k, 0, 255)`` (8-bit case)."""
    t_q0 = knot_code(grid, q)
    num = grid.n_intervals * (np.asarray(x_q, dtype=np.int64) - t_q0) - CODE_MAX * np.asarray(
        k, dtype=np.int64
    )
    last = q.depth - 1
    if last != CODE_MAX:
        # other address widths rescale the 8-bit fraction, rounding to nearest
        num = (num * last + CODE_MAX // 2) // CODE_MAX
    addr = np.clip(num, 0, last)
    return int(addr) if addr.ndim == 0 else addr


def _lane_reads(lut: BSplineLut, addr: np.ndarray) -> np.ndarray:
    P = lut.degree
    last = lut.depth - 1
    inv = last - addr  # bitwise NOT over addr_bits
    out = np.empty(addr.shape + (P + 1,), dtype=np.uint8)
    for j in range(P + 1):
        offset = P - j  # lane j holds B(x_a + offset)
        if offset == lut.folded_bank:
            row = np.where(addr < lut.depth // 2, addr, inv)
            out[..., j] = lut.table[row, offset]
        elif 2 * offset < P + 1:
            out[..., j] = lut.table[addr, offset]
        else:
            out[..., j] = lut.table[inv, P - offset]
    return out


def lookup(lut: BSplineLut, x_addr: int) -> tuple[int, ...]:
    if not 0 <= x_addr < lut.depth:
        raise IndexError(f"address {x_addr} outside [0, {lut.depth - 1}]")
    return tuple(int(v) for v in _lane_reads(lut, np.asarray(x_addr)))


def evaluate(x_q: int, grid: UniformGrid, lut: BSplineLut, q: QuantParams) -> SparseActivationBlock:
    if lut.degree != grid.P:
        raise ValueError(f"LUT degree {lut.degree} does not match grid degree {grid.P}")
    k = compare(x_q, grid, q)
    return SparseActivationBlock(values=lookup(lut, align(x_q, k, grid, q)), k=k, P=grid.P)


def evaluate_codes(x_q, grid: UniformGrid, lut: BSplineLut, q: QuantParams):
    """Vectorized ``evaluate``: returns ``(values[..., P+1], k[...])``."""
    if lut.degree != grid.P:
        raise ValueError(f"LUT degree {lut.degree} does not match grid degree {grid.P}")
    x_q = np.asarray(x_q, dtype=np.int64)
    k = np.asarray(compare(x_q, grid, q))
    addr = np.asarray(align(x_q, k, grid, q))
    return _lane_reads(lut, addr), k


_HEADER = re.compile(r"#\s*kansim-lut\s+v1\s+degree=(\d+)\s+depth=(\d+)\s+banks=(\d+)\s+lut_scale=(\S+)")


def dump_lut(lut: BSplineLut) -> str:
    """Hex listing: a header line, then ``AA: b0 b1 ...`` per row."""
    width = max(2, (lut.depth.bit_length() + 2) // 4)
    lines = [
        f"# kansim-lut v1 degree={lut.degree} depth={lut.depth} banks={lut.n_banks} "
        f"lut_scale={lut.lut_scale!r}"
    ]
    for a in range(lut.depth):
        data = " ".join(f"{b:02x}" for b in lut.table[a])
        lines.append(f"{a:0{width}x}: {data}")
    return "\n".join(lines) + "\n"


def load_lut(text: str | Path) -> BSplineLut:
    if isinstance(text, Path):
        text = text.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    m = _HEADER.match(lines[0]) if lines else None
    if m is None:
        raise ValueError("missing '# kansim-lut v1' header")
    degree, depth, banks = int(m[1]), int(m[2]), int(m[3])
    scale = float(m[4])
    table = np.zeros((depth, banks), dtype=np.uint8)
    seen = set()
    for ln in lines[1:]:
        addr_txt, _, data = ln.partition(":")
        a = int(addr_txt, 16)
        row = [int(b, 16) for b in data.split()]
        if len(row) != banks or not 0 <= a < depth:
            raise ValueError(f"malformed LUT row: {ln!r}")
        table[a] = row
        seen.add(a)
    if len(seen) != depth:
        raise ValueError(f"LUT listing has {len(seen)} rows, expected {depth}")
    table.setflags(write=False)
    return BSplineLut(degree=degree, lut_scale=scale, table=table)
