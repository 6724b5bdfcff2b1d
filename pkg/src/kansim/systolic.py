"""Weight-stationary systolic array: cycle-stepped functional model and per-tile accounting.

Dataflow per tile: weights are preloaded, activation row ``b`` enters PE row
``i`` (counted from the first mapped row) at cycle ``b + i`` and moves one
column right per cycle, carrying its lane mask and, on N:M arrays, the
interval select. Partial sums move one row down per cycle and leave the bottom
row into the accumulator memory, which adds the results of successive row
tiles.

Utilization counts MAC slots only while activations stream: every PE, mapped
or not, is issued ``T * lanes`` slots per tile. Fill/drain bubbles and preload
are reported separately and do not enter the ratio.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .bspline_unit import SparseActivationBlock
from .hardware import ArrayConfig
from .kan_gemm import (
    INT32_MAX,
    INT32_MIN,
    AccumulatorOverflow,
    DenseLayerParams,
    activation_blocks,
    check_int32,
    layer_forward_quant,
    relu_codes,
    scatter_blocks,
    window_mask,
)
from .tiling import (
    GemmOp,
    TileSchedule,
    check_compatible,
    predict_compute_cycles,
    predict_preload_cycles,
    tile_gemm,
)
from .workloads import Workload, WorkloadParams


@dataclass
class TileStats:
    index: int
    pe_rows: int
    pe_cols: int
    preload_cycles: int
    compute_cycles: int
    useful_macs: int
    issued_mac_slots: int


@dataclass
class SimStats:
    total_cycles: int = 0
    preload_cycles: int = 0
    compute_cycles: int = 0
    useful_macs: int = 0
    issued_mac_slots: int = 0
    bubble_slots: int = 0
    per_tile: list[TileStats] = field(default_factory=list)

    @property
    def utilization(self) -> float:
        if self.issued_mac_slots == 0:
            return 0.0
        return self.useful_macs / self.issued_mac_slots

    def __iadd__(self, other: "SimStats") -> "SimStats":
        self.total_cycles += other.total_cycles
        self.preload_cycles += other.preload_cycles
        self.compute_cycles += other.compute_cycles
        self.useful_macs += other.useful_macs
        self.issued_mac_slots += other.issued_mac_slots
        self.bubble_slots += other.bubble_slots
        self.per_tile.extend(other.per_tile)
        return self

    def __add__(self, other: "SimStats") -> "SimStats":
        out = replace(self, per_tile=list(self.per_tile))
        out += other
        return out

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("per_tile")
        d["utilization"] = self.utilization
        return d


class PEStep(NamedTuple):
    psum: int
    issued: int
    useful: int


def _check_psum(v: int) -> int:
    if not INT32_MIN <= v <= INT32_MAX:
        raise AccumulatorOverflow(f"partial sum {v} does not fit int32")
    return v


def scalar_pe_step(psum_in: int, activation: int, weight: int, *, valid: bool = True,
                   structural: bool | None = None) -> PEStep:
    """One MAC. Without an explicit lane mask a zero activation counts as a structural zero."""
    psum = _check_psum(int(psum_in) + int(activation) * int(weight))
    nonzero = activation != 0 if structural is None else structural
    return PEStep(psum, 1, int(bool(valid and nonzero)))


def nm_pe_step(psum_in: int, block: SparseActivationBlock, weights: Sequence[int], *,
               valid: bool = True) -> PEStep:
    """N:M vector MAC: the select index muxes N of the M resident weights."""
    n = len(block.values)
    sel = block.select
    if not 0 <= sel <= len(weights) - n:
        raise IndexError(f"select {sel} outside [0, {len(weights) - n}]")
    acc = int(psum_in)
    for j, v in enumerate(block.values):
        acc += int(weights[sel + j]) * int(v)
    return PEStep(_check_psum(acc), n, n if valid else 0)


def dense_block(values: Sequence[int]) -> SparseActivationBlock:
    """Dense activations packed into one N-lane block with select fixed at 0."""
    return SparseActivationBlock(values=tuple(int(v) for v in values), k=0, P=0)


class SystolicArray:
    """R x C array of scalar or N:M PEs, stepped one clock at a time."""

    def __init__(self, config: ArrayConfig):
        self.config = config
        R, C = config.rows, config.cols
        self.weights = np.zeros((R, C, config.pe.m), dtype=np.int64)
        self.valid = np.zeros((R, C), dtype=bool)
        self.mapped = (0, 0)

    def preload(self, weights: np.ndarray) -> int:
        """Load a ``(r, c)`` or ``(r, c, m)`` weight tile; returns the preload cycles."""
        w = np.asarray(weights, dtype=np.int64)
        if w.ndim == 2:
            w = w[..., None]
        r, c, m = w.shape
        R, C = self.config.rows, self.config.cols
        if r > R or c > C or m > self.config.pe.m:
            raise ValueError(f"tile {r}x{c}x{m} does not fit a {R}x{C} array of {self.config.pe.label} PEs")
        self.weights[:] = 0
        self.valid[:] = False
        # bottom-aligned: the last mapped row feeds the accumulators
        self.weights[R - r :, :c, :m] = w
        self.valid[R - r :, :c] = True
        self.mapped = (r, c)
        return self.config.preload_cycles(r)

    def run_tile(self, acts: np.ndarray, structural: np.ndarray | None = None,
                 select: np.ndarray | None = None) -> tuple[np.ndarray, int, int]:
        """Stream ``acts`` (``(T, r)`` or ``(T, r, lanes)``) through the loaded tile.

        Returns ``(outputs (T, c), compute_cycles, useful_macs)``.
        """
        R, C = self.config.rows, self.config.cols
        r, c = self.mapped
        if r == 0:
            raise RuntimeError("run_tile before preload")
        acts = np.asarray(acts, dtype=np.int64)
        if acts.ndim == 2:
            acts = acts[..., None]
        T, r_in, L = acts.shape
        if r_in != r:
            raise ValueError(f"stream feeds {r_in} rows but the tile maps {r}")
        if L > self.config.pe.n:
            raise ValueError(f"{L} lanes exceed the PE width {self.config.pe.n}")
        if structural is None:
            structural = np.ones(acts.shape, dtype=bool)
        structural = np.asarray(structural, dtype=bool).reshape(acts.shape)
        if select is None:
            select = np.zeros((T, r), dtype=np.int64)
        select = np.asarray(select, dtype=np.int64)
        if select.size and (select.min() < 0 or select.max() > self.config.pe.m - L):
            raise IndexError("select index addresses weights outside the PE")

        ro = R - r
        a_val = np.zeros((R, C, L), dtype=np.int64)
        a_str = np.zeros((R, C, L), dtype=bool)
        a_live = np.zeros((R, C), dtype=bool)
        a_sel = np.zeros((R, C), dtype=np.int64)
        psum = np.zeros((R, C), dtype=np.int64)
        out = np.zeros((T, c), dtype=np.int64)
        captured = 0
        lane_idx = np.arange(L)
        row_ids = np.arange(r)
        col_ids = np.arange(c)
        useful = 0
        t = 0
        while captured < T * c:
            # activations and their side-band move one column right
            a_val[:, 1:] = a_val[:, :-1]
            a_str[:, 1:] = a_str[:, :-1]
            a_live[:, 1:] = a_live[:, :-1]
            a_sel[:, 1:] = a_sel[:, :-1]
            b = t - row_ids
            ok = (b >= 0) & (b < T)
            bi = np.clip(b, 0, T - 1)
            a_val[ro:, 0] = np.where(ok[:, None], acts[bi, row_ids], 0)
            a_str[ro:, 0] = ok[:, None] & structural[bi, row_ids]
            a_live[ro:, 0] = ok
            a_sel[ro:, 0] = np.where(ok, select[bi, row_ids], 0)

            w_sel = np.take_along_axis(self.weights, a_sel[..., None] + lane_idx, axis=2)
            prod = (w_sel * a_val).sum(axis=2) * a_live
            psum_in = np.zeros_like(psum)
            psum_in[ro + 1 :] = psum[ro:-1]
            psum = psum_in + prod
            if psum.min() < INT32_MIN or psum.max() > INT32_MAX:
                raise AccumulatorOverflow(f"partial sum overflow at cycle {t}")
            useful += int((a_str & (a_live & self.valid)[..., None]).sum())

            bo = t - (r - 1) - col_ids
            done = (bo >= 0) & (bo < T)
            if done.any():
                out[bo[done], col_ids[done]] = psum[R - 1, :c][done]
                captured += int(done.sum())
            t += 1
        # one more cycle to write the last result into the accumulator memory
        return out, t + 1, useful


@dataclass(eq=False)
class OpData:
    """Operands of one GEMM: coefficient matrix plus either B-spline blocks or a dense operand."""

    weights: np.ndarray  # (eff_rows, N)
    values: np.ndarray | None = None  # KAN: (T, K, P+1)
    k: np.ndarray | None = None  # KAN: (T, K)
    operand: np.ndarray | None = None  # dense: (T, K)


@dataclass
class OpResult:
    op: GemmOp
    stats: SimStats
    output: np.ndarray | None = None


def select_histogram(op: GemmOp, k: np.ndarray | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-feature counts of the interval select ``k - P`` over the activation rows."""
    G, P = op.G, op.P
    if k is not None:
        sel = np.asarray(k, dtype=np.int64) - P
        hist = np.zeros((op.k_features, G), dtype=np.int64)
        np.add.at(hist, (np.broadcast_to(np.arange(op.k_features), sel.shape), sel), 1)
        return hist
    rng = np.random.default_rng(0) if rng is None else rng
    return rng.multinomial(op.rows, np.full(G, 1.0 / G), size=op.k_features).astype(np.int64)


def useful_per_weight_row(op: GemmOp, hist: np.ndarray | None = None) -> np.ndarray:
    """How many streamed rows carry a structural non-zero for each weight row."""
    if not op.is_kan:
        return np.full(op.eff_rows, op.rows, dtype=np.int64)
    G, P = op.G, op.P
    cum = np.concatenate([np.zeros((op.k_features, 1), dtype=np.int64), np.cumsum(hist, axis=1)], axis=1)
    i = np.arange(G + P)
    hi = np.minimum(i, G - 1) + 1
    lo = np.maximum(i - P, 0)
    u = cum[:, hi] - cum[:, lo]
    return u.reshape(-1)


def _fast_stats(schedule: TileSchedule, u: np.ndarray, detail: bool) -> SimStats:
    op, cfg = schedule.op, schedule.config
    T = op.rows
    cum = np.concatenate([[0], np.cumsum(u)])
    useful_rows = cum[schedule.row_bounds[1:]] - cum[schedule.row_bounds[:-1]]
    pe_cols = schedule.pe_cols
    preload = predict_preload_cycles(schedule)
    compute = predict_compute_cycles(schedule, T)
    slots_per_tile = cfg.n_pes * T * schedule.lanes
    issued = schedule.n_tiles * slots_per_tile
    stats = SimStats(
        total_cycles=preload + compute,
        preload_cycles=preload,
        compute_cycles=compute,
        useful_macs=int(useful_rows.sum() * pe_cols.sum()),
        issued_mac_slots=int(issued),
        bubble_slots=int(cfg.n_pes * schedule.lanes * compute - issued),
    )
    if detail:
        for tile in schedule:
            i = tile.index % schedule.n_row_tiles
            stats.per_tile.append(
                TileStats(
                    index=tile.index,
                    pe_rows=tile.pe_rows,
                    pe_cols=tile.pe_cols,
                    preload_cycles=cfg.preload_cycles(tile.pe_rows),
                    compute_cycles=T + tile.pe_rows + tile.pe_cols - 1,
                    useful_macs=int(useful_rows[i] * tile.pe_cols),
                    issued_mac_slots=slots_per_tile,
                )
            )
    return stats


def _tile_stream(op: GemmOp, data: OpData, tile, lanes: int, scalar: bool):
    """Weights and activation stream for one tile, shaped for ``SystolicArray``.

    Scalar KAN tiles are sliced from the dense activation matrix by the caller.
    """
    (w0, w1), (c0, c1) = tile.weight_rows, tile.cols
    r = tile.pe_rows
    T = op.rows
    if op.is_kan:
        P = op.P
        f0, f1 = tile.features
        band = op.band
        w = data.weights[w0:w1, c0:c1].reshape(f1 - f0, band, c1 - c0).transpose(0, 2, 1)
        acts = data.values[:, f0:f1, :]
        return w, acts, None, data.k[:, f0:f1] - P
    x = data.operand[:, w0:w1]
    if scalar:
        return data.weights[w0:w1, c0:c1], x, None, None
    n = w1 - w0
    pad = r * lanes - n
    acts = np.pad(x, ((0, 0), (0, pad))).reshape(T, r, lanes)
    mask = (np.arange(r * lanes) < n).reshape(r, lanes)
    mask = np.broadcast_to(mask, acts.shape)
    w = np.pad(data.weights[w0:w1, c0:c1], ((0, pad), (0, 0)))
    w = w.reshape(r, lanes, c1 - c0).transpose(0, 2, 1)
    return w, acts, mask, None


def simulate_op(op: GemmOp, config: ArrayConfig, data: OpData | None = None, *,
                stepped: bool = False, detail: bool = False,
                rng: np.random.Generator | None = None) -> OpResult:
    """Run one GEMM. ``stepped`` drives every tile through ``SystolicArray``
    (needs ``data``); otherwise tile statistics come from the per-tile
    accounting, using ``data`` for interval indices when available."""
    schedule = tile_gemm(op, config)
    if not stepped:
        hist = None
        if op.is_kan:
            hist = select_histogram(op, None if data is None else data.k, rng)
        return OpResult(op, _fast_stats(schedule, useful_per_weight_row(op, hist), detail))
    if data is None:
        raise ValueError("stepped simulation needs operand data")

    # the dense activation matrix for scalar KAN tiles is built once, not per tile
    if op.is_kan and config.pe.is_scalar:
        dense = scatter_blocks(data.values, data.k, op.G, op.P)
        mask = window_mask(data.k, op.G, op.P)
        cached = (dense, mask)
    else:
        cached = None

    array = SystolicArray(config)
    acc = np.zeros((op.rows, op.n_outputs), dtype=np.int64)
    stats = SimStats()
    slots_per_tile = config.n_pes * op.rows * schedule.lanes
    for tile in schedule:
        if cached is not None:
            (w0, w1), (c0, c1) = tile.weight_rows, tile.cols
            w, acts, mask, sel = data.weights[w0:w1, c0:c1], cached[0][:, w0:w1], cached[1][:, w0:w1], None
        else:
            w, acts, mask, sel = _tile_stream(op, data, tile, config.pe.n, config.pe.is_scalar)
        preload = array.preload(w)
        out, compute, useful = array.run_tile(acts, mask, sel)
        c0, c1 = tile.cols
        acc[:, c0:c1] += out
        check_int32(acc[:, c0:c1], "accumulator memory")
        ts = TileStats(tile.index, tile.pe_rows, tile.pe_cols, preload, compute, useful, slots_per_tile)
        stats += SimStats(
            total_cycles=preload + compute,
            preload_cycles=preload,
            compute_cycles=compute,
            useful_macs=useful,
            issued_mac_slots=slots_per_tile,
            bubble_slots=config.n_pes * schedule.lanes * compute - slots_per_tile,
            per_tile=[ts] if detail else [],
        )
    return OpResult(op, stats, acc.astype(np.int32))


def layer_op_data(op: GemmOp, params, x_q: np.ndarray) -> OpData:
    """Operands of one of a layer's GEMMs for the input codes ``x_q``."""
    if isinstance(params, DenseLayerParams):
        operand = np.asarray(x_q, dtype=np.int64) - params.in_zero
        return OpData(params.weights.astype(np.int64), operand=operand)
    if op.role == "bias":
        return OpData(params.bias_weights.astype(np.int64), operand=relu_codes(x_q, params.quant))
    values, k = activation_blocks(x_q, params)
    return OpData(params.coeffs.astype(np.int64), values=values, k=k)


@dataclass
class WorkloadResult:
    workload: Workload
    config: ArrayConfig
    stats: SimStats
    ops: list[OpResult]
    # per layer int32 outputs; only set when run with parameters
    outputs: list[np.ndarray] | None = None


def simulate_workload(workload: Workload, config: ArrayConfig, params: WorkloadParams | None = None, *,
                      stepped: bool = False, detail: bool = False) -> WorkloadResult:
    """Run every GEMM of a workload in order and aggregate the statistics.

    With ``params`` the layers are chained through their requantizers, exactly
    as ``network_forward_quant`` does, and the per-layer outputs are returned.
    Without them only timing and utilization are produced (interval indices are
    drawn from the workload seed).
    """
    ops_by_layer: dict[int, list[GemmOp]] = {}
    for op in workload.ops:
        ops_by_layer.setdefault(op.layer, []).append(op)
    for op in workload.ops:
        check_compatible(op, config)

    total = SimStats()
    results: list[OpResult] = []
    if params is None:
        if stepped:
            raise ValueError("stepped simulation needs workload parameters")
        rng = np.random.default_rng(workload.seed)
        for op in workload.ops:
            res = simulate_op(op, config, detail=detail, rng=rng)
            results.append(res)
            total += res.stats
        return WorkloadResult(workload, config, total, results)

    outputs = []
    x = None
    for i, ld in enumerate(params.layers):
        if ld.inputs is not None:
            x = ld.inputs
        acc = np.zeros((x.shape[0], ld.params.out_features), dtype=np.int64)
        for op in ops_by_layer[i]:
            res = simulate_op(op, config, layer_op_data(op, ld.params, x), stepped=stepped, detail=detail)
            results.append(res)
            total += res.stats
            if res.output is not None:
                acc += res.output
        if not stepped:
            # the fast path has no datapath; the reference supplies the next layer's inputs
            acc = layer_forward_quant(x, ld.params)
        acc = check_int32(acc, f"layer {i} output")
        outputs.append(acc.astype(np.int32))
        x = ld.requant(acc) if ld.requant is not None else None
    return WorkloadResult(workload, config, total, results, outputs if stepped else None)
