"""Weight tiling of GEMMs onto a weight-stationary array, and the matching timing model.

Timing of one tile that maps ``r`` PE rows and ``c`` PE columns and streams
``T`` activation rows::

    preload  = config.preload_cycles(r)        (r by default)
    compute  = T + r + c - 1                   (skewed fill, stream, drain, accumulate)

A partial tile is placed against the bottom-left corner of the array, next to
the accumulators, so unmapped PEs add no latency. For a full tile this is the
usual ``T + R + C - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .hardware import ArrayConfig, ConfigError

KAN = "kan"
DENSE = "dense"


@dataclass(frozen=True)
class GemmOp:
    """``(rows, K) x (K_eff, N)`` product; KAN ops expand each feature to G + P basis rows.

    ``P = 0`` is accepted here (a piecewise-constant basis) because the timing
    model only needs the band shape; the functional path needs ``1 <= P <= 3``.
    """

    kind: str
    rows: int
    k_features: int
    n_outputs: int
    G: int | None = None
    P: int | None = None
    layer: int = 0
    role: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (KAN, DENSE):
            raise ValueError(f"unknown op kind {self.kind!r}")
        for name in ("rows", "k_features", "n_outputs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kind == KAN:
            if self.G is None or self.P is None:
                raise ValueError("KAN op needs G and P")
            if self.G < 1 or not 0 <= self.P <= 3:
                raise ValueError(f"unsupported grid G={self.G} P={self.P} (need G >= 1, P <= 3)")

    @property
    def is_kan(self) -> bool:
        return self.kind == KAN

    @property
    def band(self) -> int:
        """Weight rows per input feature."""
        return self.G + self.P if self.is_kan else 1

    @property
    def eff_rows(self) -> int:
        return self.k_features * self.band

    @property
    def useful_macs(self) -> int:
        """Structurally non-zero products in the whole GEMM."""
        per_feature = self.P + 1 if self.is_kan else 1
        return self.rows * self.k_features * per_feature * self.n_outputs

    def with_rows(self, rows: int) -> "GemmOp":
        return GemmOp(self.kind, rows, self.k_features, self.n_outputs, self.G, self.P, self.layer, self.role)


@dataclass(frozen=True)
class Tile:
    index: int
    weight_rows: tuple[int, int]
    cols: tuple[int, int]
    # input features whose weight rows intersect the tile
    features: tuple[int, int]
    pe_rows: int
    pe_cols: int


@dataclass(frozen=True, eq=False)
class TileSchedule:
    """Row tiles x column tiles, column tiles outer. Tiles are generated lazily."""

    op: GemmOp
    config: ArrayConfig
    row_bounds: np.ndarray  # weight-row boundaries, len n_row_tiles + 1
    pe_rows: np.ndarray  # mapped PE rows per row tile
    col_bounds: np.ndarray
    lanes: int = field(default=1)

    @property
    def n_row_tiles(self) -> int:
        return len(self.pe_rows)

    @property
    def n_col_tiles(self) -> int:
        return len(self.col_bounds) - 1

    @property
    def n_tiles(self) -> int:
        return self.n_row_tiles * self.n_col_tiles

    @property
    def pe_cols(self) -> np.ndarray:
        return np.diff(self.col_bounds)

    def __len__(self) -> int:
        return self.n_tiles

    def __iter__(self) -> Iterator[Tile]:
        idx = 0
        band = self.op.band
        for j in range(self.n_col_tiles):
            c0, c1 = int(self.col_bounds[j]), int(self.col_bounds[j + 1])
            for i in range(self.n_row_tiles):
                r0, r1 = int(self.row_bounds[i]), int(self.row_bounds[i + 1])
                yield Tile(
                    index=idx,
                    weight_rows=(r0, r1),
                    cols=(c0, c1),
                    features=(r0 // band, -(-r1 // band)),
                    pe_rows=int(self.pe_rows[i]),
                    pe_cols=c1 - c0,
                )
                idx += 1

    @property
    def tiles(self) -> list[Tile]:
        return list(self)

    def mapped_fraction(self) -> float:
        """Mapped-PE fraction averaged over tiles (tile efficiency)."""
        mapped = self.pe_rows.sum() * self.pe_cols.sum()
        return float(mapped) / (self.n_tiles * self.config.n_pes)

    def dump(self) -> str:
        op = self.op
        head = (
            f"# schedule op={op.kind} role={op.role or '-'} layer={op.layer} rows={op.rows} "
            f"K={op.k_features} N={op.n_outputs} G={op.G} P={op.P} "
            f"array={self.config.describe()} tiles={self.n_tiles}"
        )
        lines = [head, "# tile weight_rows cols features pe_rows pe_cols"]
        for t in self:
            lines.append(
                f"{t.index} {t.weight_rows[0]}:{t.weight_rows[1]} {t.cols[0]}:{t.cols[1]} "
                f"{t.features[0]}:{t.features[1]} {t.pe_rows} {t.pe_cols}"
            )
        return "\n".join(lines) + "\n"


def _bounds(total: int, step: int) -> np.ndarray:
    return np.append(np.arange(0, total, step), total).astype(np.int64)


def check_compatible(op: GemmOp, config: ArrayConfig) -> None:
    pe = config.pe
    if pe.is_scalar or not op.is_kan:
        return
    if pe.m != op.G + op.P or pe.n != op.P + 1:
        raise ConfigError(
            f"KAN op with G={op.G}, P={op.P} needs an N:M PE with N={op.P + 1}, "
            f"M={op.G + op.P}; array has {pe.label}"
        )


def tile_gemm(op: GemmOp, config: ArrayConfig) -> TileSchedule:
    check_compatible(op, config)
    R, C = config.rows, config.cols
    col_bounds = _bounds(op.n_outputs, C)
    pe = config.pe
    if pe.is_scalar:
        row_bounds = _bounds(op.eff_rows, R)
        pe_rows = np.diff(row_bounds)
        lanes = 1
    elif op.is_kan:
        # a feature's whole coefficient band lives in one PE
        feature_bounds = _bounds(op.k_features, R)
        row_bounds = feature_bounds * op.band
        pe_rows = np.diff(feature_bounds)
        lanes = pe.n
    else:
        row_bounds = _bounds(op.k_features, R * pe.n)
        pe_rows = -(-np.diff(row_bounds) // pe.n)
        lanes = pe.n
    return TileSchedule(
        op=op,
        config=config,
        row_bounds=row_bounds,
        pe_rows=pe_rows.astype(np.int64),
        col_bounds=col_bounds,
        lanes=lanes,
    )


def tile_compute_cycles(T: int, pe_rows: int, pe_cols: int) -> int:
    return T + pe_rows + pe_cols - 1


def predict_compute_cycles(schedule: TileSchedule, T: int | None = None) -> int:
    T = schedule.op.rows if T is None else T
    nr, nc = schedule.n_row_tiles, schedule.n_col_tiles
    return int(nr * nc * (T - 1) + nc * schedule.pe_rows.sum() + nr * schedule.pe_cols.sum())


def predict_preload_cycles(schedule: TileSchedule) -> int:
    cfg = schedule.config
    if cfg.weight_load_cycles is not None:
        return schedule.n_tiles * cfg.weight_load_cycles
    return int(schedule.n_col_tiles * schedule.pe_rows.sum())


def predict_cycles(schedule: TileSchedule, T: int | None = None) -> int:
    """Sum over tiles of preload + T + r + c - 1."""
    return predict_preload_cycles(schedule) + predict_compute_cycles(schedule, T)


def tile_count(op: GemmOp, config: ArrayConfig) -> int:
    """Closed-form tile count, used as a cross-check of ``tile_gemm``."""
    check_compatible(op, config)
    cols = math.ceil(op.n_outputs / config.cols)
    pe = config.pe
    if pe.is_scalar:
        return math.ceil(op.eff_rows / config.rows) * cols
    if op.is_kan:
        return math.ceil(op.k_features / config.rows) * cols
    return math.ceil(op.k_features / (config.rows * pe.n)) * cols
