"""Experiment drivers producing the rows written by the CLI.

Every row carries the columns in ``COLUMNS``. Per-op rows have an integer
``op_index``; the row aggregating a whole workload run uses ``"total"``, and
suite averages in sweeps use ``workload = "average"``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cost_models import (
    DEFAULT_TABLE,
    PowerAreaTable,
    UnknownPEKind,
    area_parity_pairs,
    array_area,
    energy_estimate,
)
from .hardware import SCALAR, ArrayConfig, PEKind
from .systolic import SimStats, simulate_workload
from .workloads import APPLICATIONS, Workload, WorkloadParams, builtin_workloads

COLUMNS = (
    "workload",
    "op_index",
    "pe_kind",
    "rows",
    "cols",
    "batch",
    "preload_cycles",
    "compute_cycles",
    "total_cycles",
    "useful_macs",
    "issued_slots",
    "utilization",
    "norm_energy",
    "area_mm2",
)

# the area-parity comparison holds every layer at one grid so one PE kind fits all
PARITY_GRID = (5, 3)
EXCLUDED_AT_PARITY = ("MNIST-KAN",)
SWEEP_SIZES = (2, 4, 8, 16, 32)

log = logging.getLogger(__name__)


def _row(name: str, op_index, config: ArrayConfig, batch: int, stats: SimStats, norm_energy: float,
         table: PowerAreaTable) -> dict:
    return {
        "workload": name,
        "op_index": op_index,
        "pe_kind": str(config.pe),
        "rows": config.rows,
        "cols": config.cols,
        "batch": batch,
        "preload_cycles": stats.preload_cycles,
        "compute_cycles": stats.compute_cycles,
        "total_cycles": stats.total_cycles,
        "useful_macs": stats.useful_macs,
        "issued_slots": stats.issued_mac_slots,
        "utilization": round(stats.utilization, 6),
        "norm_energy": None if norm_energy is None else round(norm_energy, 6),
        "area_mm2": round(array_area(config, table), 6),
    }


def _norm_energy(cycles: int, pe: PEKind, baseline: int, table: PowerAreaTable) -> float | None:
    try:
        return energy_estimate(cycles, pe, baseline, table)
    except UnknownPEKind:
        return None


def run_workload(workload: Workload, config: ArrayConfig, table: PowerAreaTable = DEFAULT_TABLE,
                 params: WorkloadParams | None = None, per_op: bool = True) -> list[dict]:
    """Rows for one run. Energy is normalized to a scalar array of the same shape.

    ``norm_energy`` is None when the constants have no power figure for the PE kind.
    """
    result = simulate_workload(workload, config, params)
    if config.pe.is_scalar:
        base = result
    else:
        base = simulate_workload(workload, ArrayConfig(config.rows, config.cols, SCALAR,
                                                       config.weight_load_cycles), params)
    rows = []
    if per_op:
        for i, (r, b) in enumerate(zip(result.ops, base.ops)):
            e = _norm_energy(r.stats.total_cycles, config.pe, b.stats.total_cycles, table)
            rows.append(_row(workload.name, i, config, workload.batch, r.stats, e, table))
    e = _norm_energy(result.stats.total_cycles, config.pe, base.stats.total_cycles, table)
    if e is None:
        log.warning("no power figure for PE kind %s; norm_energy left empty", config.pe.label)
    rows.append(_row(workload.name, "total", config, workload.batch, result.stats, e, table))
    return rows


@dataclass
class ParityResult:
    scalar: ArrayConfig
    vector: ArrayConfig
    # workload name -> (scalar cycles, vector cycles)
    cycles: dict

    @property
    def suite_ratio(self) -> float:
        """Scalar over vector runtime for the whole suite run back to back."""
        s = sum(c[0] for c in self.cycles.values())
        v = sum(c[1] for c in self.cycles.values())
        return s / v

    @property
    def mean_ratio(self) -> float:
        """Unweighted mean of the per-workload ratios."""
        return float(np.mean([c[0] / c[1] for c in self.cycles.values()]))


def parity_suite(batch: int = 256, seed: int = 0, grid=PARITY_GRID) -> list[Workload]:
    return [
        wl.with_grid(*grid)
        for wl in builtin_workloads(batch=batch, seed=seed)
        if wl.application not in EXCLUDED_AT_PARITY
    ]


def area_parity(scalar: ArrayConfig | None = None, vector: ArrayConfig | None = None,
                batch: int = 256, seed: int = 0, table: PowerAreaTable = DEFAULT_TABLE) -> ParityResult:
    if scalar is None or vector is None:
        a, v = table.scalar_anchor, table.vector_anchor
        scalar = ArrayConfig(a.rows, a.cols)
        vector = ArrayConfig(v.rows, v.cols, PEKind.parse(v.pe))
    cycles = {}
    for wl in parity_suite(batch, seed):
        s = simulate_workload(wl, scalar).stats.total_cycles
        n = simulate_workload(wl, vector).stats.total_cycles
        cycles[wl.name] = (s, n)
    return ParityResult(scalar, vector, cycles)


def application_utilization(scalar_size: int = 32, vector_size: int = 16, batch: int = 256,
                            seed: int = 0) -> list[dict]:
    """Per-application utilization, each app on PEs matched to its own grid.

    Variants of one application (CF-KAN item counts, GKAN grids) are averaged.
    Rows follow the application table order.
    """
    acc: dict[str, list[tuple[float, float]]] = {}
    for wl in builtin_workloads(batch=batch, seed=seed):
        G, P = wl.grids[0]
        s = simulate_workload(wl, ArrayConfig(scalar_size, scalar_size)).stats
        v = simulate_workload(wl, ArrayConfig(vector_size, vector_size, PEKind.matched(G, P))).stats
        acc.setdefault(wl.application, []).append((s.utilization, v.utilization))
    rows = []
    for app in APPLICATIONS:
        pairs = acc[app]
        s = float(np.mean([p[0] for p in pairs]))
        v = float(np.mean([p[1] for p in pairs]))
        rows.append({"application": app, "scalar": s, "vector": v, "improvement": v - s})
    return rows


def average_improvement(rows: list[dict]) -> float:
    return float(np.mean([r["improvement"] for r in rows]))


def _sweep_point(args) -> list[dict]:
    config, batch, seed, table = args
    rows = []
    for wl in parity_suite(batch, seed):
        rows.extend(run_workload(wl, config, table, per_op=False))
    return rows


def sweep(sizes=SWEEP_SIZES, batch: int = 256, seed: int = 0, table: PowerAreaTable = DEFAULT_TABLE,
          pe: PEKind | None = None, jobs: int = 1) -> list[dict]:
    """Both array families over square sizes, with one suite-average row per config.

    The average row holds the summed cycles and MACs and the mean utilization.
    """
    pe = pe or PEKind.parse(table.vector_anchor.pe)
    configs = []
    for s in sizes:
        configs.append(ArrayConfig(s, s))
        configs.append(ArrayConfig(s, s, pe))
    tasks = [(c, batch, seed, table) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_sweep_point, tasks))
    else:
        chunks = [_sweep_point(t) for t in tasks]
    out = []
    for config, rows in zip(configs, chunks):
        out.extend(rows)
        avg = dict(rows[0])
        avg["workload"] = "average"
        for key in ("preload_cycles", "compute_cycles", "total_cycles", "useful_macs", "issued_slots"):
            avg[key] = sum(r[key] for r in rows)
        for key in ("utilization", "norm_energy"):
            vals = [r[key] for r in rows if r[key] is not None]
            avg[key] = round(float(np.mean(vals)), 6) if vals else None
        out.append(avg)
    out.sort(key=lambda r: (r["pe_kind"] != "scalar", r["rows"], r["cols"], r["workload"] == "average"))
    return out


def parity_pairs_rows(table: PowerAreaTable = DEFAULT_TABLE, sizes=(2, 4, 8, 16)) -> list[dict]:
    return [
        {
            "scalar": s.describe(),
            "vector": v.describe(),
            "scalar_area_mm2": array_area(s, table),
            "vector_area_mm2": array_area(v, table),
        }
        for s, v in area_parity_pairs(table, sizes)
    ]


def to_csv(rows: list[dict], columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"
