"""Analytical side models: recursive-evaluation baseline, energy and area at parity.

All hardware numbers are configuration, loaded from a constants file or taken
from the defaults below. Constants file (JSON)::

    {
      "format_version": 1,
      "power_mw": {"1:1": 0.35, "4:8": 1.12, ...},
      "delay_ns": {"1:1": 1.02, "4:8": 1.31, ...},
      "scalar_anchor": {"rows": 32, "cols": 32, "area_mm2": 0.50},
      "vector_anchor": {"rows": 16, "cols": 16, "pe": "4:8", "area_mm2": 0.47},
      "bspline_unit_um2": 450,
      "fma_area_mm2": 0.0081,
      "fma_latency": 4
    }

Missing keys keep their defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .hardware import SCALAR, ArrayConfig, PEKind

FORMAT_VERSION = 1

DEFAULT_POWER_MW = {"1:1": 0.35, "1:2": 0.40, "2:4": 0.62, "2:6": 0.77, "4:6": 0.98, "4:8": 1.12}
DEFAULT_DELAY_NS = {"1:1": 1.02, "1:2": 1.05, "2:4": 1.15, "2:6": 1.19, "4:6": 1.28, "4:8": 1.31}


class UnknownPEKind(KeyError):
    pass


@dataclass(frozen=True)
class AreaAnchor:
    rows: int
    cols: int
    area_mm2: float
    pe: str = "1:1"

    @property
    def pe_area_mm2(self) -> float:
        return self.area_mm2 / (self.rows * self.cols)


@dataclass(frozen=True)
class PowerAreaTable:
    power_mw: dict = field(default_factory=lambda: dict(DEFAULT_POWER_MW))
    delay_ns: dict = field(default_factory=lambda: dict(DEFAULT_DELAY_NS))
    scalar_anchor: AreaAnchor = AreaAnchor(32, 32, 0.50)
    vector_anchor: AreaAnchor = AreaAnchor(16, 16, 0.47, "4:8")
    bspline_unit_um2: float = 450.0
    fma_area_mm2: float = 0.0081
    fma_latency: int = 4

    def __post_init__(self) -> None:
        for name, table in (("power_mw", self.power_mw), ("delay_ns", self.delay_ns)):
            for kind, v in table.items():
                PEKind.parse(kind)
                if not v > 0:
                    raise ValueError(f"{name}[{kind!r}] must be positive, got {v}")
        for name in ("bspline_unit_um2", "fma_area_mm2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.fma_latency < 0:
            raise ValueError("fma_latency must be non-negative")
        for a in (self.scalar_anchor, self.vector_anchor):
            if a.rows < 1 or a.cols < 1 or not a.area_mm2 > 0:
                raise ValueError(f"invalid area anchor {a}")

    def power(self, pe: PEKind | str) -> float:
        label = _label(pe)
        try:
            return self.power_mw[label]
        except KeyError:
            raise UnknownPEKind(f"no power figure for PE kind {label}; known: {sorted(self.power_mw)}") from None

    def delay(self, pe: PEKind | str) -> float:
        label = _label(pe)
        try:
            return self.delay_ns[label]
        except KeyError:
            raise UnknownPEKind(f"no delay figure for PE kind {label}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format_version"] = FORMAT_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PowerAreaTable":
        if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ValueError(f"constants field 'format_version' must be {FORMAT_VERSION}")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known - {"format_version"}
        if extra:
            raise ValueError(f"unknown constants field(s): {', '.join(sorted(extra))}")
        kw = {k: v for k, v in d.items() if k in known}
        base = cls()
        for key in ("power_mw", "delay_ns"):
            if key in kw:
                kw[key] = {**getattr(base, key), **kw[key]}
        for key in ("scalar_anchor", "vector_anchor"):
            if key in kw:
                kw[key] = AreaAnchor(**{**asdict(getattr(base, key)), **kw[key]})
        return replace(base, **kw)


def _label(pe: PEKind | str) -> str:
    if isinstance(pe, str):
        pe = PEKind.parse(pe)
    return pe.label


DEFAULT_TABLE = PowerAreaTable()


def load_constants(path: str | Path | None) -> PowerAreaTable:
    if path is None:
        return DEFAULT_TABLE
    return PowerAreaTable.from_dict(json.loads(Path(path).read_text()))


def dump_constants(table: PowerAreaTable = DEFAULT_TABLE) -> str:
    return json.dumps(table.to_dict(), indent=2) + "\n"


# ------------------------------------------------------ recursive evaluation


def arkane_cycles(P: int, G: int, m_inputs: int, pe_latency: int = 4) -> int:
    """Cycles of a pipelined recursive (Cox-de Boor) evaluator for M inputs."""
    for name, v in (("P", P), ("G", G), ("m_inputs", m_inputs)):
        if v < 1:
            raise ValueError(f"{name} must be positive")
    if pe_latency < 0:
        raise ValueError("pe_latency must be non-negative")
    return (P + 1) * pe_latency + G + P - 1 + m_inputs


def units_at_parity(P: int, table: PowerAreaTable = DEFAULT_TABLE) -> int:
    """Tabulated B-spline units fitting in the area of the P+1 FMAs they replace."""
    fma_um2 = table.fma_area_mm2 * 1e6
    # guard against 71.99999 from the decimal constants
    return max(1, math.floor((P + 1) * fma_um2 / table.bspline_unit_um2 + 1e-9))


def tabulation_cycles(m_inputs: int, units: int) -> int:
    return -(-m_inputs // units)


def tabulation_speedup(P: int, G: int, m_inputs: int, table: PowerAreaTable = DEFAULT_TABLE,
                       pe_latency: int | None = None) -> float:
    lat = table.fma_latency if pe_latency is None else pe_latency
    units = units_at_parity(P, table)
    return arkane_cycles(P, G, m_inputs, lat) / tabulation_cycles(m_inputs, units)


def arkane_report(P: int, G: int, m_inputs: int, table: PowerAreaTable = DEFAULT_TABLE) -> dict:
    units = units_at_parity(P, table)
    ark = arkane_cycles(P, G, m_inputs, table.fma_latency)
    tab = tabulation_cycles(m_inputs, units)
    return {
        "P": P,
        "G": G,
        "m_inputs": m_inputs,
        "pe_latency": table.fma_latency,
        "arkane_cycles": ark,
        "tabulation_cycles": tab,
        "units_at_parity": units,
        "speedup": ark / tab,
    }


# ------------------------------------------------------------ energy and area


def energy(total_cycles: int, pe: PEKind | str, table: PowerAreaTable = DEFAULT_TABLE) -> float:
    """Per-PE power times cycles (mW * cycles)."""
    return table.power(pe) * total_cycles


def energy_estimate(total_cycles: int, pe: PEKind | str, baseline_cycles: int,
                    table: PowerAreaTable = DEFAULT_TABLE) -> float:
    """Energy of a run normalized to the scalar PE running the same workload."""
    if baseline_cycles <= 0:
        raise ValueError("baseline run has no cycles")
    return energy(total_cycles, pe, table) / energy(baseline_cycles, SCALAR, table)


def normalized_energy(pe: PEKind | str, G: int, P: int, table: PowerAreaTable = DEFAULT_TABLE) -> float:
    """Closed form for a matched PE: power ratio over the (G+P)x cycle reduction."""
    return table.power(pe) / table.power(SCALAR) / (G + P)


def array_area(config: ArrayConfig, table: PowerAreaTable = DEFAULT_TABLE) -> float:
    """Estimated array area in mm^2, linear in PE count from the anchors.

    Every vector PE is charged the vector anchor's per-PE area, whatever its N:M.
    """
    anchor = table.scalar_anchor if config.pe.is_scalar else table.vector_anchor
    return anchor.pe_area_mm2 * config.n_pes


def area_parity_pairs(table: PowerAreaTable = DEFAULT_TABLE, sizes=(2, 4, 8, 16),
                      pe: PEKind | str | None = None) -> list[tuple[ArrayConfig, ArrayConfig]]:
    """(scalar, vector) array pairs of similar area, scaled from the anchors.

    The anchors fix the side ratio (32x32 scalar vs 16x16 vector gives 2); each
    vector array of side ``s`` is paired with a scalar array of side ``2s``.
    """
    pe = PEKind.parse(pe or table.vector_anchor.pe) if not isinstance(pe, PEKind) else pe
    ratio_r = table.scalar_anchor.rows / table.vector_anchor.rows
    ratio_c = table.scalar_anchor.cols / table.vector_anchor.cols
    out = []
    for s in sizes:
        vec = ArrayConfig(s, s, pe)
        sca = ArrayConfig(max(1, round(s * ratio_r)), max(1, round(s * ratio_c)))
        out.append((sca, vec))
    return out
