"""Array configuration shared by the tiler and the simulator."""

from __future__ import annotations

import re
from dataclasses import dataclass


class ConfigError(ValueError):
    """Array configuration does not fit the workload."""


@dataclass(frozen=True)
class PEKind:
    """Scalar PE is ``PEKind(1, 1)``; an N:M vector PE holds M weights and takes N lanes."""

    n: int = 1
    m: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.n <= self.m:
            raise ValueError(f"need 1 <= N <= M, got {self.n}:{self.m}")

    @property
    def is_scalar(self) -> bool:
        return self.n == 1 and self.m == 1

    @property
    def label(self) -> str:
        return f"{self.n}:{self.m}"

    def __str__(self) -> str:
        return "scalar" if self.is_scalar else f"nm:{self.n}:{self.m}"

    @classmethod
    def parse(cls, text: str) -> "PEKind":
        text = text.strip().lower()
        if text in ("scalar", "1:1"):
            return cls()
        m = re.fullmatch(r"(?:nm:)?(\d+):(\d+)", text)
        if m is None:
            raise ValueError(f"unrecognised PE kind {text!r}; use 'scalar' or 'nm:N:M'")
        return cls(int(m[1]), int(m[2]))

    @classmethod
    def matched(cls, G: int, P: int) -> "PEKind":
        """The matched vector PE for a layer: N = P + 1 lanes over M = G + P coefficients."""
        return cls(P + 1, G + P)


SCALAR = PEKind()


@dataclass(frozen=True)
class ArrayConfig:
    rows: int
    cols: int
    pe: PEKind = SCALAR
    # None: one cycle per mapped PE row (a C-wide load bus)
    weight_load_cycles: int | None = None
    acc_bits: int = 32

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array must be at least 1x1, got {self.rows}x{self.cols}")
        if self.weight_load_cycles is not None and self.weight_load_cycles < 0:
            raise ValueError("weight_load_cycles must be non-negative")

    @property
    def n_pes(self) -> int:
        return self.rows * self.cols

    @property
    def lanes(self) -> int:
        return self.pe.n

    def preload_cycles(self, mapped_rows: int) -> int:
        if self.weight_load_cycles is not None:
            return self.weight_load_cycles
        return mapped_rows

    def describe(self) -> str:
        return f"{self.rows}x{self.cols} {self.pe}"
