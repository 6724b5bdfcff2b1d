"""KAN layer semantics as a GEMM, in float and in integer-only form.

A layer with K inputs and N outputs has a coefficient matrix of shape
``(K * (G + P), N)``, band-major: rows ``f*(G+P) .. (f+1)*(G+P)-1`` belong to
input feature f. The optional bias branch ``w_b * ReLU(x)`` is a plain
``(K, N)`` GEMM on the rectified input codes. Its weights are quantized at
``coeff_scale / (lut_scale * x_scale)`` so both branches accumulate at the
same output scale ``coeff_scale / lut_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bspline_unit import BSplineLut, QuantParams, build_lut, check_calibration, evaluate_codes
from .spline import UniformGrid, basis_matrix
from .tiling import DENSE, KAN, GemmOp

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1


class AccumulatorOverflow(OverflowError):
    """A 32-bit accumulator would wrap."""


def check_int32(acc: np.ndarray, where: str = "accumulator") -> np.ndarray:
    acc = np.asarray(acc, dtype=np.int64)
    if acc.size and (acc.min() < INT32_MIN or acc.max() > INT32_MAX):
        bad = acc.max() if acc.max() > INT32_MAX else acc.min()
        raise AccumulatorOverflow(f"{where} value {int(bad)} does not fit int32")
    return acc


def _check_int8(name: str, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    if not np.issubdtype(w.dtype, np.integer):
        raise TypeError(f"{name} must be an integer array")
    if w.size and (w.min() < -128 or w.max() > 127):
        raise ValueError(f"{name} values must fit int8")
    return w.astype(np.int8)


def _check_codes(x_q, K: int) -> np.ndarray:
    x_q = np.asarray(x_q)
    if x_q.ndim != 2 or x_q.shape[1] != K:
        raise ValueError(f"inputs must have shape (BS, {K}), got {x_q.shape}")
    if not np.issubdtype(x_q.dtype, np.integer):
        raise TypeError("quantized inputs must be integer codes")
    if x_q.size and (x_q.min() < 0 or x_q.max() > 255):
        raise ValueError("input codes must be in [0, 255]")
    return x_q.astype(np.int64)


@dataclass(frozen=True, eq=False)
class KanLayerParams:
    in_features: int
    out_features: int
    grid: UniformGrid
    coeffs: np.ndarray
    quant: QuantParams
    coeff_scale: float = 1.0
    bias_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        rows = self.grid.n_basis * self.in_features
        if self.coeffs.shape != (rows, self.out_features):
            raise ValueError(f"coeffs must have shape {(rows, self.out_features)}, got {self.coeffs.shape}")
        object.__setattr__(self, "coeffs", _check_int8("coeffs", self.coeffs))
        if self.bias_weights is not None:
            shape = (self.in_features, self.out_features)
            if self.bias_weights.shape != shape:
                raise ValueError(f"bias_weights must have shape {shape}, got {self.bias_weights.shape}")
            object.__setattr__(self, "bias_weights", _check_int8("bias_weights", self.bias_weights))
        check_calibration(self.grid, self.quant)

    @cached_property
    def lut(self) -> BSplineLut:
        return build_lut(self.grid.P, self.quant)

    @property
    def output_scale(self) -> float:
        return self.coeff_scale / self.quant.lut_scale

    @property
    def bias_scale(self) -> float:
        return self.coeff_scale / (self.quant.lut_scale * self.quant.x_scale)

    def gemm_ops(self, rows: int, layer: int = 0) -> list[GemmOp]:
        g = self.grid
        ops = [GemmOp(KAN, rows, self.in_features, self.out_features, g.G, g.P, layer, "spline")]
        if self.bias_weights is not None:
            ops.append(GemmOp(DENSE, rows, self.in_features, self.out_features, layer=layer, role="bias"))
        return ops


@dataclass(frozen=True, eq=False)
class DenseLayerParams:
    """Plain int8 GEMM on signed 8-bit input codes ``x_q - in_zero``."""

    weights: np.ndarray
    in_zero: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _check_int8("weights", self.weights))

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]

    def gemm_ops(self, rows: int, layer: int = 0) -> list[GemmOp]:
        return [GemmOp(DENSE, rows, self.in_features, self.out_features, layer=layer, role="dense")]


def activation_blocks(inputs_q, params: KanLayerParams) -> tuple[np.ndarray, np.ndarray]:
    """B-spline unit output for every input: ``values (BS, K, P+1)``, ``k (BS, K)``."""
    x_q = _check_codes(inputs_q, params.in_features)
    return evaluate_codes(x_q, params.grid, params.lut, params.quant)


def scatter_blocks(values: np.ndarray, k: np.ndarray, G: int, P: int) -> np.ndarray:
    """Expand sparse blocks into the dense ``(BS, K*(G+P))`` activation matrix."""
    BS, K, lanes = values.shape
    band = G + P
    out = np.zeros((BS, K, band), dtype=np.int64)
    b_idx, f_idx = np.meshgrid(np.arange(BS), np.arange(K), indexing="ij")
    for j in range(lanes):
        out[b_idx, f_idx, k - P + j] = values[..., j]
    return out.reshape(BS, K * band)


def window_mask(k: np.ndarray, G: int, P: int) -> np.ndarray:
    """True where the dense activation matrix holds a structurally non-zero lane."""
    BS, K = k.shape
    pos = np.arange(G + P)
    lo = (k - P)[..., None]
    mask = (pos >= lo) & (pos <= k[..., None])
    return mask.reshape(BS, K * (G + P))


def build_activation_matrix(inputs_q, params: KanLayerParams) -> np.ndarray:
    values, k = activation_blocks(inputs_q, params)
    return scatter_blocks(values, k, params.grid.G, params.grid.P)


def relu_codes(inputs_q, quant: QuantParams) -> np.ndarray:
    """Rectified input as an unsigned code: ``max(x_q - x_zero, 0)``."""
    return np.maximum(np.asarray(inputs_q, dtype=np.int64) - quant.x_zero, 0)


def kan_layer_forward_float(inputs, params: KanLayerParams) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    basis = basis_matrix(params.grid, x).reshape(x.shape[0], -1)
    out = basis @ (params.coeffs.astype(float) * params.coeff_scale)
    if params.bias_weights is not None:
        out += np.maximum(x, 0.0) @ (params.bias_weights.astype(float) * params.bias_scale)
    return out


def kan_layer_forward_quant(inputs_q, params: KanLayerParams) -> np.ndarray:
    """Integer-only layer: 8-bit products summed in a checked 32-bit accumulator."""
    x_q = _check_codes(inputs_q, params.in_features)
    acc = build_activation_matrix(x_q, params) @ params.coeffs.astype(np.int64)
    if params.bias_weights is not None:
        acc += relu_codes(x_q, params.quant) @ params.bias_weights.astype(np.int64)
    return check_int32(acc, "KAN layer output").astype(np.int32)


def dense_forward_quant(inputs_q, params: DenseLayerParams) -> np.ndarray:
    x = np.asarray(inputs_q, dtype=np.int64) - params.in_zero
    acc = x @ params.weights.astype(np.int64)
    return check_int32(acc, "dense layer output").astype(np.int32)


def layer_forward_quant(inputs_q, params) -> np.ndarray:
    if isinstance(params, KanLayerParams):
        return kan_layer_forward_quant(inputs_q, params)
    return dense_forward_quant(inputs_q, params)


def quantize_multiplier(real: float) -> tuple[int, int]:
    """``real ~= multiplier * 2**-shift`` with a 31-bit normalized multiplier."""
    if not real > 0:
        raise ValueError("requantization scale must be positive")
    mant, exp = math.frexp(real)
    multiplier = round(mant * (1 << 31))
    if multiplier == 1 << 31:
        multiplier //= 2
        exp += 1
    shift = 31 - exp
    if shift < 0:
        raise ValueError(f"requantization scale {real} too large")
    return multiplier, shift


@dataclass(frozen=True)
class Requant:
    """Fixed-point rescale of 32-bit accumulators to the next layer's 8-bit codes."""

    multiplier: int
    shift: int
    zero: int
    lo: int = 0
    hi: int = 255

    @classmethod
    def from_scale(cls, real: float, zero: int, lo: int = 0, hi: int = 255) -> "Requant":
        m, s = quantize_multiplier(real)
        return cls(m, s, zero, lo, hi)

    @property
    def scale(self) -> float:
        return self.multiplier / 2.0**self.shift

    def __call__(self, acc) -> np.ndarray:
        acc = np.asarray(acc, dtype=np.int64)
        prod = acc * self.multiplier
        if self.shift > 0:
            # round half away from zero
            half = np.int64(1) << (self.shift - 1)
            mag = (np.abs(prod) + half) >> self.shift
            scaled = np.sign(prod) * mag
        else:
            scaled = prod
        return np.clip(scaled + self.zero, self.lo, self.hi).astype(np.int64)


@dataclass(frozen=True)
class ConvShape:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    height: int
    width: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "height", "width", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"conv {name} must be positive")
        if self.padding < 0:
            raise ValueError("conv padding must be non-negative")
        if self.out_height < 1 or self.out_width < 1:
            raise ValueError(
                f"{self.kernel_h}x{self.kernel_w} kernel does not fit a padded "
                f"{self.height}x{self.width} input"
            )

    @property
    def out_height(self) -> int:
        return (self.height + 2 * self.padding - self.kernel_h) // self.stride + 1

    @property
    def out_width(self) -> int:
        return (self.width + 2 * self.padding - self.kernel_w) // self.stride + 1

    @property
    def patch_size(self) -> int:
        return self.in_channels * self.kernel_h * self.kernel_w


def conv_to_gemm(conv: ConvShape, G: int, P: int, batch: int = 1, layer: int = 0) -> GemmOp:
    """im2col lowering: one KAN feature per (channel, kh, kw) tap."""
    rows = batch * conv.out_height * conv.out_width
    return GemmOp(KAN, rows, conv.patch_size, conv.out_channels, G, P, layer, "spline")


def im2col(x: np.ndarray, conv: ConvShape, pad_value=0) -> np.ndarray:
    """``(BS, C, H, W)`` -> ``(BS * H_out * W_out, C * kh * kw)`` patch matrix."""
    BS, C, H, W = x.shape
    if (C, H, W) != (conv.in_channels, conv.height, conv.width):
        raise ValueError(f"input shape {x.shape[1:]} does not match conv geometry")
    p = conv.padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=pad_value)
    Ho, Wo, s = conv.out_height, conv.out_width, conv.stride
    cols = np.empty((BS, Ho, Wo, C, conv.kernel_h, conv.kernel_w), dtype=x.dtype)
    for i in range(conv.kernel_h):
        for j in range(conv.kernel_w):
            cols[:, :, :, :, i, j] = xp[:, :, i : i + s * Ho : s, j : j + s * Wo : s].transpose(0, 2, 3, 1)
    return cols.reshape(BS * Ho * Wo, conv.patch_size)
