"""Benchmark applications as GEMM sequences, the workload file format, and seeded parameters.

Workload file (JSON)::

    {
      "format_version": 1,
      "name": "prefetcher",
      "application": "Prefetcher",      # optional, defaults to name
      "batch": 256,
      "seed": 0,
      "bias": false,                    # add the w_b * ReLU(x) branch to every KAN layer
      "layers": [                       # or "networks": [[...], [...]] for independent nets
        {"kind": "kan", "in": 5, "out": 64, "G": 4, "P": 3},
        {"kind": "dense", "in": 64, "out": 128},
        {"kind": "conv", "in": 64, "out": 64, "kernel": [3, 3], "input_hw": [32, 32],
         "stride": 1, "padding": 1, "G": 3, "P": 3}
      ]
    }

Consecutive fully connected layers of one network must chain (``out`` of a
layer equals ``in`` of the next). Conv layers are lowered by im2col and are
fed with their own synthetic patches, as is a fully connected layer that
follows a conv.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bspline_unit import CODE_MAX, calibrate, knot_code
from .kan_gemm import (
    ConvShape,
    DenseLayerParams,
    KanLayerParams,
    Requant,
    conv_to_gemm,
    layer_forward_quant,
)
from .spline import UniformGrid
from .tiling import DENSE, KAN, GemmOp

FORMAT_VERSION = 1
DEFAULT_BATCH = 256
CONV = "conv"
INPUT_DOMAIN = (-1.0, 1.0)


class WorkloadError(ValueError):
    """Malformed or inconsistent workload description."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int
    out_features: int
    G: int | None = None
    P: int | None = None
    conv: ConvShape | None = None

    def __post_init__(self) -> None:
        if self.kind not in (KAN, DENSE, CONV):
            raise WorkloadError(f"layer kind must be kan, dense or conv, got {self.kind!r}")
        if self.in_features < 1 or self.out_features < 1:
            raise WorkloadError(f"layer dims must be positive, got [{self.in_features}, {self.out_features}]")
        if self.kind in (KAN, CONV):
            if self.G is None or self.P is None:
                raise WorkloadError(f"{self.kind} layer needs G and P")
            if self.P > 3:
                raise WorkloadError(f"P={self.P} is not supported: the accelerator handles P <= 3 only")
            if self.P < 1 or self.G < 1:
                raise WorkloadError(f"need G >= 1 and 1 <= P <= 3, got G={self.G} P={self.P}")
        if self.kind == CONV and self.conv is None:
            raise WorkloadError("conv layer needs its geometry")

    @property
    def has_grid(self) -> bool:
        return self.kind in (KAN, CONV)

    def rows(self, batch: int) -> int:
        if self.kind == CONV:
            return batch * self.conv.out_height * self.conv.out_width
        return batch

    def gemm_ops(self, batch: int, bias: bool, layer: int) -> list[GemmOp]:
        if self.kind == DENSE:
            return [GemmOp(DENSE, batch, self.in_features, self.out_features, layer=layer, role="dense")]
        if self.kind == CONV:
            ops = [conv_to_gemm(self.conv, self.G, self.P, batch, layer)]
        else:
            ops = [GemmOp(KAN, batch, self.in_features, self.out_features, self.G, self.P, layer, "spline")]
        if bias:
            main = ops[0]
            ops.append(GemmOp(DENSE, main.rows, main.k_features, main.n_outputs, layer=layer, role="bias"))
        return ops

    def with_grid(self, G: int, P: int) -> "LayerSpec":
        return replace(self, G=G, P=P) if self.has_grid else self


def _check_chain(network: tuple[LayerSpec, ...]) -> None:
    for a, b in zip(network, network[1:]):
        if a.kind != CONV and b.kind != CONV and a.out_features != b.in_features:
            raise WorkloadError(
                f"inconsistent dims: layer [{a.in_features}, {a.out_features}] feeds "
                f"[{b.in_features}, {b.out_features}]"
            )


@dataclass(frozen=True)
class Workload:
    name: str
    networks: tuple[tuple[LayerSpec, ...], ...]
    batch: int = DEFAULT_BATCH
    seed: int = 0
    bias: bool = False
    application: str = ""

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise WorkloadError("batch must be positive")
        if not self.networks or not all(self.networks):
            raise WorkloadError("workload needs at least one layer")
        for net in self.networks:
            _check_chain(net)
        if not self.application:
            object.__setattr__(self, "application", self.name)

    @property
    def layers(self) -> list[LayerSpec]:
        return [layer for net in self.networks for layer in net]

    @property
    def ops(self) -> list[GemmOp]:
        ops = []
        for i, layer in enumerate(self.layers):
            ops.extend(layer.gemm_ops(self.batch, self.bias, i))
        return ops

    @property
    def grids(self) -> list[tuple[int, int]]:
        return [(l.G, l.P) for l in self.layers if l.has_grid]

    def with_grid(self, G: int, P: int) -> "Workload":
        nets = tuple(tuple(l.with_grid(G, P) for l in net) for net in self.networks)
        return replace(self, networks=nets)

    def with_batch(self, batch: int) -> "Workload":
        return replace(self, batch=batch)


def _fc(dims: list[int], G: int, P: int) -> tuple[LayerSpec, ...]:
    return tuple(LayerSpec(KAN, a, b, G, P) for a, b in zip(dims, dims[1:]))


def reskan18_layers(G: int = 3, P: int = 3, resolution: int = 32) -> tuple[LayerSpec, ...]:
    """The 20 conv layers of a CIFAR-style ResNet18: 3x3 stem, 16 block convs, 3 1x1 shortcuts."""
    layers = []

    def conv(cin, cout, k, hw, stride):
        shape = ConvShape(cin, cout, k, k, hw, hw, stride, k // 2)
        layers.append(LayerSpec(CONV, cin, cout, G, P, shape))
        return shape.out_height

    hw = conv(3, 64, 3, resolution, 1)
    cin = 64
    for cout, stride in ((64, 1), (128, 2), (256, 2), (512, 2)):
        for block in range(2):
            s = stride if block == 0 else 1
            hw_in = hw
            hw = conv(cin, cout, 3, hw_in, s)
            conv(cout, cout, 3, hw, 1)
            if s != 1 or cin != cout:
                conv(cin, cout, 1, hw_in, s)
            cin = cout
    return tuple(layers)


CATCH22_CLASSES = 10
CF_KAN_ITEMS = (2810, 34395, 6969)
GKAN_G = (2, 3)
GKAN_P = (1, 2, 3)

# canonical report order for per-application tables
APPLICATIONS = (
    "5G-STARDUST",
    "Catch22-KAN",
    "CF-KAN",
    "U-KAN",
    "GKAN",
    "Prefetcher",
    "MNIST-KAN",
    "ResKAN18",
)


def builtin_workloads(batch: int = DEFAULT_BATCH, seed: int = 0, bias: bool = False) -> list[Workload]:
    def w(name, app, nets):
        return Workload(name, tuple(nets), batch, seed, bias, app)

    out = [
        w("5g-stardust", "5G-STARDUST", [_fc([168, 40, 40, 40, 24], 5, 3)]),
        w("catch22-kan", "Catch22-KAN", [_fc([22, CATCH22_CLASSES], 3, 3)]),
    ]
    out += [w(f"cf-kan-{x}", "CF-KAN", [_fc([x, 512, x], 2, 3)]) for x in CF_KAN_ITEMS]
    out.append(w("u-kan", "U-KAN", [_fc([512, 1024, 512], 5, 3), _fc([512, 512], 5, 3)]))
    for G in GKAN_G:
        for P in GKAN_P:
            out.append(w(f"gkan-g{G}-p{P}", "GKAN", [_fc([200, 16, 7], G, P), _fc([100, 20, 7], G, P)]))
    out.append(w("prefetcher", "Prefetcher", [_fc([5, 64, 128], 4, 3)]))
    out.append(w("mnist-kan", "MNIST-KAN", [_fc([784, 64, 10], 10, 3)]))
    out.append(w("reskan18", "ResKAN18", [reskan18_layers()]))
    return out


def builtin_names() -> list[str]:
    return [wl.name for wl in builtin_workloads()]


def get_builtin(name: str, **kwargs) -> Workload:
    for wl in builtin_workloads(**kwargs):
        if wl.name == name.lower():
            return wl
    raise WorkloadError(f"unknown workload {name!r}; built-ins: {', '.join(builtin_names())}")


# ---------------------------------------------------------------- file format


def _layer_to_dict(layer: LayerSpec) -> dict:
    d = {"kind": layer.kind, "in": layer.in_features, "out": layer.out_features}
    if layer.has_grid:
        d["G"], d["P"] = layer.G, layer.P
    if layer.conv is not None:
        c = layer.conv
        d["kernel"] = [c.kernel_h, c.kernel_w]
        d["input_hw"] = [c.height, c.width]
        d["stride"] = c.stride
        d["padding"] = c.padding
    return d


def workload_to_dict(wl: Workload) -> dict:
    d = {
        "format_version": FORMAT_VERSION,
        "name": wl.name,
        "application": wl.application,
        "batch": wl.batch,
        "seed": wl.seed,
        "bias": wl.bias,
    }
    nets = [[_layer_to_dict(l) for l in net] for net in wl.networks]
    if len(nets) == 1:
        d["layers"] = nets[0]
    else:
        d["networks"] = nets
    return d


def dump_workload(wl: Workload, path: str | Path | None = None) -> str:
    text = json.dumps(workload_to_dict(wl), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise WorkloadError(f"{where}: missing field '{key}'")
    return d[key]


def _int_field(d: dict, key: str, where: str, default=None) -> int:
    v = d.get(key, default) if default is not None else _need(d, key, where)
    if isinstance(v, bool) or not isinstance(v, int):
        raise WorkloadError(f"{where}: field '{key}' must be an integer, got {v!r}")
    return v


def _layer_from_dict(d: dict, where: str) -> LayerSpec:
    if not isinstance(d, dict):
        raise WorkloadError(f"{where}: layer must be an object")
    kind = _need(d, "kind", where)
    cin = _int_field(d, "in", where)
    cout = _int_field(d, "out", where)
    G = P = None
    if kind in (KAN, CONV):
        G = _int_field(d, "G", where)
        P = _int_field(d, "P", where)
    conv = None
    if kind == CONV:
        kernel = _need(d, "kernel", where)
        hw = _need(d, "input_hw", where)
        try:
            conv = ConvShape(
                cin, cout, int(kernel[0]), int(kernel[1]), int(hw[0]), int(hw[1]),
                _int_field(d, "stride", where, 1), _int_field(d, "padding", where, 0),
            )
        except (ValueError, IndexError, TypeError) as exc:
            raise WorkloadError(f"{where}: invalid conv geometry: {exc}") from exc
    try:
        return LayerSpec(kind, cin, cout, G, P, conv)
    except WorkloadError as exc:
        raise WorkloadError(f"{where}: {exc}") from None


def workload_from_dict(d: dict) -> Workload:
    if not isinstance(d, dict):
        raise WorkloadError("workload file must hold a JSON object")
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise WorkloadError(f"field 'format_version' must be {FORMAT_VERSION}, got {version!r}")
    name = _need(d, "name", "workload")
    if "networks" in d:
        raw_nets = d["networks"]
    else:
        raw_nets = [_need(d, "layers", "workload")]
    if not isinstance(raw_nets, list) or not all(isinstance(n, list) and n for n in raw_nets):
        raise WorkloadError("field 'layers' must be a non-empty list")
    nets = tuple(
        tuple(_layer_from_dict(l, f"networks[{i}].layers[{j}]") for j, l in enumerate(net))
        for i, net in enumerate(raw_nets)
    )
    bias = d.get("bias", False)
    if not isinstance(bias, bool):
        raise WorkloadError("field 'bias' must be true or false")
    return Workload(
        name=name,
        networks=nets,
        batch=_int_field(d, "batch", "workload", DEFAULT_BATCH),
        seed=_int_field(d, "seed", "workload", 0),
        bias=bias,
        application=d.get("application", ""),
    )


def load_workload(path: str | Path) -> Workload:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WorkloadError(f"{path}: not valid JSON: {exc}") from exc
    return workload_from_dict(d)


def resolve_workload(spec: str, **kwargs) -> Workload:
    """A built-in name or a path to a workload file."""
    p = Path(spec)
    if p.suffix == ".json" or p.exists():
        wl = load_workload(p)
        return replace(wl, **{k: v for k, v in kwargs.items() if v is not None})
    return get_builtin(spec, **{k: v for k, v in kwargs.items() if v is not None})


# ------------------------------------------------------- synthetic parameters


@dataclass(eq=False)
class LayerData:
    spec: LayerSpec
    params: KanLayerParams | DenseLayerParams
    # set for the first layer of a network and for conv layers (own im2col patches)
    inputs: np.ndarray | None = None
    # rescales this layer's accumulators into the next layer's input codes
    requant: Requant | None = None


@dataclass(eq=False)
class WorkloadParams:
    workload: Workload
    layers: list[LayerData] = field(default_factory=list)


def _kan_params(spec: LayerSpec, K: int, N: int, bias: bool, rng) -> KanLayerParams:
    grid, quant = calibrate(UniformGrid.from_domain(*INPUT_DOMAIN, spec.G, spec.P))
    coeffs = rng.integers(-127, 128, size=(K * grid.n_basis, N), dtype=np.int64)
    bias_w = rng.integers(-127, 128, size=(K, N), dtype=np.int64) if bias else None
    return KanLayerParams(K, N, grid, coeffs, quant, 1.0, bias_w)


def _domain_codes(params: KanLayerParams, shape, rng) -> np.ndarray:
    g = params.grid
    t_q0 = knot_code(g, params.quant)
    lo = int(np.ceil(t_q0 + CODE_MAX * g.P / g.n_intervals - 1e-9))
    hi = int(np.floor(t_q0 + CODE_MAX * (g.G + g.P) / g.n_intervals + 1e-9))
    return rng.integers(lo, hi + 1, size=shape, dtype=np.int64)


def _input_codes(params, rows: int, rng) -> np.ndarray:
    if isinstance(params, KanLayerParams):
        return _domain_codes(params, (rows, params.in_features), rng)
    return rng.integers(-128, 128, size=(rows, params.in_features), dtype=np.int64)


def _requant_into(acc: np.ndarray, nxt) -> Requant:
    """Min/max calibration of one layer's accumulators onto the next layer's codes."""
    peak = max(int(np.abs(acc).max()), 1)
    if isinstance(nxt, KanLayerParams):
        g, q = nxt.grid, nxt.quant
        # map the observed range onto the half-width of the next input domain
        half = CODE_MAX * g.G / (2 * g.n_intervals)
        centre = round(float(q.quantize((g.domain[0] + g.domain[1]) / 2)))
        return Requant.from_scale(half / peak, centre, 0, CODE_MAX)
    return Requant.from_scale(127 / peak, 0, -128, 127)


def random_parameters(workload: Workload, seed: int | None = None) -> WorkloadParams:
    """Seeded int8 coefficients, synthetic inputs and calibrated requantization.

    Layer inputs are drawn once per network (and per conv layer); later layers
    of a network consume the requantized output of the previous one, so the
    calibration is reproducible from ``(workload, seed)`` alone.
    """
    seed = workload.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    out = WorkloadParams(workload)
    for net in workload.networks:
        made = []
        for spec in net:
            if spec.kind == DENSE:
                w = rng.integers(-127, 128, size=(spec.in_features, spec.out_features), dtype=np.int64)
                made.append(LayerData(spec, DenseLayerParams(w)))
            else:
                K = spec.conv.patch_size if spec.kind == CONV else spec.in_features
                made.append(LayerData(spec, _kan_params(spec, K, spec.out_features, workload.bias, rng)))
        x = None
        for i, ld in enumerate(made):
            if x is None or ld.spec.kind == CONV:
                ld.inputs = _input_codes(ld.params, ld.spec.rows(workload.batch), rng)
                x = ld.inputs
            acc = layer_forward_quant(x, ld.params)
            nxt = made[i + 1] if i + 1 < len(made) else None
            # flatten/pool between a conv and what follows is not modelled
            if nxt is not None and CONV not in (ld.spec.kind, nxt.spec.kind):
                ld.requant = _requant_into(acc, nxt.params)
                x = ld.requant(acc)
            else:
                x = None
        out.layers.extend(made)
    return out


def network_forward_quant(wp: WorkloadParams) -> list[np.ndarray]:
    """Reference int32 outputs of every layer, chaining through the requantizers."""
    outs = []
    x = None
    for ld in wp.layers:
        if ld.inputs is not None:
            x = ld.inputs
        acc = layer_forward_quant(x, ld.params)
        outs.append(acc)
        x = ld.requant(acc) if ld.requant is not None else None
    return outs
