"""Command line entry point: ``kansim <command> [options]``.

Exit status: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import reports
from .bspline_unit import dump_lut
from .cost_models import UnknownPEKind, arkane_report, dump_constants, load_constants
from .hardware import ArrayConfig, ConfigError, PEKind
from .systolic import simulate_workload
from .tiling import tile_gemm
from .verify import LutFault, calibrated, make_lut, run_all
from .workloads import (
    WorkloadError,
    builtin_names,
    dump_workload,
    network_forward_quant,
    random_parameters,
    resolve_workload,
)

log = logging.getLogger("kansim")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _load_workload(args):
    return resolve_workload(args.workload, batch=args.batch, seed=args.seed,
                            bias=True if args.bias else None)


def _pe_for(text: str, workload) -> PEKind:
    if text.strip().lower() != "nm":
        return PEKind.parse(text)
    grids = set(workload.grids)
    if len(grids) != 1:
        raise ConfigError(f"--pe nm needs a single (G, P) across layers, workload has {sorted(grids)}")
    return PEKind.matched(*grids.pop())


def _config(args, workload) -> ArrayConfig:
    return ArrayConfig(args.rows, args.cols, _pe_for(args.pe, workload), args.weight_load_cycles)


def cmd_verify(args) -> int:
    fault = LutFault(args.fault_degree, args.fault_row, args.fault_bank, args.fault_delta) \
        if args.inject_lut_fault else None
    results = run_all(fault, quick=args.quick)
    failed = [r for r in results if not r.passed]
    if args.format == "json":
        _emit(reports.to_json([vars(r) for r in results]), args.out)
    else:
        lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}" for r in results]
        lines.append("all checks passed" if not failed else f"{len(failed)} check(s) failed: "
                     + ", ".join(r.name for r in failed))
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_run(args) -> int:
    table = load_constants(args.constants)
    wl = _load_workload(args)
    config = _config(args, wl)
    params = None
    if args.functional:
        params = random_parameters(wl)
        res = simulate_workload(wl, config, params, stepped=True)
        ref = network_forward_quant(params)
        bad = [i for i, (a, b) in enumerate(zip(res.outputs, ref)) if not np.array_equal(a, b)]
        if bad:
            log.error("simulator output differs from the reference in layer(s) %s", bad)
            return EXIT_VERIFY
        log.info("functional run: %d layer outputs bit-equal to the reference", len(ref))
    rows = reports.run_workload(wl, config, table, params, per_op=not args.totals_only)
    _emit(reports.to_json(rows) if args.format == "json" else reports.to_csv(rows), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    table = load_constants(args.constants)
    pe = PEKind.parse(args.pe) if args.pe else None
    rows = reports.sweep(tuple(args.sizes), args.batch or 256, args.seed or 0, table, pe, args.jobs)
    _emit(reports.to_json(rows) if args.format == "json" else reports.to_csv(rows), args.out)
    return EXIT_OK


def cmd_parity(args) -> int:
    table = load_constants(args.constants)
    batch, seed = args.batch or 256, args.seed or 0
    par = reports.area_parity(batch=batch, seed=seed, table=table)
    apps = reports.application_utilization(batch=batch, seed=seed)
    report = {
        "scalar": par.scalar.describe(),
        "vector": par.vector.describe(),
        "suite_runtime_ratio": par.suite_ratio,
        "mean_workload_runtime_ratio": par.mean_ratio,
        "cycles": {k: {"scalar": s, "vector": v} for k, (s, v) in par.cycles.items()},
        "utilization": apps,
        "average_utilization_improvement": reports.average_improvement(apps),
        "pairs": reports.parity_pairs_rows(table),
    }
    if args.format == "json":
        _emit(reports.to_json(report), args.out)
        return EXIT_OK
    lines = [
        f"area parity: {report['scalar']} vs {report['vector']} (grid G=5 P=3, MNIST-KAN excluded)",
        f"suite runtime ratio (scalar / N:M vector): {par.suite_ratio:.3f}",
        f"mean per-workload runtime ratio: {par.mean_ratio:.3f}",
        "",
        f"{'application':<14}{'scalar':>10}{'vector':>10}{'gain':>10}",
    ]
    for r in apps:
        lines.append(f"{r['application']:<14}{r['scalar']:>10.4f}{r['vector']:>10.4f}{r['improvement']:>10.4f}")
    lines.append(f"{'average':<14}{'':>20}{report['average_utilization_improvement']:>10.4f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_compare_arkane(args) -> int:
    table = load_constants(args.constants)
    if args.latency is not None:
        table = replace(table, fma_latency=args.latency)
    rep = arkane_report(args.P, args.G, args.M, table)
    if args.format == "json":
        _emit(reports.to_json(rep), args.out)
    else:
        _emit("".join(f"{k}: {v}\n" for k, v in rep.items()), args.out)
    return EXIT_OK


def cmd_dump_lut(args) -> int:
    _, q = calibrated(args.G, args.P)
    _emit(dump_lut(make_lut(args.P, q)), args.out)
    return EXIT_OK


def cmd_dump_schedule(args) -> int:
    wl = _load_workload(args)
    config = _config(args, wl)
    ops = wl.ops
    idx = range(len(ops)) if args.op is None else [args.op]
    text = "".join(tile_gemm(ops[i], config).dump() for i in idx)
    _emit(text, args.out)
    return EXIT_OK


def cmd_dump_workload(args) -> int:
    _emit(dump_workload(_load_workload(args)), args.out)
    return EXIT_OK


def cmd_dump_constants(args) -> int:
    _emit(dump_constants(load_constants(args.constants)), args.out)
    return EXIT_OK


def cmd_list(args) -> int:
    _emit("".join(f"{n}\n" for n in builtin_names()), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kansim", description="KAN inference on weight-stationary systolic arrays")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--constants", help="JSON file overriding the power/area constants")
    common.add_argument("-v", "--verbose", action="store_true")

    wl = argparse.ArgumentParser(add_help=False)
    wl.add_argument("--workload", default="mnist-kan", help="built-in name or workload JSON path")
    wl.add_argument("--batch", type=int, help="rows streamed per GEMM (default 256)")
    wl.add_argument("--seed", type=int, help="parameter seed (default 0)")
    wl.add_argument("--bias", action="store_true", help="add the ReLU bias branch to KAN layers")

    arr = argparse.ArgumentParser(add_help=False)
    arr.add_argument("--rows", type=int, default=16)
    arr.add_argument("--cols", type=int, default=16)
    arr.add_argument("--pe", default="scalar", help="scalar, nm (matched to the workload grid) or nm:N:M")
    arr.add_argument("--weight-load-cycles", type=int, help="fixed preload per tile (default: mapped rows)")

    s = sub.add_parser("verify", parents=[common], help="run the self-check suites")
    s.add_argument("--quick", action="store_true")
    s.add_argument("--inject-lut-fault", action="store_true", help="corrupt one LUT byte (test mode)")
    s.add_argument("--fault-degree", type=int, default=3)
    s.add_argument("--fault-row", type=int, default=100)
    s.add_argument("--fault-bank", type=int, default=0)
    s.add_argument("--fault-delta", type=int, default=16)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("run", parents=[common, wl, arr], help="simulate one workload on one array")
    s.add_argument("--functional", action="store_true",
                   help="also run the cycle-stepped datapath and check it against the reference")
    s.add_argument("--totals-only", action="store_true", help="emit only the workload total row")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="utilization and cycles over array sizes")
    s.add_argument("--sizes", type=int, nargs="+", default=list(reports.SWEEP_SIZES))
    s.add_argument("--pe", help="vector PE kind (default from the constants anchor, 4:8)")
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("parity", parents=[common], help="area-parity runtime and per-application utilization")
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_parity)

    s = sub.add_parser("compare-arkane", parents=[common], help="tabulated unit vs recursive evaluation")
    s.add_argument("--P", type=int, default=3)
    s.add_argument("--G", type=int, default=5)
    s.add_argument("--M", type=int, default=1000, help="number of inputs")
    s.add_argument("--latency", type=int, help="FMA latency in cycles (default from constants)")
    s.set_defaults(func=cmd_compare_arkane)

    s = sub.add_parser("dump-lut", parents=[common], help="hex listing of a calibrated LUT")
    s.add_argument("--P", type=int, default=3)
    s.add_argument("--G", type=int, default=5)
    s.set_defaults(func=cmd_dump_lut)

    s = sub.add_parser("dump-schedule", parents=[common, wl, arr], help="tile schedule of a workload")
    s.add_argument("--op", type=int, help="only this op index")
    s.set_defaults(func=cmd_dump_schedule)

    s = sub.add_parser("dump-workload", parents=[common, wl], help="workload as JSON")
    s.set_defaults(func=cmd_dump_workload)

    s = sub.add_parser("dump-constants", parents=[common], help="power/area constants as JSON")
    s.set_defaults(func=cmd_dump_constants)

    s = sub.add_parser("list", parents=[common], help="built-in workload names")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, WorkloadError, UnknownPEKind, ValueError, IndexError, OSError) as exc:
        print(f"kansim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
