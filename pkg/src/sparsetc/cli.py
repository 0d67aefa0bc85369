"""Command-line front door: run expressions, benchmark kernels, generate inputs.

Exit codes: 2 usage, 3 expression parse error, 4 unreadable or malformed
data, 5 shape mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import zlib

import numpy as np

from .engine import execute, run_with_report
from .expr import ParseError, TensorExpr, parse, parse_einsum
from .format_inference import explain_format
from .formats import LevelFormat, TensorFormat, coo, format_by_name
from .matrix_market import MatrixMarketError, read_matrix_market, write_matrix_market
from .scheduler import schedule, schedule_to_dict
from .tensor import ShapeError, Tensor, build_from_entries, from_dense, nnz, to_dense
from .tiling import DEFAULT_TILE_SIZE, tile

KERNEL_EXPRS = {
    "spmv": "y(i) = A(i,j) * x(j)",
    "spmm": "C(i,k) = A(i,j) * B(j,k)",
    "spgemm": "C(i,k) = A(i,j) * B(j,k)",
    "sddmm": "D(i,j) = A(i,j) * B(i,k) * C(k,j)",
}


def _tensor_seed(base: int, name: str) -> int:
    return (base + zlib.crc32(name.encode())) % (2**32)


def synthetic_entries(rows: int, cols: int, count: int, rng) -> list:
    """``count`` distinct uniformly placed coordinates with values in [-1, 1]."""
    if count > rows * cols:
        raise ValueError(f"cannot place {count} distinct entries in a {rows}x{cols} matrix")
    flat = rng.choice(rows * cols, size=count, replace=False)
    vals = rng.uniform(-1.0, 1.0, size=count)
    return [((int(f) // cols, int(f) % cols), float(v)) for f, v in zip(flat, vals)]


def gen_matrix(rows: int, cols: int, density: float, seed: int, fmt: TensorFormat | None = None,
               name: str = "A") -> Tensor:
    """Deterministic random matrix with exactly round(rows*cols*density) entries."""
    rng = np.random.default_rng(seed)
    count = round(rows * cols * density)
    entries = synthetic_entries(rows, cols, count, rng)
    return build_from_entries((rows, cols), fmt or coo(rows, cols), entries, name=name)


def _parse_format_flags(pairs, default=None):
    out = {}
    for item in pairs or ():
        if "=" in item:
            name, value = item.split("=", 1)
            out[name.strip()] = value.strip().lower()
        elif default is not None:
            out[default] = item.strip().lower()
        else:
            raise ValueError(f"--format expects NAME=FORMAT, got {item!r}")
    return out


def _load_tensor(name: str, source: str, fmt_name: str | None, seed: int) -> Tensor:
    if source.startswith("random:"):
        spec = source[len("random:") :]
        parts = spec.split(":")
        dims = parts[0].lower().split("x")
        opts = dict(p.split("=", 1) for p in parts[1:])
        rng = np.random.default_rng(_tensor_seed(seed, name))
        if len(dims) == 1:
            n = int(dims[0])
            if "density" in opts or "nnz" in opts:
                count = int(opts.get("nnz", round(n * float(opts.get("density", 0)))))
                flat = rng.choice(n, size=count, replace=False)
                vals = rng.uniform(-1, 1, size=count)
                fmt = (
                    format_by_name(fmt_name, (n,))
                    if fmt_name
                    else TensorFormat((n,), (0,), (LevelFormat.COMPRESSED,))
                )
                return build_from_entries(
                    (n,), fmt, [((int(f),), float(v)) for f, v in zip(flat, vals)], name=name
                )
            arr = rng.uniform(-1, 1, size=n)
            if fmt_name:
                return from_dense(arr, format_by_name(fmt_name, (n,)), name=name)
            return from_dense(arr, name=name)
        rows, cols = int(dims[0]), int(dims[1])
        if "density" in opts or "nnz" in opts:
            count = int(opts["nnz"]) if "nnz" in opts else round(rows * cols * float(opts["density"]))
            entries = synthetic_entries(rows, cols, count, rng)
            fmt = format_by_name(fmt_name or "csr", (rows, cols))
            return build_from_entries((rows, cols), fmt, entries, name=name)
        arr = rng.uniform(-1, 1, size=(rows, cols))
        fmt = format_by_name(fmt_name, (rows, cols)) if fmt_name else None
        return from_dense(arr, fmt, name=name)
    t = read_matrix_market(source, name=name)
    if fmt_name:
        from .tensor import convert

        return convert(t, format_by_name(fmt_name, t.shape))
    return t


def _bindings_from_args(args) -> dict[str, Tensor]:
    formats = _parse_format_flags(args.format)
    bindings = {}
    for spec in args.tensor or ():
        if "=" not in spec:
            raise ValueError(f"--tensor expects NAME=SOURCE, got {spec!r}")
        name, source = spec.split("=", 1)
        name = name.strip()
        bindings[name] = _load_tensor(name, source.strip(), formats.get(name), args.seed)
    return bindings


def _parse_expression(text: str, bindings: dict[str, Tensor], order: list[str]) -> TensorExpr:
    if "->" in text:
        operands = [bindings[n] for n in order]
        return parse_einsum(text, operands)
    return parse(text, bindings)


def _write_result(path: str, t: Tensor) -> None:
    if t.order == 2 and t.format.has_sparse_levels:
        write_matrix_market(path, t)
        return
    arr = to_dense(t)
    with open(path, "w", encoding="ascii") as fh:
        if arr.ndim == 1:
            for v in arr:
                fh.write(f"{float(v)!r}\n")
        else:
            grid = arr.reshape(arr.shape[0], -1)
            for row in grid:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_run(args) -> int:
    bindings = _bindings_from_args(args)
    order = [spec.split("=", 1)[0].strip() for spec in args.tensor or ()]
    e = _parse_expression(args.expr, bindings, order)
    out_fmt = None
    formats = _parse_format_flags(args.format)
    if e.output_name in formats:
        out_fmt = format_by_name(formats[e.output_name], e.output_shape)
    result, counter, report = run_with_report(
        e, out_format=out_fmt, tile_size=args.tile_size, tiling=not args.no_tiling
    )
    payload = {
        "expression": args.expr,
        "path": report["path"],
        "inferred_format": report["inferred_format"],
        "schedule": report["schedule"],
        "counters": report["counters"],
        "wall_time_ns": report["wall_time_ns"],
    }
    if not args.explain_schedule:
        payload["schedule"] = None if payload["schedule"] is None else {
            k: payload["schedule"][k] for k in ("loop_order", "workspace", "transposes", "tiles")
        }
    if args.explain_format:
        payload["format_derivation"] = explain_format(e)
    if args.out:
        _write_result(args.out, result)
        payload["result_file"] = args.out
    _emit_json(payload, args.json)
    if args.emit_counters and counter is not None and args.json:
        print(json.dumps(counter.as_dict()))
    return 0


def cmd_explain(args) -> int:
    bindings = _bindings_from_args(args)
    order = [spec.split("=", 1)[0].strip() for spec in args.tensor or ()]
    e = _parse_expression(args.expr, bindings, order)
    want_schedule = args.explain_schedule or not args.explain_format
    want_format = args.explain_format or not args.explain_schedule
    payload = {"expression": args.expr}
    if want_format:
        payload["format_derivation"] = explain_format(e)
    if want_schedule:
        s = schedule(e)
        if not args.no_tiling:
            s = tile(e, s, args.tile_size)
        payload["schedule"] = schedule_to_dict(s)
    _emit_json(payload, args.json)
    return 0


def _truncate_square(t: Tensor) -> Tensor:
    n = min(t.shape)
    if t.shape == (n, n):
        return t
    from .tensor import stored_entries

    coords, vals = stored_entries(t)
    keep = (coords[:, 0] < n) & (coords[:, 1] < n)
    entries = [((int(i), int(j)), float(v)) for (i, j), v in zip(coords[keep], vals[keep])]
    fmt_name = t.format.name()
    fmt = format_by_name(fmt_name if fmt_name in ("csr", "csc", "dcsr", "coo", "dense") else "coo", (n, n))
    return build_from_entries((n, n), fmt, entries, name=t.name)


def _transpose_entries(t: Tensor) -> Tensor:
    from .tensor import stored_entries

    coords, vals = stored_entries(t)
    entries = [((int(j), int(i)), float(v)) for (i, j), v in zip(coords, vals)]
    fmt_name = t.format.name()
    shape = (t.shape[1], t.shape[0])
    fmt = format_by_name(fmt_name if fmt_name in ("csr", "csc", "dcsr", "coo", "dense") else "coo", shape)
    return build_from_entries(shape, fmt, entries, name=t.name + "T")


def bench_kernel(kernel: str, A: Tensor, k: int, reps: int, warmup: int, seed: int,
                 tile_size: int = DEFAULT_TILE_SIZE, tiling: bool = True) -> dict:
    """Benchmark one kernel on one sparse matrix; timing covers execution only."""
    rng = np.random.default_rng(seed)
    rows, cols = A.shape
    if kernel == "spmv":
        x = from_dense(rng.uniform(-1, 1, cols), name="x")
        e = parse(KERNEL_EXPRS[kernel], {"A": A, "x": x})
    elif kernel == "spmm":
        B = from_dense(rng.uniform(-1, 1, (cols, k)), name="B")
        e = parse(KERNEL_EXPRS[kernel], {"A": A, "B": B})
    elif kernel == "spgemm":
        A = _truncate_square(A)
        B = _transpose_entries(A)
        B = Tensor("B", B.shape, B.storage)
        e = parse(KERNEL_EXPRS[kernel], {"A": A, "B": B})
    elif kernel == "sddmm":
        B = from_dense(rng.uniform(-1, 1, (rows, k)), name="B")
        C = from_dense(rng.uniform(-1, 1, (k, cols)), name="C")
        e = parse(KERNEL_EXPRS[kernel], {"A": A, "B": B, "C": C})
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    s = schedule(e)
    if tiling:
        s = tile(e, s, tile_size)
    counter = None
    for _ in range(warmup):
        _, counter = execute(s)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        _, counter = execute(s)
        times.append(time.perf_counter_ns() - t0)
    arr = np.asarray(times, dtype=np.float64)
    return {
        "name": A.name,
        "rows": A.shape[0],
        "cols": A.shape[1],
        "nnz": nnz(A),
        "mean_ns": float(arr.mean()),
        "std_ns": float(arr.std()),
        "counters": counter.as_dict(),
        "loop_order": [v.name for v in s.loop_order],
    }


def _parse_synthetic(spec: str):
    parts = spec.split(":")
    rows, cols = (int(x) for x in parts[0].lower().split("x"))
    opts = dict(p.split("=", 1) for p in parts[1:])
    if "nnz" in opts:
        count = int(opts["nnz"])
    elif "density" in opts:
        count = round(rows * cols * float(opts["density"]))
    else:
        raise ValueError(f"synthetic spec needs nnz= or density=: {spec!r}")
    return rows, cols, count


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise ValueError("--reps must be at least 1")
    if args.warmup < 0:
        raise ValueError("--warmup must be non-negative")
    fmt_name = _parse_format_flags(args.format, default="A").get("A")
    if fmt_name is None:
        fmt_name = "coo" if args.kernel == "spgemm" else "csr"
    results = []
    sources: list[tuple[str, Tensor]] = []
    for path in args.matrix or ():
        t = read_matrix_market(path, name=path)
        from .tensor import convert

        sources.append((path, convert(t, format_by_name(fmt_name, t.shape))))
    for spec in args.synthetic or ():
        rows, cols, count = _parse_synthetic(spec)
        rng = np.random.default_rng(args.seed)
        entries = synthetic_entries(rows, cols, count, rng)
        t = build_from_entries(
            (rows, cols), format_by_name(fmt_name, (rows, cols)), entries, name=spec
        )
        sources.append((spec, t))
    if not sources:
        raise ValueError("bench requires --matrix or --synthetic")
    for name, t in sources:
        results.append(
            bench_kernel(
                args.kernel,
                t,
                args.k,
                args.reps,
                args.warmup,
                args.seed,
                args.tile_size,
                not args.no_tiling,
            )
        )
    payload = {
        "kernel": args.kernel,
        "format": fmt_name,
        "k": args.k,
        "reps": args.reps,
        "warmup": args.warmup,
        "seed": args.seed,
        "results": results,
    }
    _emit_json(payload, args.json)
    return 0


def cmd_gen(args) -> int:
    t = gen_matrix(args.rows, args.cols, args.density, args.seed)
    write_matrix_market(args.out, t)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sparsetc",
        description="Sparse tensor algebra engine: run expressions, benchmark kernels, generate inputs.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bench=False):
        sp.add_argument("--tile-size", type=int, default=DEFAULT_TILE_SIZE)
        sp.add_argument("--no-tiling", action="store_true")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--json", metavar="PATH", default=None, help="write the JSON report here")
        sp.add_argument(
            "--format",
            action="append",
            metavar="NAME=FMT" if not bench else "FMT",
            help="storage format (csr|csc|dcsr|coo|dense)",
        )

    rp = sub.add_parser("run", help="evaluate an expression over named tensors")
    rp.add_argument("expr", help='e.g. "y(i) = A(i,j) * x(j)" or einsum "ij,jk->ik"')
    rp.add_argument("--tensor", action="append", metavar="NAME=PATH|NAME=random:SPEC")
    rp.add_argument("--out", metavar="PATH", help="write the result tensor here")
    rp.add_argument("--emit-counters", action="store_true")
    rp.add_argument("--explain-schedule", action="store_true")
    rp.add_argument("--explain-format", action="store_true")
    common(rp)
    rp.set_defaults(func=cmd_run)

    ep = sub.add_parser("explain", help="print the schedule and format derivation as JSON")
    ep.add_argument("expr")
    ep.add_argument("--tensor", action="append", metavar="NAME=PATH|NAME=random:SPEC")
    ep.add_argument("--explain-schedule", action="store_true")
    ep.add_argument("--explain-format", action="store_true")
    common(ep)
    ep.set_defaults(func=cmd_explain)

    bp = sub.add_parser("bench", help="benchmark a standard kernel")
    bp.add_argument("kernel", choices=sorted(KERNEL_EXPRS))
    bp.add_argument("--matrix", action="append", metavar="PATH")
    bp.add_argument("--synthetic", action="append", metavar="RxC:nnz=N|RxC:density=D")
    bp.add_argument("--reps", type=int, default=10)
    bp.add_argument("--warmup", type=int, default=5)
    bp.add_argument("--k", type=int, default=16, help="dense columns for spmm/sddmm")
    common(bp, bench=True)
    bp.set_defaults(func=cmd_bench)

    gp = sub.add_parser("gen", help="generate a random Matrix Market file")
    gp.add_argument("rows", type=int)
    gp.add_argument("cols", type=int)
    gp.add_argument("density", type=float)
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--out", required=True, metavar="PATH")
    gp.set_defaults(func=cmd_gen)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (MatrixMarketError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except ShapeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 5
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
