"""Command line front end: ``convexfem <demo> [options]``.

Every run writes into ``<out>/<demo>_<variant>_n<n>/``: ``summary.csv`` (always,
also for failed solves), ``diagnostics.txt``, ``solution.vtk`` and any demo
specific tables, images and exported programs.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time

from .demos import DEFAULTS, RUNNERS, DemoConfig, DemoResult, InvalidConfigError
from .io import ImageParseError, UnsupportedImageError, atomic_write, export_program, write_image, write_vtk

EXIT_OK, EXIT_NONOPTIMAL, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4
SUMMARY_HEADER = ["demo", "n", "variant", "objective", "gap", "iterations", "status"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convexfem", description="Run a convex finite element demo.")
    p.add_argument("demo", choices=sorted(DEFAULTS))
    p.add_argument("--n", type=int, default=None, help="mesh resolution (cells per side)")
    p.add_argument("--diagonal", choices=["left", "right", "crossed"], default=None)
    p.add_argument("--variant", default=None, help="discretization variant (cheeger: cg1 cg2 dg0 dg1 dual-rt)")
    p.add_argument("--norm", choices=["l1", "l2", "linf"], default="l2")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="physical parameter override, may be repeated")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--tol", type=float, default=1e-8, help="solver feasibility and gap tolerance")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--export-program", action="store_true", help="write the assembled conic program as text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true", help="echo the solver log to stderr")
    return p


def parse_params(items) -> dict:
    params = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise InvalidConfigError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = val.strip()
    return params


def config_from_args(args) -> DemoConfig:
    return DemoConfig(args.demo, n=args.n, diagonal=args.diagonal, variant=args.variant, norm=args.norm,
                      params=parse_params(args.param), out=args.out, tol=args.tol,
                      export_program=args.export_program, seed=args.seed, max_iter=args.max_iter)


def run_dir(cfg: DemoConfig) -> str:
    return os.path.join(cfg.out, f"{cfg.demo}_{cfg.variant_label}_n{cfg.n}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_row(cfg: DemoConfig, res: DemoResult | None, status: str):
    if res is None:
        return [cfg.demo, cfg.n, cfg.variant_label, "nan", "nan", 0, status]
    return [cfg.demo, cfg.n, cfg.variant_label, f"{res.objective:.12g}", f"{res.gap:.3e}", res.iterations, status]


def write_outputs(cfg: DemoConfig, res: DemoResult | None, status: str, log_lines, elapsed: float,
                  error: str | None = None) -> str:
    """Write all artifacts of one run; the summary and diagnostics come first."""
    d = run_dir(cfg)
    os.makedirs(d, exist_ok=True)
    atomic_write(os.path.join(d, "summary.csv"), _csv_text(SUMMARY_HEADER, [summary_row(cfg, res, status)]))
    diag = [f"demo: {cfg.demo}", f"variant: {cfg.variant_label}", f"n: {cfg.n}", f"diagonal: {cfg.diagonal}",
            f"params: {cfg.params}", f"tol: {cfg.tol:g}", f"status: {status}", f"wall_time: {elapsed:.3f} s"]
    if error:
        diag.append(f"error: {error}")
    if res is not None:
        diag += [f"objective: {res.objective:.12g}", f"iterations: {res.iterations}", f"gap: {res.gap:.3e}"]
        diag += [f"metric {k}: {v}" for k, v in sorted(res.metrics.items()) if _is_scalar(v)]
    diag += ["", "solver log:"] + list(log_lines)
    atomic_write(os.path.join(d, "diagnostics.txt"), "\n".join(diag) + "\n")
    if res is None:
        return d
    if res.mesh is not None and res.fields:
        buf = io.StringIO()
        write_vtk(buf, res.mesh, res.fields, title=f"{cfg.demo} {cfg.variant_label}")
        atomic_write(os.path.join(d, "solution.vtk"), buf.getvalue())
    for name, (header, rows) in res.tables.items():
        atomic_write(os.path.join(d, f"{name}.csv"), _csv_text(header, rows))
    for name, img in res.images.items():
        ext = "pgm" if img.channels == 1 else "ppm"
        atomic_write(os.path.join(d, f"{name}.{ext}"), write_image(img), mode="wb")
    if cfg.export_program:
        for k, prog in enumerate(res.programs):
            suffix = "" if len(res.programs) == 1 else f"_{k}"
            atomic_write(os.path.join(d, f"program{suffix}.txt"), export_program(prog))
    return d


def _is_scalar(v) -> bool:
    return isinstance(v, (int, float, str, bool)) or getattr(v, "ndim", None) == 0


def run_demo(cfg: DemoConfig, verbose: bool = False, stream=None) -> int:
    """Run one demo, write its artifacts and return the process exit code."""
    stream = sys.stdout if stream is None else stream
    log_lines = []

    def log(line):
        log_lines.append(line)
        if verbose:
            print(line, file=sys.stderr)

    t0 = time.perf_counter()
    res, error = None, None
    try:
        res = RUNNERS[cfg.demo](cfg, log=log)
        status = res.status
    except (OSError, ImageParseError, UnsupportedImageError) as exc:
        status, error = "io_error", f"{type(exc).__name__}: {exc}"
    except InvalidConfigError as exc:
        status, error = "invalid_config", str(exc)
    elapsed = time.perf_counter() - t0
    try:
        d = write_outputs(cfg, res, status, log_lines, elapsed, error)
    except OSError as exc:
        print(f"convexfem: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    print(",".join(str(v) for v in summary_row(cfg, res, status)), file=stream)
    if error:
        print(f"convexfem: {error}", file=sys.stderr)
        return EXIT_IO if status == "io_error" else EXIT_CONFIG
    if res.metrics:
        print("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in sorted(res.metrics.items()) if _is_scalar(v)),
              file=stream)
    print(f"  results in {d} ({elapsed:.1f} s)", file=stream)
    return EXIT_OK if status == "optimal" else EXIT_NONOPTIMAL


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except InvalidConfigError as exc:
        print(f"convexfem: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_demo(cfg, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
