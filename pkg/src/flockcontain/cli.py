"""Command-line front end.

    flockcontain run SCENARIO [--dt DT] [--t-end T] [--out DIR] [--force] [--plots]
    flockcontain validate SCENARIO
    flockcontain balance --s S --delta D --k KV,KA,KR [--R R] [--E E] [--orientation RAD]
    flockcontain batch DIR [--out DIR] [--jobs N] [--plots]

Exit codes: 0 success, 1 validation failure, 2 numerical abort, 3 I/O error,
64 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .controllers import balance_residual
from .core import validate_scenario
from .engine import NumericalAbort, ScenarioInvalid, run
from .fileio import ScenarioError, ScenarioRejected, parse_scenario, write_outputs
from .scenarios import R_EXPERIMENT

EXIT_OK, EXIT_INVALID, EXIT_ABORT, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("flockcontain")


class _Parser(argparse.ArgumentParser):
    """argparse with the usage-error exit code moved off 2 (taken by aborts)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_triplet(text: str):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected kv,ka,kr, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated gains, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flockcontain", description="Containment of a malicious agent in a flock.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one scenario and write the result bundle")
    r.add_argument("scenario")
    r.add_argument("--dt", type=float)
    r.add_argument("--t-end", type=float)
    r.add_argument("--out", default=None, help="output directory (default runs/<scenario stem>)")
    r.add_argument("--force", action="store_true", help="run even if validation fails")
    r.add_argument("--plots", action="store_true", help="also render PNG figures")

    v = sub.add_parser("validate", help="check a scenario against the standing assumptions")
    v.add_argument("scenario")

    b = sub.add_parser("balance", help="residual force on a malicious agent centred in a polygon")
    b.add_argument("--s", type=int, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--k", type=_k_triplet, required=True)
    b.add_argument("--R", type=float, default=R_EXPERIMENT)
    b.add_argument("--E", type=float, default=15000.0)
    b.add_argument("--orientation", type=float, default=0.0)

    a = sub.add_parser("batch", help="run every *.json in a directory concurrently")
    a.add_argument("directory")
    a.add_argument("--out", default=None, help="output root (default <directory>/runs)")
    a.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    a.add_argument("--plots", action="store_true")
    return p


def _load(path, validate: bool):
    """Parse ``path``; returns (cfg, exit_code)."""
    try:
        return parse_scenario(path, validate=validate), EXIT_OK
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror or exc}", file=sys.stderr)
        return None, EXIT_IO
    except ScenarioRejected as exc:
        print(f"{path}: validation failed", file=sys.stderr)
        for name, detail in exc.report.violations:
            print(f"  {name}: {detail}", file=sys.stderr)
        return None, EXIT_INVALID
    except ScenarioError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return None, EXIT_INVALID


def run_one(path, out_dir, dt=None, t_end=None, force=False, plots=False) -> int:
    cfg, code = _load(path, validate=not force)
    if cfg is None:
        return code
    if dt is not None:
        cfg.dt = dt
    if t_end is not None:
        cfg.t_end = t_end
    code = EXIT_OK
    try:
        rec = run(cfg, force=force)
    except ScenarioInvalid as exc:
        print(f"{path}: validation failed\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalAbort as exc:
        print(f"{path}: numerical abort: {exc}", file=sys.stderr)
        rec, code = exc.record, EXIT_ABORT
    try:
        paths = write_outputs(rec, out_dir)
        if plots:
            from .plotting import render_plots
            paths.update(render_plots(rec, out_dir))
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %s", ", ".join(sorted(str(p) for p in paths.values())))
    print(f"{cfg.name}: {rec.n - 1} steps to t={rec.times[-1]:g} s -> {out_dir}")
    return code


def cmd_run(args) -> int:
    out = args.out or str(Path("runs") / Path(args.scenario).stem)
    return run_one(args.scenario, out, args.dt, args.t_end, args.force, args.plots)


def cmd_validate(args) -> int:
    cfg, code = _load(args.scenario, validate=False)
    if cfg is None:
        return code
    report = validate_scenario(cfg)
    if report.ok:
        print(f"{args.scenario}: pass")
        return EXIT_OK
    print(f"{args.scenario}: fail")
    for name, detail in report.violations:
        print(f"  {name}: {detail}")
    return EXIT_INVALID


def cmd_balance(args) -> int:
    try:
        res = balance_residual(args.s, args.delta, args.k, args.R, args.E, args.orientation)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{res:.3e}")
    return EXIT_OK


def _batch_task(task):
    path, out, plots = task
    return path, run_one(path, out, plots=plots)


def cmd_batch(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return EXIT_IO
    files = sorted(root.glob("*.json"))
    if not files:
        print(f"error: no *.json scenarios in {root}", file=sys.stderr)
        return EXIT_IO
    out_root = Path(args.out) if args.out else root / "runs"
    tasks = [(str(f), str(out_root / f.stem), args.plots) for f in files]
    jobs = max(1, min(args.jobs, len(tasks)))
    if jobs == 1:
        results = [_batch_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_task, tasks))
    worst = EXIT_OK
    for path, code in results:
        print(f"{code}\t{path}")
        worst = max(worst, code)
    return worst


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "balance": cmd_balance, "batch": cmd_batch}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
