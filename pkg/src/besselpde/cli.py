"""Command-line front-end.

Exit codes: 0 when every check passes (or the solve converged), 1 when a
check fails or the solver does not converge, 2 for usage and config errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import checks
from ._version import __version__
from .config import ConfigError, RunConfig, load_config, parse_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("besselpde")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _summary(suites) -> None:
    for s in suites:
        value = "-" if s.value is None else f"{s.value:.3e}"
        limit = "-" if s.threshold is None else f"{s.threshold:.3e}"
        print(f"{s.name:20s} {s.status.upper():8s} value={value} threshold={limit}")


def cmd_kernel_check(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    suites = checks.kernel_suites(cfg, threads=threads)
    rep = checks.report(cfg, "kernel-check", suites)
    _write_json(out / "kernel_check.json", rep)
    _summary(suites)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_solve(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    u, rep, extras = checks.run_solve(cfg, threads=threads)
    ok = rep.converged and rep.final_mild_residual <= cfg.solver.tol
    body = checks.report(cfg, "solve", solver_report=rep.to_dict(), passed=ok, **extras)
    _write_json(out / "solve_report.json", body)
    (out / "solution.csv").write_text(u.to_csv(), encoding="utf-8")
    (out / "solution.json").write_text(
        u.to_json(version=__version__, preset=cfg.problem.preset), encoding="utf-8"
    )
    status = "converged" if ok else "FAILED"
    print(
        f"solve {status}: iterations={rep.iterations} "
        f"mild_residual={rep.final_mild_residual:.3e} lambda={rep.lam:.4g}"
    )
    for key, value in extras.items():
        print(f"{key} = {value:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_mc_validate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    suites = checks.mc_suites(cfg, threads=threads)
    rep = checks.report(cfg, "mc-validate", suites)
    _write_json(out / "mc_validate.json", rep)
    _summary(suites)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_properties(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    codes = {
        "kernel-check": cmd_kernel_check(cfg, out, threads),
        "solve": cmd_solve(cfg, out, threads),
        "mc-validate": cmd_mc_validate(cfg, out, threads),
    }
    _write_json(
        out / "properties.json",
        checks.report(cfg, "properties", exit_codes=codes, passed=not any(codes.values())),
    )
    return max(codes.values())


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "solve": cmd_solve,
    "mc-validate": cmd_mc_validate,
    "properties": cmd_properties,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="besselpde",
        description="Bessel semigroup checks, semilinear solver and Monte Carlo validation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI config file (defaults are used when omitted)")
    parser.add_argument("--out", help="output directory (overrides [run] outputs)")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides [mc] seed)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value; may be repeated",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("command", choices=sorted(COMMANDS))
    return parser


def _overrides(items) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        overrides = _overrides(args.set)
        if args.seed is not None:
            overrides["mc.seed"] = str(args.seed)
        if args.out is not None:
            overrides["run.outputs"] = args.out
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = parse_config("", overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.run.outputs)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    return COMMANDS[args.command](cfg, out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
