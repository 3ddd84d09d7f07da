"""Command line: quadlab gen-case | verify | sweep-z.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 a numerical singularity (pole, vanishing U0, chart) was hit.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, GenerationError
from .harness.report import emit_report, emit_traces
from .harness.scenario import CaseConfig, Scenario, dump_config, gen_case, parse_config
from .harness.suites import SUITES, CheckReport, case_descriptor, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2, 3

log = logging.getLogger("quadlab")


def _suite_list(values: list[str] | None) -> list[str]:
    names: list[str] = []
    for v in values or ["all"]:
        names.extend(s.strip() for s in v.split(",") if s.strip())
    bad = [s for s in names if s != "all" and s not in SUITES]
    if bad:
        raise ConfigError(f"unknown suite(s): {', '.join(bad)}; choose from {', '.join(SUITES)} or all")
    return names


def _load_config(args) -> CaseConfig:
    text = Path(args.config).read_text() if getattr(args, "config", None) else ""
    overrides = {
        "n": getattr(args, "n", None),
        "seed": getattr(args, "seed", None),
        "steps": getattr(args, "steps", None),
        "tol_alg": getattr(args, "tol_alg", None),
        "tol_ode": getattr(args, "tol_ode", None),
        "z_count": getattr(args, "count", None) or getattr(args, "z_count", None),
        "fault": getattr(args, "fault", None),
        "path": getattr(args, "path_kind", None),
    }
    return parse_config(text, **overrides)


def _print_report(report: CheckReport, out=None) -> None:
    out = out or sys.stdout
    for c in report.checks:
        res = "n/a" if c.max_residual is None else f"{c.max_residual:.3e}"
        flag = "PASS" if c.passed else "FAIL"
        extra = f"  {c.message}" if c.message and not c.passed else ""
        print(f"{flag}  {c.suite:<12} {c.name:<36} {res:>10} <= {c.tol:.0e}{extra}", file=out)
    verdict = "PASS" if report.passed else ("SINGULAR" if report.singular else "FAIL")
    print(f"{verdict}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed", file=out)


def _finish(report: CheckReport, args) -> int:
    _print_report(report)
    try:
        if args.report:
            emit_report(report, args.report)
        if getattr(args, "trace", None):
            emit_traces(report, args.trace)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return report.exit_code()


def cmd_gen_case(args) -> int:
    cfg = _load_config(args)
    sc = gen_case(cfg)
    text = dump_config(sc.resolved_config())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    suites = _suite_list(args.suite)
    sc = gen_case(cfg)
    report = run_suite(sc, suites, trace=bool(args.trace))
    return _finish(report, args)


def _one_z(job) -> CheckReport:
    sc, suites = job
    return run_suite(sc, suites, trace=True)


def sweep(sc: Scenario, suites: list[str], workers: int = 1) -> CheckReport:
    """Run the selected suites once per z; cases are independent and merged in z order."""
    jobs = [(replace(sc, params=[p], pair_seeds=[s]), suites) for p, s in zip(sc.params, sc.pair_seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_one_z, jobs))
    else:
        parts = [_one_z(j) for j in jobs]
    merged = CheckReport(case_descriptor(sc))
    for k, part in enumerate(parts):
        for c in part.checks:
            c.name = c.name.replace("[z0]", f"[z{k}]")
            if "[z" not in c.name:
                c.name = f"{c.name}[z{k}]"
        merged.checks.extend(part.checks)
        for key, rows in part.traces.items():
            merged.traces[key.replace("z0", f"z{k}")] = rows
    return merged


def cmd_sweep_z(args) -> int:
    cfg = _load_config(args)
    if cfg.z is None and args.count is None:
        cfg = replace(cfg, z_count=10)
    suites = _suite_list(args.suite or ["backlund,commutation"])
    sc = gen_case(cfg)
    report = sweep(sc, suites, args.workers)
    return _finish(report, args)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadlab", description="Numerical checks for Backlund and Hazzidakis transformations of generic quadrics.")
    p.add_argument("-v", "--verbose", action="store_true", help="log scenario generation details")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--n", type=int, help="quadric dimension n (2..4)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--fault", choices=("none", "r0_orth", "u0_singular"), help="inject a fault after generation")
        sp.add_argument("--path", dest="path_kind", choices=("random", "zero"), help="path family")

    g = sub.add_parser("gen-case", help="generate a case and print its resolved config")
    common(g)
    g.add_argument("--z-count", type=int, dest="z_count")
    g.add_argument("--out", help="write the config here instead of stdout")
    g.set_defaults(func=cmd_gen_case)

    def run_opts(sp):
        common(sp)
        sp.add_argument("--suite", action="append", help=f"{'|'.join(SUITES)}|all (repeatable or comma separated)")
        sp.add_argument("--tol-alg", type=float, dest="tol_alg")
        sp.add_argument("--tol-ode", type=float, dest="tol_ode")
        sp.add_argument("--steps", type=int)
        sp.add_argument("--report", help="write the JSON report here")
        sp.add_argument("--trace", help="write CSV trajectory traces into this directory")

    v = sub.add_parser("verify", help="run check suites on one case")
    run_opts(v)
    v.add_argument("--z-count", type=int, dest="z_count")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep-z", help="run the per-z suites over many z values in parallel")
    run_opts(s)
    s.add_argument("--count", type=int, help="number of z values (default 10)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep_z)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationError as exc:
        print(f"error: case generation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
