"""Command-line surface: verification commands and the pricing benchmark.

Machine-first output: CSV goes to stdout (or --out), a short human summary to
stderr.  Exit codes: 0 success, 1 verification failure, 2 usage error.  With
identical arguments and seed every subcommand's primary output is
byte-identical; wall-clock timings are therefore excluded from the CSV unless
--timings is passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .freealg import FLOAT
from .heston_bench import (
    BenchConfig,
    BenchmarkResult,
    Cell,
    HestonParams,
    REFERENCE_PRICE,
    convergence_study,
    price_cell,
    result_rows,
)
from .moment_match import UPPER, LOWER, residual_table, solution_params
from .rk_trees import ButcherTableau, check_order
from .rk_integrator import builtin_tableau
from .sampling import MC, QMC

FLOAT_TOL = 1e-12


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _u_value(text: str) -> Fraction:
    u = _fraction(text)
    if u < Fraction(1, 2):
        raise argparse.ArgumentTypeError(f"u must be >= 1/2, got {text}")
    return u


def _perturbation(text: str) -> tuple[str, Fraction]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("perturbation must look like R12=+0.1")
    key, _, val = text.partition("=")
    key = key.strip().lower()
    if key not in ("r11", "r12", "r22"):
        raise argparse.ArgumentTypeError(f"only R11/R12/R22 can be perturbed, got {key!r}")
    return key, _fraction(val.strip())


def _open_out(path: str | None):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _emit(lines, path: str | None) -> None:
    out = _open_out(path)
    try:
        for line in lines:
            print(line, file=out)
    finally:
        if out is not sys.stdout:
            out.close()


# ---------------------------------------------------------------------------
# verify-moments
# ---------------------------------------------------------------------------


def cmd_verify_moments(args) -> int:
    params = solution_params(args.u, args.branch)
    for key, delta in args.perturb:
        value = delta if params.is_exact else float(delta)
        params = params.perturbed(**{key: value})
    rows = residual_table(params, args.m, args.d)
    tol = FLOAT_TOL if params.mode == FLOAT else 0
    lines = ["word,coefficient,target,residual"]
    worst = 0.0
    for word, coeff, target, residual in rows:
        lines.append(f"{word},{coeff},{target},{residual}")
        worst = max(worst, abs(float(residual)))
    _emit(lines, args.out)
    status = "PASS" if worst <= tol else "FAIL"
    print(f"verify-moments: u={args.u} branch={args.branch} m={args.m} d={args.d} "
          f"mode={params.mode} words={len(rows)} max|residual|={worst:.3e} {status}",
          file=sys.stderr)
    return 0 if worst <= tol else 1


# ---------------------------------------------------------------------------
# verify-rk-order
# ---------------------------------------------------------------------------


def _load_tableau(spec: str) -> ButcherTableau:
    if Path(spec).suffix == ".json" or Path(spec).exists():
        try:
            return ButcherTableau.from_json_file(spec)
        except (OSError, ValueError, KeyError) as exc:
            raise argparse.ArgumentTypeError(f"cannot load tableau file {spec}: {exc}") from exc
    try:
        return builtin_tableau(spec)
    except KeyError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_verify_rk(args) -> int:
    tableau = args.tableau
    report = check_order(tableau, args.order)
    lines = ["tree,vertices,lhs,rhs,pass"]
    for cond in report:
        lines.append(f"{cond.tree},{cond.tree.order},{cond.lhs},{cond.rhs},"
                     f"{int(cond.passed)}")
    _emit(lines, args.out)
    failures = sum(1 for c in report if not c.passed)
    status = "PASS" if failures == 0 else "FAIL"
    print(f"verify-rk-order: tableau={tableau.name or 'custom'} order={args.order} "
          f"conditions={len(report)} failures={failures} {status}", file=sys.stderr)
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# price / converge
# ---------------------------------------------------------------------------


def _heston_from_mapping(data: dict) -> HestonParams:
    return HestonParams(**data)


def _config_from_file(path: str | None, args) -> BenchConfig:
    raw = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    heston = _heston_from_mapping(raw.get("heston", {}))
    cfg = BenchConfig(
        heston=heston,
        u=Fraction(str(raw.get("u", "3/4"))),
        branch=raw.get("branch", LOWER),
        nn_tableau=raw.get("nn_tableau", "rk5-butcher"),
        nv_tableau=raw.get("nv_tableau", "rk5-butcher"),
        seed=int(raw.get("seed", 0)),
        sobol_skip=int(raw.get("sobol_skip", 1)),
        reference=float(raw.get("reference", REFERENCE_PRICE)),
        workers=raw.get("workers"),
    )
    # explicit flags override the file
    overrides = {}
    if getattr(args, "u", None) is not None:
        overrides["u"] = args.u
    if getattr(args, "branch", None) is not None:
        overrides["branch"] = args.branch
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "sobol_skip", None) is not None:
        overrides["sobol_skip"] = args.sobol_skip
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def cmd_price(args) -> int:
    config = _config_from_file(args.config, args)
    cell = Cell(args.scheme, args.n, args.samples, args.mode, use_romberg=args.romberg)
    result = BenchmarkResult(config.reference, (price_cell(config, cell),))
    _emit(result_rows(result, timings=args.timings), args.out)
    c = result.cells[0]
    err = "n/a" if c.error is None else f"{c.error:.3e}"
    print(f"price: {c.kind} n={c.partitions} M={c.samples} {c.mode}"
          f"{' +romberg' if c.use_romberg else ''} estimate={c.estimate:.10f} "
          f"error={err} reference={config.reference} [{c.seconds:.1f}s]", file=sys.stderr)
    return 0


def _cells_from_mapping(raw: dict) -> list[Cell]:
    cells = []
    for item in raw.get("cells", []):
        ns = item["n"] if isinstance(item["n"], list) else [item["n"]]
        ms = item["samples"] if isinstance(item["samples"], list) else [item["samples"]]
        for n in ns:
            for m in ms:
                cells.append(Cell(item["scheme"], int(n), int(m), item.get("mode", QMC),
                                  use_romberg=bool(item.get("romberg", False))))
    if not cells:
        raise argparse.ArgumentTypeError("config contains no cells")
    return cells


def cmd_converge(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    config = _config_from_file(args.config, args)
    cells = _cells_from_mapping(raw)
    result = convergence_study(config, cells)
    _emit(result_rows(result, timings=args.timings), args.out)
    total = sum(c.seconds for c in result.cells)
    print(f"converge: {len(result.cells)} cells, reference={config.reference} "
          f"[{total:.1f}s]", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdeweak",
        description="Moment-matched splitting scheme for weak SDE approximation: "
                    "symbolic verification, certified Runge-Kutta order checks, and "
                    "the Heston Asian-option benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    vm = sub.add_parser("verify-moments",
                        help="check E[exp(Z1)exp(Z2)] against exp(v0 + (1/2) sum v_i^2)")
    vm.add_argument("--u", type=_u_value, default=Fraction(3, 4),
                    help="family parameter, a rational >= 1/2 (default 3/4)")
    vm.add_argument("--branch", choices=(UPPER, LOWER), default=LOWER)
    vm.add_argument("--m", type=int, default=5, help="truncation degree (default 5)")
    vm.add_argument("--d", type=int, default=2, help="Brownian dimension (default 2)")
    vm.add_argument("--perturb", type=_perturbation, action="append", default=[],
                    metavar="KEY=DELTA", help="shift an R entry, e.g. R12=+0.1")
    vm.add_argument("--out", help="write CSV here instead of stdout")
    vm.set_defaults(func=cmd_verify_moments)

    vr = sub.add_parser("verify-rk-order", help="certify a Butcher tableau by rooted trees")
    vr.add_argument("--tableau", required=True, type=_load_tableau,
                    help="builtin name (rk5-butcher, rk7-butcher) or a JSON file")
    vr.add_argument("--order", type=int, required=True)
    vr.add_argument("--out", help="write CSV here instead of stdout")
    vr.set_defaults(func=cmd_verify_rk)

    def add_run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--u", type=_u_value, default=None)
        p.add_argument("--branch", choices=(UPPER, LOWER), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--sobol-skip", dest="sobol_skip", type=int, default=None)
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default: all cores; results identical)")
        p.add_argument("--timings", action="store_true",
                       help="append a volatile seconds column to the CSV")
        p.add_argument("--out", help="write CSV here instead of stdout")

    pr = sub.add_parser("price", help="price the Asian option with one scheme setting")
    pr.add_argument("--scheme", choices=("nn", "em", "nv"), required=True)
    pr.add_argument("--n", type=int, required=True, help="partitions (fine level for Romberg)")
    pr.add_argument("--romberg", action="store_true",
                    help="combine runs at n and n/2 at the scheme's weak order")
    pr.add_argument("--mode", choices=(QMC, MC), default=QMC)
    pr.add_argument("--samples", type=int, required=True)
    add_run_flags(pr)
    pr.set_defaults(func=cmd_price)

    cv = sub.add_parser("converge", help="run the benchmark cells listed in a config file")
    add_run_flags(cv)
    cv.set_defaults(func=cmd_converge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "converge" and not args.config:
        parser.error("converge requires --config")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"sdeweak {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
