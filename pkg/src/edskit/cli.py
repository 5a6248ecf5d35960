"""Command line: ``edskit classify|verify-bt|propagate|flag|catalog``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for bad
input (parse errors, unknown ids, unsupported transformations), 3 when a
computation gives up (flag budget, domain exit).
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np
import sympy

from . import __version__, catalog
from .backlund import compatibility_pde, verify_wave_bt
from .exterior import Chart
from .mongeampere import classify, prolong, verify_invariant
from .numerics import (
    Grid,
    GridField,
    PropagationError,
    SeedSolution,
    lambdify,
    propagate,
    write_csv,
)
from .pfaff import DEFAULT_MAX_STEPS, FlagBudgetError, derived_flag
from .problem import Problem, ProblemError, load
from .symcore import ZeroTestConfig, SymcoreError, to_text, zero_test_settings

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_GAVE_UP = 0, 1, 2, 3
DEFAULT_CONSISTENCY_TOL = 1e-6

IMPLICIT_POINTER = (
    "transformation {name!r} is in implicit form; only solved forms p = f(x, y, u, Z, P), "
    "q = g(x, y, u, Z, Q) (or v_x = A, v_y = B) can be checked. "
    "See README, section 'Transformations'."
)


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def table(rows: Sequence[Sequence[object]], header: Sequence[str] | None = None) -> str:
    """Left-aligned columns separated by two spaces."""
    rows = [[str(c) for c in r] for r in ([header] if header else []) + list(rows)]
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(max(map(len, rows)))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines)


def _envelope(args, command: str, result: dict) -> dict:
    return {
        "tool": "edskit",
        "version": __version__,
        "command": command,
        "input": getattr(args, "file", None),
        "seed": args.seed,
        "ztol": args.ztol,
        "max_flag_steps": args.max_flag_steps,
        "result": result,
    }


def _emit(args, command: str, result: dict, text: str) -> None:
    if args.json:
        out = json.dumps(_envelope(args, command, result), indent=2, sort_keys=True, allow_nan=True)
        print(out)
    else:
        print(text)


def _load(args) -> Problem:
    try:
        return load(args.file)
    except ProblemError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    problem = _load(args)
    M = problem.entry.system()
    report = classify(M, args.max_flag_steps, problem.entry.invariants)
    first = []
    for side, hs in sorted(problem.entry.first_order_invariants.items()):
        for h in hs:
            first.append({"side": side, "invariant": h, "verified": verify_invariant(M, side, h)})
    result = report.as_dict()
    result["first_order_invariants"] = first
    rows = []
    for order, flags in ((1, report.order1), (2, report.order2)):
        for side, fl in enumerate(flags, 1):
            rows.append([order, side, " ".join(map(str, fl.ranks)), "; ".join(fl.terminal.text())])
    lines = [
        f"u_xy = {to_text(report.F)}",
        "",
        table(rows, ["order", "side", "ranks", "terminal system"]),
        "",
        f"verdict: {report.verdict}" + (f" (side {report.side})" if report.side else ""),
    ]
    checked = [(1, d) for d in first] + [(2, d) for d in report.invariants]
    if checked:
        lines += ["", table([[o, d["side"], d["invariant"], "yes" if d["verified"] else "NO"]
                             for o, d in checked], ["order", "side", "invariant", "verified"])]
    _emit(args, "classify", result, "\n".join(lines))
    return EXIT_OK if all(d["verified"] for _, d in checked) else EXIT_FAIL


def _selected_transformations(problem: Problem, name: str | None):
    trs = [problem.transformation(name)] if name else list(problem.entry.transformations)
    if not trs:
        raise InputError(f"{problem.source}: no transformation given")
    implicit = [t for t in trs if not t.runnable]
    if implicit and (name or len(implicit) == len(trs)):
        raise InputError(IMPLICIT_POINTER.format(name=implicit[0].name))
    return trs


def cmd_verify_bt(args) -> int:
    problem = _load(args)
    try:
        trs = _selected_transformations(problem, args.bt)
    except ProblemError as exc:
        raise InputError(str(exc)) from None
    entry = problem.entry
    results, blocks, ok = [], [], True
    for tr in trs:
        if not tr.runnable:
            results.append({"name": tr.name, "kind": tr.kind, "skipped": "implicit form"})
            blocks.append(f"[{tr.name}] skipped: implicit form")
            continue
        obj = tr.build(entry)
        if tr.kind == "auto":
            res = compatibility_pde(obj)
            results.append({"name": tr.name, "kind": "auto", **res.as_dict()})
            blocks.append(table([["u_xy", to_text(res.G)],
                                 ["v-independent", "yes" if res.v_independent else "no"]],
                                [f"[{tr.name}]", "auto-transformation"]))
            ok &= res.v_independent
            continue
        invariants = {} if tr.F else {
            s: [h for h in hs if h not in ("x", "y")] for s, hs in entry.invariants.items()
        }
        rep = verify_wave_bt(obj, invariants)
        d = {"name": tr.name, "kind": "wave", "F": to_text(obj.F), "f": to_text(obj.f),
             "g": to_text(obj.g), **rep.as_dict()}
        results.append(d)
        ok &= rep.passed
        rows = [[f"residual {r.name}", "0" if r.zero else "nonzero",
                 "" if r.zero else to_text(r.expression)] for r in rep.residuals]
        rows.append(["congruence", "pass" if rep.congruence else "fail", ""])
        if rep.passed:
            rows.append(["normal", "yes" if rep.normal else "no", ""])
            h = rep.holonomy
            rows.append(["holonomic", "yes" if h.holonomic else "no",
                         "" if h.holonomic else f"c1 = {to_text(h.c1)}; c2 = {to_text(h.c2)}"])
            for trn in rep.transports:
                what = (to_text(trn.transported) if trn.ok
                        else f"d/d{trn.failing_variable} = {to_text(trn.failing_partial)}")
                rows.append([f"transport side {trn.side}", to_text(trn.invariant), what])
        verdict = "PASS" if rep.passed else "FAIL"
        blocks.append(table(rows, [f"[{tr.name}] {verdict}", "", ""]))
    _emit(args, "verify-bt", {"transformations": results}, "\n\n".join(blocks))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_propagate(args) -> int:
    problem = _load(args)
    spec = problem.propagation
    if spec is None:
        raise InputError(f"{problem.source}: no [propagate] table")
    try:
        tr = problem.transformation(args.bt or spec.transformation)
    except ProblemError as exc:
        raise InputError(str(exc)) from None
    if tr.kind != "wave":
        raise InputError(IMPLICIT_POINTER.format(name=tr.name) if tr.kind == "implicit"
                         else f"transformation {tr.name!r} is not a transformation to the wave equation")
    bt = tr.build(problem.entry)
    try:
        grid = Grid(**spec.grid)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{problem.source}: [propagate].grid: {exc}") from None
    seed = SeedSolution(spec.phi, spec.psi, spec.constants)
    res = propagate(bt, seed, spec.u0, grid, spec.substeps, spec.constants,
                    perturb_g=spec.perturb_g)
    summary = dict(res.summary())
    if spec.exact:
        expr = Chart(("x", "y"), tuple(spec.constants)).parse(spec.exact)
        expr = expr.subs({sympy.Symbol(k): v for k, v in spec.constants.items()})
        exact = GridField.from_function(grid, lambdify(expr, ["x", "y"]))
        summary["max_error"] = float(np.max(np.abs(exact.values - res.u.values)))
    out = args.out or spec.output
    if out:
        write_csv(res.u, out)
        summary["csv"] = out
    tol = args.consistency_tol
    summary["consistency_tol"] = tol
    summary["consistent"] = res.path_consistency <= tol
    rows = [[k, f"{v:.3e}" if isinstance(v, float) else v] for k, v in summary.items()]
    _emit(args, "propagate", {"transformation": tr.name, **summary}, table(rows, ["quantity", "value"]))
    return EXIT_OK if summary["consistent"] else EXIT_FAIL


def cmd_flag(args) -> int:
    problem = _load(args)
    M = problem.entry.system()
    system = M if args.order == 1 else prolong(M)
    fl = derived_flag(system.characteristic(args.side), args.max_flag_steps)
    steps = [{"step": i, "rank": s.rank, "forms": s.text()} for i, s in enumerate(fl.systems)]
    lines = [f"u_xy = {to_text(M.F)}: side {args.side}, order {args.order}"]
    for st in steps:
        lines.append("")
        lines.append(f"K^({st['step']})  rank {st['rank']}")
        lines.extend(f"  {f}" for f in st["forms"])
    lines += ["", f"ranks {' '.join(map(str, fl.ranks))}; terminal Frobenius: "
              + ("yes" if fl.terminal_is_frobenius else "no")]
    result = {"side": args.side, "order": args.order, "ranks": fl.ranks, "steps": steps,
              "terminal_is_frobenius": fl.terminal_is_frobenius}
    _emit(args, "flag", result, "\n".join(lines))
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.selftest:
        lines = catalog.selftest(args.ids or None, args.max_flag_steps)
        rows = [[ln.entry, ln.check, "ok" if ln.ok else "FAIL", ln.detail] for ln in lines]
        failed = sum(not ln.ok for ln in lines)
        text = table(rows, ["entry", "check", "status", "detail"])
        text += f"\n\n{len(lines) - failed}/{len(lines)} checks passed"
        _emit(args, "catalog-selftest",
              {"checks": [ln.as_dict() for ln in lines], "failed": failed}, text)
        return EXIT_OK if failed == 0 else EXIT_FAIL
    action = args.ids[0] if args.ids else "list"
    if action == "list":
        entries = list(catalog.entries())
        rows = [[e.id, e.title, e.expected_verdict or "-",
                 "yes" if e.runnable else "stub", e.provenance] for e in entries]
        _emit(args, "catalog-list", {"entries": [e.as_dict() for e in entries]},
              table(rows, ["id", "equation", "expected verdict", "runnable", "provenance"]))
        return EXIT_OK
    if action == "show":
        if len(args.ids) != 2:
            raise InputError("usage: edskit catalog show ID")
        try:
            e = catalog.get(args.ids[1])
        except KeyError as exc:
            raise InputError(exc.args[0]) from None
        _emit(args, "catalog-show", e.as_dict(), _show_text(e))
        return EXIT_OK
    raise InputError(f"unknown catalog action {action!r} (list, show ID, --selftest)")


def _show_text(e: catalog.CatalogEntry) -> str:
    rows = [["id", e.id], ["equation", e.title], ["F", e.F], ["provenance", e.provenance],
            ["runnable", "yes" if e.runnable else "no (stub)"]]
    if e.constants:
        rows.append(["constants", ", ".join(e.constants)])
    for fs in e.functions:
        rows.append(["function", f"{fs.name}'(s) = {fs.rule}" if fs.rule else f"{fs.name} (free)"])
    if e.expected_verdict:
        rows.append(["expected verdict", e.expected_verdict
                     + (f" (side {e.expected_side})" if e.expected_side else "")])
    for label, inv in (("order-1 invariant", e.first_order_invariants),
                       ("invariant", e.invariants)):
        for side, hs in sorted(inv.items()):
            for h in hs:
                rows.append([f"{label} J{side}", h])
    if e.note:
        rows.append(["note", e.note])
    out = [table(rows)]
    for t in e.transformations:
        trows = [["kind", t.kind], ["provenance", t.provenance]]
        if t.kind == "wave":
            trows += [["p =", t.f], ["q =", t.g]]
        elif t.kind == "auto":
            trows += [["v_x =", t.f], ["v_y =", t.g]]
        else:
            trows.append(["relation", t.relation])
        if t.F:
            trows.append(["source F", t.F])
        if t.constants:
            trows.append(["constants", ", ".join(t.constants)])
        if t.domain:
            trows.append(["domain", "; ".join(f"{d} > 0" for d in t.domain)])
        if t.kind == "wave":
            trows.append(["expected", "pass" if t.expect_pass else "fail (open question)"])
        if t.note:
            trows.append(["note", t.note])
        out.append(f"transformation {t.name}\n" + table([["  " + a, b] for a, b in trows]))
    return "\n\n".join(out)


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(p: argparse.ArgumentParser) -> None:
    d = argparse.SUPPRESS
    p.add_argument("--seed", type=lambda s: int(s, 0), default=d,
                   help="zero-test sampling seed (default 0xED5)")
    p.add_argument("--ztol", type=float, default=d, help="zero-test relative tolerance (default 1e-9)")
    p.add_argument("--max-flag-steps", type=int, default=d,
                   help=f"derived-flag step budget (default {DEFAULT_MAX_STEPS})")
    p.add_argument("--json", action="store_true", default=d, help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edskit",
        description="Integrability and Backlund-transformation checks for u_xy = F(x, y, u, u_x, u_y).",
    )
    parser.add_argument("--version", action="version", version=f"edskit {__version__}")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp)
        sp.set_defaults(handler=fn)
        return sp

    sp = add("classify", cmd_classify, "derived flags and integrability verdict")
    sp.add_argument("file", help="problem file or catalog:ID")

    sp = add("verify-bt", cmd_verify_bt, "check a transformation to the wave equation")
    sp.add_argument("file")
    sp.add_argument("--bt", help="transformation name (default: all)")

    sp = add("propagate", cmd_propagate, "integrate a solution over a grid")
    sp.add_argument("file")
    sp.add_argument("--bt", help="transformation name (default: first)")
    sp.add_argument("--out", help="CSV output path (overrides the file's)")
    sp.add_argument("--consistency-tol", type=float, default=DEFAULT_CONSISTENCY_TOL,
                    help="path-consistency threshold for the pass/fail status")

    sp = add("flag", cmd_flag, "print the derived flag of a characteristic system")
    sp.add_argument("file")
    sp.add_argument("--side", type=int, choices=(1, 2), default=1)
    sp.add_argument("--order", type=int, choices=(1, 2), default=1)

    sp = add("catalog", cmd_catalog, "built-in equations: list, show ID, --selftest [ID ...]")
    sp.add_argument("ids", nargs="*", metavar="ARG")
    sp.add_argument("--selftest", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = ZeroTestConfig()
    args.seed = getattr(args, "seed", defaults.seed)
    args.ztol = getattr(args, "ztol", defaults.rtol)
    args.max_flag_steps = getattr(args, "max_flag_steps", DEFAULT_MAX_STEPS)
    args.json = getattr(args, "json", False)
    try:
        with zero_test_settings(seed=args.seed, rtol=args.ztol):
            return args.handler(args)
    except (InputError, SymcoreError) as exc:
        print(f"edskit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FlagBudgetError as exc:
        print(f"edskit: {exc}; raise --max-flag-steps", file=sys.stderr)
        return EXIT_GAVE_UP
    except PropagationError as exc:
        print(f"edskit: {exc}", file=sys.stderr)
        return EXIT_GAVE_UP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
