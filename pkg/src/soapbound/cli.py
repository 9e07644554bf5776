"""Command-line entry point: ``soapbound analyze`` and ``soapbound oracle``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Sequence

from . import __version__
from .bounds import BoundsError, TileSolution, intensity_and_X0, statement_bound
from .frontend import FrontendError, Program, load_program
from .oracle import (OracleError, SearchBudgetExceeded, SoundnessViolation, TooLarge,
                     UnboundParameter, build_cdag, verify_bound)
from .sdg import SdgError, build_sdg, sdg_bound
from .soap import SoapError, SoapStatement, normalize
from .symbolic import GrowthOrder, SymExpr, compare_growth, render, substitute

log = logging.getLogger("soapbound")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_SOAP = 3
EXIT_SOLVER = 4
EXIT_TOO_LARGE = 5


def _r(e: SymExpr | None) -> str | None:
    return None if e is None else render(e)


def _tiles(ts: TileSolution) -> tuple[str | None, str | None, dict[str, str]]:
    rho, X0 = intensity_and_X0(ts)
    if X0 is None:
        return None, render(rho), {v: render(t) for v, t in ts.tile_sizes.items()}
    return render(X0), render(rho), {v: render(substitute(t, {"X": X0})) for v, t in ts.tile_sizes.items()}


def _info_record(info) -> dict:
    return {"name": info.array, "source": info.source, "role": info.role,
            "accesses": [a.render() for a in info.accesses],
            "offsets": [sorted(o) for o in info.offset_sets],
            "extents": [e.kind if not e.vars else f"{e.kind}({','.join(e.vars)})" for e in info.extents]}


def _case_record(sst: SoapStatement, order: GrowthOrder) -> dict:
    b = statement_bound(sst, order)
    ts = b.tiles
    return {
        "kind": sst.case_kind, "condition": sst.case_condition,
        "leading": render(b.leading), "full_bound": render(b.Q_bound),
        "X0": _r(b.X0), "rho": render(b.rho), "chi": render(ts.chi), "alpha": str(ts.alpha),
        "tiles": {v: render(t) for v, t in ts.tile_sizes.items()},
        "tiles_at_X0": {v: render(t) for v, t in b.tiles_at_X0.items()},
        "pinned": list(ts.pinned), "exact_weights": ts.exact,
        "domain": render(b.domain),
        "accesses": [_info_record(i) for i in sst.infos],
        "versioned": [f"{a} along {v}" for a, v in sst.version_dims],
        "disjointness": [f"{w.pair[0].render()} vs {w.pair[1].render()}: {w.scope}" for w in sst.witnesses],
        "warnings": list(b.warnings),
    }


def analyze(p: Program, assumptions: Sequence[str] = (), use_sdg: bool = True, cap: int = 20) -> dict:
    """Full analysis report as a JSON-compatible dict."""
    order = GrowthOrder.for_symbols(p.size_parameters(), ("S",), assumptions)
    soap = {st.statement_id: normalize(st) for st in p.statements}
    statements, cases, warnings = [], [], []
    best_case = None
    for st in p.statements:
        recs = [_case_record(c, order) for c in soap[st.statement_id]]
        for c in soap[st.statement_id]:
            warnings += [f"S{st.statement_id}: {w}" for w in c.warnings]
        statements.append({"id": st.statement_id, "text": st.text, "cases": recs})
        if len(recs) > 1:
            cases += [{"statement": st.statement_id, "kind": r["kind"], "condition": r["condition"],
                       "rho": r["rho"], "leading": r["leading"]} for r in recs]
    report = {"version": __version__, "program": p.name, "statements": statements, "cases": cases,
              "sdg_bound": None, "leading": None, "full_bound": None, "X0": None, "rho": None,
              "tiles": {}, "fusion": None, "warnings": warnings}
    if use_sdg:
        g = build_sdg(p, soap)
        sb = sdg_bound(g, cap, order)
        best = sb.best_subgraph
        report["sdg_bound"] = {
            "leading": render(sb.leading), "full_bound": render(sb.Q_bound),
            "arrays": [{"array": a.array, "size": render(a.size), "rho": _r(a.rho),
                        "subgraph": [v for v in g.vertices if a.best_subgraph and v in a.best_subgraph],
                        "incomplete": a.incomplete} for a in sb.arrays],
            "inputs": sorted(g.inputs),
            "edges": [f"{u} -> {v}" for u, v in g.edges],
        }
        warnings += sb.warnings
        report["leading"] = render(sb.leading)
        report["full_bound"] = render(sb.Q_bound)
        if best is not None and best.solution is not None:
            report["X0"], report["rho"], report["tiles"] = _tiles(best.solution)
            report["fusion"] = {"arrays": [v for v in g.vertices if v in best.subgraph.H],
                                "statements": list(best.component), "rho": render(best.rho)}
    elif len(p.statements) == 1:
        recs = statements[0]["cases"]
        pick = recs[0]
        for r in recs[1:]:
            if compare_growth(_parse(r["rho"]), _parse(pick["rho"]), "S") > 0:
                pick = r
        best_case = pick
        for k in ("leading", "full_bound", "X0", "rho"):
            report[k] = best_case[k]
        report["tiles"] = best_case["tiles_at_X0"]
    else:
        warnings.append("multi-statement program analyzed without the dependency graph: "
                        "only per-statement bounds are reported")
    return report


def _parse(text: str) -> SymExpr:
    from .symbolic import parse_expr
    return parse_expr(text)


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def render_text(report: dict) -> str:
    out = [f"program {report['program']} (soapbound {report['version']})", ""]
    for st in report["statements"]:
        out.append(f"statement S{st['id']}: {st['text']}")
        for c in st["cases"]:
            if c["kind"]:
                out.append(f"  case {c['kind']}: {c['condition']}")
            for a in c["accesses"]:
                out.append(f"    {a['name']:<10} {a['role']:<6} {', '.join(a['accesses'])}"
                           f"  extents {a['extents']} offsets {a['offsets']}")
            for v in c["versioned"]:
                out.append(f"    versioned: {v}")
            for w in c["disjointness"]:
                out.append(f"    disjoint: {w}")
            out.append(f"    |D| = {c['domain']}")
            out.append(f"    chi(X) = {c['chi']}   (alpha = {c['alpha']}, exact weights: {c['exact_weights']})")
            out.append("    tiles(X): " + ", ".join(f"{k} = {v}" for k, v in c["tiles"].items())
                       + (f"   pinned {c['pinned']}" if c["pinned"] else ""))
            out.append(f"    X0 = {c['X0']}   rho = {c['rho']}")
            out.append("    tiles at X0: " + ", ".join(f"{k} = {v}" for k, v in c["tiles_at_X0"].items()))
            out.append(f"    Q >= {c['full_bound']}")
            out.append(f"    leading: {c['leading']}")
            for w in c["warnings"]:
                out.append(f"    warning: {w}")
        out.append("")
    if report["cases"]:
        out.append("case-conditioned variants:")
        for c in report["cases"]:
            out.append(f"  S{c['statement']} {c['kind']} ({c['condition']}): rho = {c['rho']}, "
                       f"leading {c['leading']}")
        out.append("")
    sb = report["sdg_bound"]
    if sb is not None:
        out.append("dependency graph: " + ", ".join(sb["edges"]))
        out.append(f"  inputs: {', '.join(sb['inputs'])}")
        for a in sb["arrays"]:
            out.append(f"  {a['array']}: |A| = {a['size']}, rho = {a['rho']}, via {{{', '.join(a['subgraph'])}}}"
                       + ("  (some subgraphs skipped)" if a["incomplete"] else ""))
        out.append(f"  Q >= {sb['full_bound']}")
        out.append(f"  leading: {sb['leading']}")
        out.append("")
    out.append(f"leading bound: {report['leading']}")
    out.append(f"full bound:    {report['full_bound']}")
    out.append(f"X0 = {report['X0']}   rho = {report['rho']}")
    out.append("tiles: " + ", ".join(f"{k} = {v}" for k, v in report["tiles"].items()))
    if report["fusion"]:
        f = report["fusion"]
        out.append(f"fusion hint: arrays {{{', '.join(f['arrays'])}}} from statements "
                   f"{', '.join('S' + str(s) for s in f['statements'])} (rho = {f['rho']})")
    for w in report["warnings"]:
        out.append(f"warning: {w}")
    return "\n".join(out) + "\n"


# commands ------------------------------------------------------------------------

def _cmd_analyze(args) -> int:
    try:
        p = load_program(args.file)
    except (FrontendError, OSError) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        report = analyze(p, args.assume, not args.no_sdg, args.cap)
    except ValueError as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SoapError as exc:
        print(f"{args.file}: cannot normalize: {exc}", file=sys.stderr)
        return EXIT_SOAP
    except (BoundsError, SdgError) as exc:
        print(f"{args.file}: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    sys.stdout.write(render_json(report) if args.format == "json" else render_text(report))
    return EXIT_OK


def _params(items: Sequence[str]) -> dict[str, int]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--param expects SYM=INT, got {item!r}")
        out[name.strip()] = int(value)
    return out


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:g}" if isinstance(x, float) else str(x)


def _cmd_oracle(args) -> int:
    try:
        p = load_program(args.file)
        params = _params(args.param)
    except (FrontendError, OSError, ValueError) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        report = verify_bound(p, params, args.S, args.budget, recompute=not args.no_recompute)
    except UnboundParameter as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TooLarge as exc:
        count = _count_vertices(p, params)
        print(f"{args.file}: {exc} (the instance has {count} vertices)", file=sys.stderr)
        return EXIT_TOO_LARGE
    except SoundnessViolation as exc:
        print(f"FAIL: {exc}")
        return EXIT_FAIL
    except (SoapError, BoundsError, SdgError) as exc:
        print(f"{args.file}: bound unavailable: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OracleError, SearchBudgetExceeded) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.format == "json":
        sys.stdout.write(json.dumps({"status": "PASS", **report.as_dict()}, indent=2, sort_keys=True) + "\n")
    else:
        print(f"bound  {_fmt(report.bound)}")
        print(f"exact  {_fmt(report.exact)}" + ("" if report.exact_is_exact else "  (search budget hit; lower bound)"))
        print(f"greedy {_fmt(report.greedy)}")
        for n in report.notes:
            print(f"note: {n}")
        print("PASS")
    return EXIT_OK


def _count_vertices(p: Program, params: dict[str, int]) -> int:
    """Vertex count of an oversized instance, from an uncapped build."""
    return len(build_cdag(p, params, cap=10**9).vertices)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soapbound", description="I/O lower bounds for affine loop programs")
    ap.add_argument("--version", action="version", version=f"soapbound {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="derive symbolic I/O lower bounds and tile sizes")
    a.add_argument("file")
    a.add_argument("--format", choices=("json", "text"), default="text")
    a.add_argument("--assume", action="append", default=[], metavar="REL",
                   help="growth relation between parameters, e.g. 'T < N/2'")
    a.add_argument("--no-sdg", action="store_true", help="skip the multi-statement analysis")
    a.add_argument("--cap", type=int, default=20, help="max computed arrays for subgraph enumeration")
    a.set_defaults(func=_cmd_analyze)
    o = sub.add_parser("oracle", help="check the bound against exact pebbling on a small instance")
    o.add_argument("file")
    o.add_argument("--param", action="append", default=[], metavar="SYM=INT")
    o.add_argument("--S", type=int, required=True, help="fast memory size in elements")
    o.add_argument("--no-recompute", action="store_true")
    o.add_argument("--budget", type=int, default=10_000_000, help="max expanded search states")
    o.add_argument("--format", choices=("json", "text"), default="text")
    o.set_defaults(func=_cmd_oracle)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("SOAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
