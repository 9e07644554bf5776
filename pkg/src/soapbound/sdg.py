"""Multi-statement bounds over the array dependency graph.

Every subset H of computed arrays is turned into one fused virtual statement
whose tile problem is solved like a single statement; the program bound sums,
over computed arrays, the array size divided by the best intensity of any
subset containing that array.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .bounds import (BoundsError, TileSolution, TilingProblem, default_order, domain_size, dominant_terms,
                     intensity_and_X0, max_groups, solve_problem, solve_tiling)
from .frontend import AccessInfo, ArrayAccess, Program, Statement, decompose
from .soap import SoapStatement, normalize
from .symbolic import ZERO, GrowthOrder, SymExpr, compare_growth, leading_term

log = logging.getLogger(__name__)


class SdgError(Exception):
    pass


class EnumerationCapExceeded(SdgError):
    pass


class IncompatibleIterationSpaces(SdgError):
    pass


@dataclass
class Sdg:
    vertices: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    edge_statements: dict[tuple[str, str], tuple[int, ...]]
    inputs: frozenset[str]
    array_sizes: dict[str, SymExpr]
    writers: dict[str, tuple[int, ...]]
    statements: dict[int, Statement]
    soap: dict[int, list[SoapStatement]]

    def computed(self) -> list[str]:
        return [v for v in self.vertices if v not in self.inputs]


@dataclass(frozen=True)
class SubgraphStatement:
    H: frozenset[str]
    inputs: frozenset[str]
    preserved_self_edges: frozenset[str]
    statements: tuple[int, ...]

    def label(self, order: Iterable[str]) -> str:
        return "{" + ", ".join(a for a in order if a in self.H) + "}"


def build_sdg(p: Program, soap: Mapping[int, list[SoapStatement]] | None = None) -> Sdg:
    soap = dict(soap) if soap is not None else {st.statement_id: normalize(st) for st in p.statements}
    vertices: list[str] = []
    edges: dict[tuple[str, str], list[int]] = {}
    writers: dict[str, list[int]] = {}
    sizes: dict[str, SymExpr] = {}
    for st in p.statements:
        for acc in st.accesses():
            if acc.array not in vertices:
                vertices.append(acc.array)
        out = st.output.array
        writers.setdefault(out, []).append(st.statement_id)
        sizes[out] = sizes.get(out, ZERO) + domain_size(st)
        for acc in st.inputs:
            edges.setdefault((acc.array, out), [])
            if st.statement_id not in edges[acc.array, out]:
                edges[acc.array, out].append(st.statement_id)
    indeg = {v: 0 for v in vertices}
    for (_u, v) in edges:
        indeg[v] += 1
    inputs = frozenset(v for v in vertices if indeg[v] == 0)
    return Sdg(tuple(vertices), tuple(edges), {e: tuple(s) for e, s in edges.items()}, inputs,
               sizes, {a: tuple(s) for a, s in writers.items()},
               {st.statement_id: st for st in p.statements}, soap)


def subgraph_inputs(g: Sdg, H: frozenset[str]) -> tuple[frozenset[str], frozenset[str]]:
    """In(St_H) and the self-edges it preserves."""
    ins = {u for (u, v) in g.edges if v in H and u not in H}
    kept = set()
    for b in H:
        if (b, b) in g.edges:
            fed_inside = any(u in H and u != b for (u, v) in g.edges if v == b)
            if not fed_inside:
                kept.add(b)
    return frozenset(ins | kept), frozenset(kept)


def enumerate_subgraphs(g: Sdg, cap: int = 20) -> list[SubgraphStatement]:
    comp = g.computed()
    if len(comp) > cap:
        raise EnumerationCapExceeded(
            f"{len(comp)} computed arrays exceed the subgraph enumeration cap of {cap}; "
            f"raise it with --cap (work grows as 2^n)")
    out = []
    for size in range(1, len(comp) + 1):
        for H in itertools.combinations(comp, size):
            Hs = frozenset(H)
            ins, kept = subgraph_inputs(g, Hs)
            stmts = tuple(sorted(s for a in H for s in g.writers.get(a, ())))
            out.append(SubgraphStatement(Hs, ins, kept, stmts))
    return out


# fusion -------------------------------------------------------------------------

def _reads(st: Statement, array: str) -> list[ArrayAccess]:
    accs = list(st.inputs)
    if st.accumulate:
        accs = accs[1:]
    return [a for a in accs if a.array == array]


def _components(g: Sdg, stmts: tuple[int, ...], H: frozenset[str]) -> list[tuple[int, ...]]:
    parent = {s: s for s in stmts}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a, b in itertools.combinations(stmts, 2):
        sa, sb = g.statements[a], g.statements[b]
        if (sa.output.array in H and _reads(sb, sa.output.array)) or \
                (sb.output.array in H and _reads(sa, sb.output.array)):
            union(a, b)
            continue
        shared = ({x.array for x in sa.inputs if x.array not in H}
                  & {x.array for x in sb.inputs if x.array not in H})
        if shared:
            union(a, b)
    groups: dict[int, list[int]] = {}
    for s in stmts:
        groups.setdefault(find(s), []).append(s)
    return [tuple(v) for _k, v in sorted(groups.items())]


def _unify(g: Sdg, comp: tuple[int, ...], H: frozenset[str]) -> dict[int, dict[str, str]]:
    """Rename every statement's loop variables onto the first statement's."""
    stmts = [g.statements[s] for s in comp]
    ref = stmts[0].iter_vars
    for st in stmts[1:]:
        if st.depth != len(ref):
            raise IncompatibleIterationSpaces(
                f"statements {comp} have loop depths {[s.depth for s in stmts]}")

    def consistent(assigned: dict[int, dict[str, str]]) -> bool:
        ids = list(assigned)
        for a in ids:
            for b in ids:
                if a == b:
                    continue
                sa, sb = g.statements[a], g.statements[b]
                arr = sa.output.array
                if arr in H:
                    want = sa.output.rename(assigned[a]).linear_part()
                    for r in _reads(sb, arr):
                        if r.rename(assigned[b]).linear_part() != want:
                            return False
        outside: dict[str, dict[int, set]] = {}
        for s in ids:
            st = g.statements[s]
            for acc in st.inputs:
                if acc.array in H:
                    continue
                outside.setdefault(acc.array, {}).setdefault(s, set()).add(
                    acc.rename(assigned[s]).linear_part())
        for arr, per in outside.items():
            if len(per) > 1 and len({frozenset(v) for v in per.values()}) > 1:
                return False
        return True

    def search(k: int, assigned: dict[int, dict[str, str]]):
        if k == len(stmts):
            return assigned
        st = stmts[k]
        for perm in itertools.permutations(ref):
            trial = dict(assigned)
            trial[st.statement_id] = dict(zip(st.iter_vars, perm))
            if consistent(trial):
                got = search(k + 1, trial)
                if got is not None:
                    return got
        return None

    first = {stmts[0].statement_id: {v: v for v in ref}}
    found = search(1, first) if consistent(first) else None
    if found is None:
        raise IncompatibleIterationSpaces(
            f"no renaming of loop variables aligns producer and consumer accesses of statements {comp}")
    return found


def _rename_info(info: AccessInfo, mapping: dict[str, str], ivars: set[str]) -> AccessInfo:
    ins = [a.rename(mapping) for a in info.inputs]
    out = info.output.rename(mapping) if info.output is not None else None
    new = decompose(info.array, info.source, ins, out, ivars)
    if any(e.kind in ("max", "prod") for e in info.extents):
        ext = tuple(type(e)(e.kind, tuple(mapping.get(v, v) for v in e.vars)) for e in info.extents)
        return replace(new, extents=ext, reason=None)
    return new


def fused_problem(g: Sdg, comp: tuple[int, ...], H: frozenset[str]) -> TilingProblem:
    names = _unify(g, comp, H)
    ref = g.statements[comp[0]].iter_vars
    ivars = set(ref)
    cases = {}
    for s in comp:
        if len(g.soap[s]) != 1:
            raise IncompatibleIterationSpaces(f"statement {s} has stride cases and is analyzed alone")
        cases[s] = g.soap[s][0]
    versioned = {}
    for s in comp:
        for arr, _v in cases[s].version_dims:
            versioned[g.statements[s].output.array] = arr
    outside: dict[tuple, list[ArrayAccess]] = {}
    outside_src: dict[tuple, str] = {}
    inside: dict[str, tuple[list[ArrayAccess], ArrayAccess | None]] = {}
    infos: list[AccessInfo] = []
    for s in comp:
        ren = names[s]
        for info in cases[s].infos:
            src = info.source
            if src not in H:
                for acc in info.inputs:
                    r = acc.rename(ren)
                    key = (info.array, r.linear_part())
                    outside.setdefault(key, []).append(r)
                    outside_src[key] = src
                continue
            if info.includes_output and src in versioned and info.array == versioned[src]:
                infos.append(_rename_info(info, ren, ivars))
                continue
            if src in versioned:
                continue   # reads the finished value of an in-place updated array
            ins, out = inside.get(src, ([], None))
            ins = ins + [a.rename(ren, src) for a in info.inputs]
            if info.includes_output:
                out = info.output.rename(ren, src)
            inside[src] = (ins, out)
    for key, accs in outside.items():
        infos.append(decompose(key[0], outside_src[key], accs, None, ivars))
    for src, (ins, out) in inside.items():
        info = decompose(src, src, ins, out, ivars)
        if info.reason is not None:
            raise IncompatibleIterationSpaces(f"accesses to {src} inside the fused statement: {info.reason}")
        infos.append(info)
    terms = []
    for info in infos:
        terms += dominant_terms(info)
    return TilingProblem(ref, Fraction(len(comp)), terms, max_groups(infos))


# intensities -------------------------------------------------------------------

def _best(values: list[SymExpr]) -> SymExpr:
    best = values[0]
    for v in values[1:]:
        if compare_growth(v, best, "S") > 0:
            best = v
    return best


@dataclass
class SubgraphResult:
    subgraph: SubgraphStatement
    rho: SymExpr | None
    skipped: str | None = None
    solution: TileSolution | None = None
    component: tuple[int, ...] = ()


class _Evaluator:
    def __init__(self, g: Sdg):
        self.g = g
        self.cache: dict[frozenset[int], tuple[SymExpr, TileSolution]] = {}

    def component(self, comp: tuple[int, ...], H: frozenset[str]) -> tuple[SymExpr, TileSolution]:
        key = frozenset(comp)
        if key in self.cache:
            return self.cache[key]
        if len(comp) == 1:
            sols = [solve_tiling(c) for c in self.g.soap[comp[0]]]
        else:
            sols = [solve_problem(fused_problem(self.g, comp, H))]
        rhos = [intensity_and_X0(ts)[0] for ts in sols]
        best = _best(rhos)
        out = (best, sols[rhos.index(best)])
        self.cache[key] = out
        return out

    def subgraph(self, sg: SubgraphStatement) -> tuple[SymExpr, TileSolution, tuple[int, ...]]:
        comps = _components(self.g, sg.statements, sg.H)
        found = [self.component(c, sg.H) + (c,) for c in comps]
        best = _best([f[0] for f in found])
        return next(f for f in found if f[0] == best)


def subgraph_intensity(sg: SubgraphStatement, g: Sdg) -> SymExpr:
    """Intensity of the fused statement for H; disconnected parts contribute their maximum."""
    return _Evaluator(g).subgraph(sg)[0]


@dataclass
class ArrayTerm:
    array: str
    size: SymExpr
    rho: SymExpr | None
    best_subgraph: frozenset[str] | None
    incomplete: bool


@dataclass
class SdgBound:
    Q_bound: SymExpr
    leading: SymExpr
    arrays: list[ArrayTerm]
    subgraphs: list[SubgraphResult]
    warnings: list[str] = field(default_factory=list)

    @property
    def best_subgraph(self) -> SubgraphResult | None:
        done = [r for r in self.subgraphs if r.rho is not None]
        if not done:
            return None
        best = done[0]
        for r in done[1:]:
            if compare_growth(r.rho, best.rho, "S") > 0:
                best = r
        return best


def sdg_bound(g: Sdg, cap: int = 20, order: GrowthOrder | None = None) -> SdgBound:
    subs = enumerate_subgraphs(g, cap)
    ev = _Evaluator(g)
    results = []
    warnings = []
    for sg in subs:
        try:
            rho, ts, comp = ev.subgraph(sg)
            results.append(SubgraphResult(sg, rho, None, ts, comp))
        except (IncompatibleIterationSpaces, BoundsError) as exc:
            results.append(SubgraphResult(sg, None, str(exc)))
            warnings.append(f"subgraph {sg.label(g.vertices)} skipped: {exc}")
    arrays = []
    Q = ZERO
    for a in g.computed():
        containing = [r for r in results if a in r.subgraph.H]
        done = [r for r in containing if r.rho is not None]
        incomplete = len(done) < len(containing)
        if not done:
            warnings.append(f"array {a}: no subgraph could be evaluated; it contributes nothing")
            arrays.append(ArrayTerm(a, g.array_sizes[a], None, None, True))
            continue
        best = done[0]
        for r in done[1:]:
            if compare_growth(r.rho, best.rho, "S") > 0:
                best = r
        arrays.append(ArrayTerm(a, g.array_sizes[a], best.rho, best.subgraph.H, incomplete))
        Q = Q + g.array_sizes[a] / best.rho
    if order is None:
        order = default_order(Q.symbols() | {"S"})
    return SdgBound(Q, leading_term(Q, order), arrays, results, warnings)
