"""Normalization of statements onto simple-overlap form.

Three projections are applied in order: access groups whose index patterns
differ are split into virtual arrays once their disjointness is proven, in-place
updates get a version dimension, and non-injective index combinations such as
``r + sw*w`` yield one case per stride regime.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .frontend import AccessInfo, Affine, ArrayAccess, Extent, Statement, decompose, extract_accesses

log = logging.getLogger(__name__)


class SoapError(Exception):
    pass


class CannotProveDisjoint(SoapError):
    pass


class NoFreeVariable(SoapError):
    pass


class UnsupportedAccess(SoapError):
    pass


@dataclass(frozen=True)
class DisjointnessWitness:
    pair: tuple[ArrayAccess, ArrayAccess]
    scope: str                     # "global": no two iterations collide; "pointwise": never at one iteration
    certificate: tuple[str, ...]   # domain inequalities used by the refutation
    reason: str = "fourier-motzkin"


@dataclass(frozen=True)
class SoapStatement:
    statement: Statement
    infos: tuple[AccessInfo, ...]
    version_dims: tuple[tuple[str, str], ...] = ()
    case_condition: str | None = None
    case_kind: str | None = None   # "injective" or "overlap" for strided accesses
    witnesses: tuple[DisjointnessWitness, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def statement_id(self) -> int:
        return self.statement.statement_id

    @property
    def iter_vars(self) -> tuple[str, ...]:
        return self.statement.iter_vars


# affine feasibility --------------------------------------------------------

Row = tuple[dict[str, Fraction], Fraction, frozenset[str]]


def _render_row(coeffs: dict, const, rel: str = ">=") -> str:
    aff = Affine.build({k: int(v) for k, v in coeffs.items()}, int(const))
    return f"{aff.render()} {rel} 0"


def _integerize(coeffs: dict[str, Fraction], const: Fraction) -> tuple[dict[str, int], int]:
    den = 1
    for c in list(coeffs.values()) + [const]:
        den = den * c.denominator // math.gcd(den, c.denominator)
    return {k: int(v * den) for k, v in coeffs.items() if v != 0}, int(const * den)


def _tighten(coeffs: dict[str, Fraction], const: Fraction) -> tuple[dict[str, Fraction], Fraction]:
    """Chvatal-Gomory rounding of ``sum(a x) + k >= 0`` over the integers."""
    a, k = _integerize(coeffs, const)
    if not a:
        return {}, Fraction(k)
    g = 0
    for v in a.values():
        g = math.gcd(g, abs(v))
    return {x: Fraction(v // g) for x, v in a.items()}, Fraction(k // g)


def refute(equalities: list[tuple[dict[str, Fraction], Fraction, str]],
           inequalities: list[tuple[dict[str, Fraction], Fraction, str]],
           max_rows: int = 20000) -> tuple[str, frozenset[str]] | None:
    """Try to show that the integer system has no solution.

    Returns (method, labels of the inequalities used) or None when no
    contradiction is found.  Sound but incomplete: rational elimination with
    integer rounding of every derived row.
    """
    eqs = [({k: Fraction(v) for k, v in c.items() if v}, Fraction(k0), frozenset([lab])) for c, k0, lab in equalities]
    rows: list[Row] = []
    for c, k0, lab in inequalities:
        cc, kk = _tighten({k: Fraction(v) for k, v in c.items()}, Fraction(k0))
        rows.append((cc, kk, frozenset([lab])))

    def gcd_check(c: dict[str, Fraction], k: Fraction) -> bool:
        a, kk = _integerize(c, k)
        if not a:
            return kk != 0
        g = 0
        for v in a.values():
            g = math.gcd(g, abs(v))
        return kk % g != 0

    while eqs:
        for c, k, prov in eqs:
            if gcd_check(c, k):
                return "gcd", prov
        c, k, prov = eqs.pop(0)
        if not c:
            continue
        x = min(c, key=lambda v: (abs(c[v]) != 1, v))
        cx = c[x]
        sub = {y: -v / cx for y, v in c.items() if y != x}
        subk = -k / cx

        def apply(row_c, row_k, row_p):
            r = row_c.get(x, 0)
            if not r:
                return row_c, row_k, row_p
            out = {y: v for y, v in row_c.items() if y != x}
            for y, v in sub.items():
                out[y] = out.get(y, 0) + r * v
            return {y: v for y, v in out.items() if v}, row_k + r * subk, row_p | prov

        eqs = [apply(*e) for e in eqs]
        new_rows = []
        for rc, rk, rp in rows:
            rc, rk, rp = apply(rc, rk, rp)
            rc, rk = _tighten(rc, rk)
            new_rows.append((rc, rk, rp))
        rows = new_rows

    def dedupe(rs: list[Row]) -> list[Row]:
        best: dict = {}
        for c, k, p in rs:
            key = tuple(sorted(c.items()))
            if key not in best or k < best[key][1]:
                best[key] = (c, k, p)
        return list(best.values())

    rows = dedupe(rows)
    while True:
        for c, k, p in rows:
            if not c and k < 0:
                return "fourier-motzkin", p
        names = sorted({x for c, _, _ in rows for x in c})
        if not names:
            return None

        def cost(x):
            pos = sum(1 for c, _, _ in rows if c.get(x, 0) > 0)
            neg = sum(1 for c, _, _ in rows if c.get(x, 0) < 0)
            return pos * neg - pos - neg, x

        x = min(names, key=cost)
        keep = [r for r in rows if not r[0].get(x)]
        pos = [r for r in rows if r[0].get(x, 0) > 0]
        neg = [r for r in rows if r[0].get(x, 0) < 0]
        for pc, pk, pp in pos:
            for nc, nk, nppv in neg:
                a, b = pc[x], -nc[x]
                comb = {}
                for y in set(pc) | set(nc):
                    if y == x:
                        continue
                    v = b * pc.get(y, 0) + a * nc.get(y, 0)
                    if v:
                        comb[y] = v
                cc, kk = _tighten(comb, b * pk + a * nk)
                keep.append((cc, kk, pp | nppv))
        rows = dedupe(keep)
        if len(rows) > max_rows:
            return None


def _domain_rows(st: Statement, suffix: str) -> list[tuple[dict[str, Fraction], Fraction, str]]:
    ren = {v: v + suffix for v in st.iter_vars}
    out = []
    for coeffs, k in st.domain_constraints():
        c = {ren.get(n, n): Fraction(v) for n, v in coeffs.items()}
        out.append((c, Fraction(k), _render_row(c, k)))
    return out


def _equal_rows(a: ArrayAccess, b: ArrayAccess, ren_a: dict, ren_b: dict):
    rows = []
    for d, (x, y) in enumerate(zip(a.index, b.index)):
        if any(isinstance(c, str) for _, c in x.terms + y.terms):
            return None
        c: dict[str, Fraction] = {}
        for n, v in x.terms:
            n = ren_a.get(n, n)
            c[n] = c.get(n, 0) + Fraction(v)
        for n, v in y.terms:
            n = ren_b.get(n, n)
            c[n] = c.get(n, 0) - Fraction(v)
        rows.append((c, Fraction(x.const - y.const), f"{a.render()} = {b.render()} in dim {d}"))
    return rows


def prove_disjoint(st: Statement, a: ArrayAccess, b: ArrayAccess) -> DisjointnessWitness | None:
    """Refute ``a(psi1) == b(psi2)`` over the domain, first for independent
    iterations and then for a shared iteration."""
    ren1 = {v: v + "'1" for v in st.iter_vars}
    ren2 = {v: v + "'2" for v in st.iter_vars}
    eqs = _equal_rows(a, b, ren1, ren2)
    if eqs is None:
        return None
    ineqs = _domain_rows(st, "'1") + _domain_rows(st, "'2")
    res = refute(eqs, ineqs)
    if res is not None:
        method, used = res
        cert = tuple(sorted(u for u in used if not u.startswith(a.render())))
        return DisjointnessWitness((a, b), "global", cert, method)
    eqs = _equal_rows(a, b, {}, {})
    res = refute(eqs, _domain_rows(st, ""))
    if res is not None:
        method, used = res
        cert = tuple(sorted(u for u in used if not u.startswith(a.render())))
        return DisjointnessWitness((a, b), "pointwise", cert, method)
    return None


# projections ---------------------------------------------------------------

def _components(info: AccessInfo) -> list[tuple[list[ArrayAccess], ArrayAccess | None]]:
    """Group accesses that are equal up to a constant translation."""
    groups: list[tuple[tuple[Affine, ...], list[ArrayAccess]]] = []
    for acc in info.inputs:
        lin = acc.linear_part()
        for key, members in groups:
            if key == lin:
                members.append(acc)
                break
        else:
            groups.append((lin, [acc]))
    out = [(members, None) for _key, members in groups]
    outp = info.output
    if outp is not None:
        for idx, (key, _m) in enumerate(groups):
            if key == outp.linear_part():
                out[idx] = (out[idx][0], outp)
                break
        else:
            out.append(([], outp))
    return out


def split_disjoint(st: Statement, info: AccessInfo) -> list[AccessInfo]:
    """Split a mismatched access group into virtual arrays, one per translation class."""
    return split_with_witnesses(st, info)[0]


def split_with_witnesses(st: Statement, info: AccessInfo
                         ) -> tuple[list[AccessInfo], list[DisjointnessWitness]]:
    comps = _components(info)
    witnesses: list[DisjointnessWitness] = []
    for x in range(len(comps)):
        for y in range(x + 1, len(comps)):
            ax = comps[x][0] + ([comps[x][1]] if comps[x][1] is not None else [])
            ay = comps[y][0] + ([comps[y][1]] if comps[y][1] is not None else [])
            for a in ax:
                for b in ay:
                    w = prove_disjoint(st, a, b)
                    if w is None:
                        raise CannotProveDisjoint(
                            f"statement {st.statement_id}: cannot prove {a.render()} and {b.render()} "
                            f"access disjoint elements")
                    witnesses.append(w)
    ivars = set(st.iter_vars)
    out = []
    for n, (inputs, outp) in enumerate(comps, start=1):
        name = f"{info.source}_{n}"
        ins = [acc.rename({}, name) for acc in inputs]
        o = outp.rename({}, name) if outp is not None else None
        out.append(decompose(name, info.source, ins, o, ivars))
    return out, witnesses


def _needs_version(info: AccessInfo) -> bool:
    out = info.output
    return out is not None and any(acc.index == out.index for acc in info.inputs)


def version_access_group(st: Statement, info: AccessInfo) -> tuple[AccessInfo, str]:
    """Append a version dimension to an in-place updated access group."""
    out = info.output
    if out is None or not _needs_version(info):
        raise SoapError(f"{info.array} is not updated in place")
    if any(acc.index != out.index for acc in info.inputs):
        raise UnsupportedAccess(
            f"statement {st.statement_id}: in-place update of {info.array} mixed with shifted reads")
    used = set()
    for a in out.index:
        used |= a.names()
    free = [v for v in st.iter_vars if v not in used]
    if not free:
        raise NoFreeVariable(
            f"statement {st.statement_id}: every loop variable indexes {out.render()}; no update loop")
    v = free[-1]
    ins = [ArrayAccess(acc.array, acc.index + (Affine.build({v: 1}),)) for acc in info.inputs]
    o = ArrayAccess(out.array, out.index + (Affine.build({v: 1}, 1),))
    return decompose(info.array, info.source, ins, o, set(st.iter_vars)), v


def add_version_dimension(st: Statement, info: AccessInfo) -> SoapStatement:
    versioned, v = version_access_group(st, info)
    infos = tuple(versioned if i.array == info.array else i for i in extract_accesses(st))
    if versioned not in infos:
        infos = infos + (versioned,)
    return SoapStatement(st, infos, ((info.array, v),))


def _stride_conditions(info: AccessInfo, d: int) -> tuple[list[str], bool]:
    """Injectivity predicates for dimension ``d`` and whether they are symbolic."""
    expr = info.base[d]
    ivars = info.extents[d].vars
    coeffs = {n: c for n, c in expr.terms if n in ivars}
    unit = [n for n, c in coeffs.items() if c in (1, -1)]
    strided = [(n, c) for n, c in coeffs.items() if c not in (1, -1)]
    conds = []
    inner = unit[0] if unit else None
    for n, c in strided:
        target = f"|D^{inner}|" if inner else "inner range"
        conds.append(f"{c} >= {target}")
    return conds, any(isinstance(c, str) for _, c in strided)


def project_noninjective(st: Statement, info: AccessInfo) -> list[SoapStatement]:
    """Case projections for a strided access group (injective and overlap regimes)."""
    cases = []
    for kind, infos in _projected_variants(st, info):
        cases.append(SoapStatement(st, infos, case_condition=kind[1], case_kind=kind[0]))
    return cases


def _projected_variants(st: Statement, info: AccessInfo):
    sums = [d for d, e in enumerate(info.extents) if e.kind == "sum"]
    if not sums:
        return [(("injective", None), (info,))]
    conds: list[str] = []
    any_strided = False
    for d in sums:
        other = [e.vars for i, e in enumerate(info.extents) if i != d]
        for vs in other:
            if set(vs) & set(info.extents[d].vars):
                raise UnsupportedAccess(f"{info.array}: variable shared between a combined and another dimension")
        c, _sym = _stride_conditions(info, d)
        conds += c
        any_strided = any_strided or bool(c)
    variants = []
    if any_strided:
        prod = replace(info, extents=tuple(Extent("prod", e.vars) if e.kind == "sum" else e
                                           for e in info.extents), reason=None)
        variants.append((("injective", " and ".join(conds)), prod))
    mx = replace(info, extents=tuple(Extent("max", e.vars) if e.kind == "sum" else e
                                     for e in info.extents), reason=None)
    variants.append((("overlap", "unit strides" if any_strided else None), mx))
    return [(k, (v,)) for k, v in variants]


def normalize(st: Statement) -> list[SoapStatement]:
    """All SOAP projections of one statement (one entry per stride regime)."""
    infos: list[AccessInfo] = []
    witnesses: list[DisjointnessWitness] = []
    versions: list[tuple[str, str]] = []
    warnings: list[str] = []
    for info in extract_accesses(st):
        parts = [info]
        if info.reason == "VariableMismatch":
            parts, found = split_with_witnesses(st, info)
            witnesses += found
        for part in parts:
            if part.reason == "RepeatedVariable":
                raise UnsupportedAccess(f"statement {st.statement_id}: {part.array} repeats a loop variable "
                                        f"across dimensions")
            if _needs_version(part):
                part, v = version_access_group(st, part)
                versions.append((part.array, v))
            infos.append(part)
    strided = [i for i, info in enumerate(infos) if any(e.kind == "sum" for e in info.extents)]
    if not strided:
        return [SoapStatement(st, tuple(infos), tuple(versions), None, None, tuple(witnesses), tuple(warnings))]
    by_kind: dict[str, list] = {}
    conds: dict[str, list[str]] = {}
    for i in strided:
        for (kind, cond), variant in _projected_variants(st, infos[i]):
            by_kind.setdefault(kind, []).append((i, variant[0]))
            if cond:
                conds.setdefault(kind, []).append(cond)
    numeric_stride = any(c and not any(ch.isalpha() for ch in c.split(">=")[0])
                         for c in conds.get("injective", []))
    if numeric_stride:
        warnings.append("numeric stride above 1: the intensity lies between the reported injective "
                        "and overlap cases")
    out = []
    for kind in ("injective", "overlap"):
        if kind not in by_kind:
            continue
        new = list(infos)
        for i, variant in by_kind[kind]:
            new[i] = variant
        cond = " and ".join(conds.get(kind, [])) or None
        out.append(SoapStatement(st, tuple(new), tuple(versions), cond, kind, tuple(witnesses), tuple(warnings)))
    return out
