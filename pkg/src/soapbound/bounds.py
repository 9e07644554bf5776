"""Per-statement bounds: access-set sizes, optimal tiles, intensity and I/O bound.

The tiling problem ``max c0 * prod(b) s.t. sum_m c_m * b^e_m <= X, b >= 1`` is a
geometric program.  Its AM-GM dual is solved as a linear program for the
exponent weights; coefficients and tile sizes are then recomputed exactly as
rational powers of rationals.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from .frontend import AccessInfo, Statement
from .soap import SoapStatement
from .symbolic import (ONE, ZERO, GrowthOrder, SymExpr, compare_growth, const, leading_term,
                       substitute, sym)

log = logging.getLogger(__name__)

X = sym("X")
S = sym("S")


class BoundsError(Exception):
    pass


class EmptyDomain(BoundsError):
    pass


class UnboundedTile(BoundsError):
    pass


class DegenerateProgram(BoundsError):
    pass


class NonMonomialChi(BoundsError):
    pass


# iteration domain size -----------------------------------------------------

@lru_cache(maxsize=None)
def _bernoulli(n: int) -> tuple[Fraction, ...]:
    """B_0..B_n with B_1 = -1/2."""
    B = [Fraction(0)] * (n + 1)
    B[0] = Fraction(1)
    for m in range(1, n + 1):
        B[m] = -sum(math.comb(m + 1, k) * B[k] for k in range(m)) / (m + 1)
    return tuple(B)


@lru_cache(maxsize=None)
def _power_sum(k: int) -> tuple[Fraction, ...]:
    """Coefficients c_j with sum_{v=0}^{n-1} v^k = sum_j c_j n^j."""
    B = _bernoulli(k)
    coeffs = [Fraction(0)] * (k + 2)
    for j in range(k + 1):
        coeffs[k + 1 - j] += Fraction(math.comb(k + 1, j)) * B[j] / (k + 1)
    return tuple(coeffs)


def _sum_over(expr: SymExpr, var: str, lo: SymExpr, hi: SymExpr) -> SymExpr:
    """sum_{var=lo}^{hi-1} expr for a polynomial in ``var``."""
    by_power: dict[int, SymExpr] = {}
    for (pw, rad), c in expr.terms.items():
        p = dict(pw)
        e = p.pop(var, Fraction(0))
        if e.denominator != 1 or e < 0:
            raise BoundsError(f"non-polynomial summand in {var}")
        rest = SymExpr({(tuple(sorted(p.items())), rad): c})
        by_power[int(e)] = by_power.get(int(e), ZERO) + rest
    total = ZERO
    for k, coef in by_power.items():
        F = _power_sum(k)

        def at(x: SymExpr) -> SymExpr:
            out = ZERO
            for j, cj in enumerate(F):
                if cj:
                    out = out + cj * x ** j
            return out

        total = total + coef * (at(hi) - at(lo))
    return total


def domain_size(st: Statement) -> SymExpr:
    """Exact lattice-point count of the iteration domain (nonempty ranges assumed)."""
    count = ONE
    for lp in reversed(st.loops):
        count = _sum_over(count, lp.var, lp.lower.to_sym(), lp.upper.to_sym())
    names = sorted(count.symbols())
    if names:
        samples = [{n: 1000.0 for n in names}]
        for n in names:
            pt = {m: 1000.0 for m in names}
            pt[n] = 10000.0
            samples.append(pt)
        if all(count.evaluate(pt) <= 0 for pt in samples):
            raise EmptyDomain(f"statement {st.statement_id}: iteration domain is empty")
    elif count.rational_value() is not None and count.rational_value() <= 0:
        raise EmptyDomain(f"statement {st.statement_id}: iteration domain is empty")
    return count


# access sets ---------------------------------------------------------------

def _max_name(vars_: Sequence[str]) -> str:
    return "max(" + ",".join(vars_) + ")"


def _pick_max(values: list[SymExpr]) -> SymExpr:
    best = values[0]
    for v in values[1:]:
        if v.rational_value() is not None and best.rational_value() is not None:
            if v.rational_value() > best.rational_value():
                best = v
            continue
        names = sorted((v.symbols() | best.symbols()))
        if len(names) != 1 or not v.is_monomial() or not best.is_monomial():
            raise BoundsError("cannot compare symbolic extents inside max()")
        if compare_growth(v, best, names[0]) > 0:
            best = v
    return best


def dimension_sizes(info: AccessInfo, tiles: Mapping[str, SymExpr]) -> list[SymExpr]:
    sizes = []
    for e in info.extents:
        if e.kind == "const":
            sizes.append(ONE)
        elif e.kind == "var":
            sizes.append(SymExpr.lift(tiles[e.vars[0]]))
        elif e.kind == "prod":
            out = ONE
            for v in e.vars:
                out = out * tiles[v]
            sizes.append(out)
        elif e.kind == "max":
            if _max_name(e.vars) in tiles:
                sizes.append(SymExpr.lift(tiles[_max_name(e.vars)]))
            else:
                sizes.append(_pick_max([SymExpr.lift(tiles[v]) for v in e.vars]))
        else:
            raise BoundsError(f"access group {info.array} is not normalized ({e.kind} extent)")
    return sizes


def access_set_polynomial(info: AccessInfo, sizes: Sequence[SymExpr]) -> SymExpr:
    full = ONE
    shrunk = ONE
    for d, t in zip(sizes, info.offset_sets):
        full = full * d
        shrunk = shrunk * (d - len(t))
    if info.includes_output:
        return full - shrunk
    return 2 * full - shrunk


def access_set_bound(info: AccessInfo, tiles: Mapping[str, object]) -> SymExpr:
    """Lower bound on the number of distinct elements touched by a rectangular tile."""
    lifted = {k: SymExpr.lift(v) for k, v in tiles.items()}
    return access_set_polynomial(info, dimension_sizes(info, lifted))


def dominant_terms(info: AccessInfo) -> list[tuple[Fraction, dict[str, Fraction]]]:
    """Top-degree monomials of the access-set bound in the tile variables."""
    sizes = []
    for e in info.extents:
        if e.kind == "const":
            sizes.append(ONE)
        elif e.kind == "var":
            sizes.append(sym(e.vars[0]))
        elif e.kind == "prod":
            out = ONE
            for v in e.vars:
                out = out * sym(v)
            sizes.append(out)
        elif e.kind == "max":
            sizes.append(sym(_max_name(e.vars)))
        else:
            raise BoundsError(f"access group {info.array} is not normalized ({e.kind} extent)")
    poly = access_set_polynomial(info, sizes)
    if poly.is_zero():
        return []
    top = poly.degree()
    out = []
    for (pw, rad), c in poly.terms.items():
        if sum((e for _s, e in pw), Fraction(0)) == top and top > 0:
            out.append((c, dict(pw)))
    return out


def max_groups(infos: Iterable[AccessInfo]) -> dict[str, tuple[str, ...]]:
    groups = {}
    for info in infos:
        for e in info.extents:
            if e.kind == "max":
                groups[_max_name(e.vars)] = e.vars
    return groups


# exact linear algebra --------------------------------------------------------

def _rref(rows: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    A = [list(r) for r in rows]
    pivots = []
    r = 0
    ncols = len(A[0]) if A else 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        pv = A[r][c]
        A[r] = [x / pv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A, pivots


def _solve_unique(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    n = len(A[0])
    aug = [row + [bi] for row, bi in zip(A, b)]
    R, piv = _rref(aug)
    if n in piv:
        return None
    if len(piv) < n:
        return None
    x = [Fraction(0)] * n
    for i, c in enumerate(piv):
        x[c] = R[i][n]
    return x


def _rank(A: list[list[Fraction]]) -> int:
    if not A:
        return 0
    return len(_rref(A)[1])


def _independent_rows(A: list[list[Fraction]]) -> list[int]:
    chosen: list[int] = []
    for i in range(len(A)):
        if _rank([A[j] for j in chosen + [i]]) > len(chosen):
            chosen.append(i)
    return chosen


def _inverse(M: list[list[Fraction]]) -> list[list[Fraction]]:
    n = len(M)
    aug = [row + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    R, piv = _rref(aug)
    if piv[:n] != list(range(n)):
        raise BoundsError("singular matrix")
    return [row[n:] for row in R]


def _pow_const(base: Fraction, e: Fraction) -> SymExpr:
    return const(base) ** e


# geometric program -----------------------------------------------------------

@dataclass
class TilingProblem:
    variables: tuple[str, ...]
    objective_coef: Fraction
    terms: list[tuple[Fraction, dict[str, Fraction]]]
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def combined(self) -> list[tuple[Fraction, dict[str, Fraction]]]:
        acc: dict[tuple, Fraction] = {}
        for c, e in self.terms:
            key = tuple(sorted((k, v) for k, v in e.items() if v))
            acc[key] = acc.get(key, Fraction(0)) + c
        return [(c, dict(k)) for k, c in sorted(acc.items()) if c]


@dataclass
class _Candidate:
    alpha: Fraction
    K: SymExpr
    tiles: dict[str, SymExpr]
    weights: dict[tuple, Fraction]
    pinned: tuple[str, ...]
    resolution: dict[str, str]
    exact: bool


@dataclass
class TileSolution:
    variables: tuple[str, ...]
    tile_sizes: dict[str, SymExpr]
    chi: SymExpr
    alpha: Fraction
    coefficient: SymExpr
    constraint: list[tuple[Fraction, dict[str, Fraction]]]
    constraint_terms: list[SymExpr]
    kkt_residual_check: dict
    pinned: tuple[str, ...] = ()
    resolution: dict[str, str] = field(default_factory=dict)
    exact: bool = True
    warnings: list[str] = field(default_factory=list)

    def term_levels(self) -> list[SymExpr]:
        """Each constraint term at the optimal tiles, as a monomial in X."""
        out = []
        for c, e in self.constraint:
            term = SymExpr.const(c)
            for name, p in e.items():
                if name in self.tile_sizes:
                    t = self.tile_sizes[name]
                else:
                    cands = [self.tile_sizes[v] for v in _group_vars(name)]
                    t = max(cands, key=lambda m: (m.exponent("X"), m.coefficient_value()))
                term = term * t ** p
            out.append(term)
        return out

    def kkt_check(self, x: float) -> dict:
        """Relative residual of the top-level (active) terms against X, plus the lower-order excess."""
        levels = self.term_levels()
        top = max(m.exponent("X") for m in levels)
        active = sum(m.evaluate({"X": x}) for m in levels if m.exponent("X") == top)
        rest = sum(m.evaluate({"X": x}) for m in levels if m.exponent("X") != top)
        return {"X": x, "top_exponent": top, "relative_residual": (active - x) / x,
                "lower_order_excess": rest / x,
                "min_tile": min(t.evaluate({"X": x}) for t in self.tile_sizes.values())}

    def constraint_value(self, x: float) -> float:
        """Solver constraint evaluated at the optimal tiles for numeric X."""
        vals = {v: self.tile_sizes[v].evaluate({"X": x}) for v in self.variables}
        total = 0.0
        for c, e in self.constraint:
            term = float(c)
            for name, p in e.items():
                if name in vals:
                    term *= vals[name] ** float(p)
                else:
                    term *= max(vals[v] for v in _group_vars(name)) ** float(p)
            total += term
        return total


def _group_vars(name: str) -> tuple[str, ...]:
    return tuple(name[4:-1].split(","))


def _resolutions(groups: dict[str, tuple[str, ...]]):
    """Ways to resolve each max(): all variables tied, or one variable dominant."""
    names = sorted(groups)
    options = [[("tie", None)] + [("dominant", v) for v in groups[n]] for n in names]
    for combo in itertools.product(*options):
        yield dict(zip(names, combo))


def _dual_lp(terms: list[tuple[Fraction, dict[str, Fraction]]], obj: dict[str, Fraction],
             variables: list[str]):
    M = len(terms)
    n = len(variables)
    A = np.zeros((n + 1, M + 1))
    for m, (_c, e) in enumerate(terms):
        for t, v in enumerate(variables):
            A[t, m] = float(e.get(v, 0))
        A[n, m] = 1.0
    for t, v in enumerate(variables):
        A[t, M] = -float(obj[v])
    b = np.zeros(n + 1)
    b[n] = 1.0
    cost = np.zeros(M + 1)
    cost[M] = -1.0
    bounds = [(0, None)] * M + [(None, None)]
    res = linprog(cost, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return res.x[:M], res.x[M], A, b


def _face_weights(terms, obj, variables, delta, v):
    """Exact dual weights on the optimal face, or None when it is not a point."""
    M = len(terms)
    support = [m for m in range(M) if delta[m] > 1e-9]
    rows = []
    rhs = []
    for t in variables:
        rows.append([Fraction(terms[m][1].get(t, 0)) for m in support] + [-Fraction(obj[t])])
        rhs.append(Fraction(0))
    rows.append([Fraction(1)] * len(support) + [Fraction(0)])
    rhs.append(Fraction(1))
    sol = _solve_unique(rows, rhs)
    if sol is None or any(x <= 0 for x in sol[:-1]):
        return None
    vstar = sol[-1]
    weights = {m: sol[i] for i, m in enumerate(support)}
    full = [[Fraction(terms[m][1].get(t, 0)) for m in range(M)] for t in variables]
    full.append([Fraction(1)] * M)
    if _rank(full) == M:
        return weights, vstar
    # optimal face may be larger than a point; probe every weight's range
    n = len(variables)
    A = np.zeros((n + 1, M))
    for m in range(M):
        for t, var in enumerate(variables):
            A[t, m] = float(terms[m][1].get(var, 0))
        A[n, m] = 1.0
    b = np.array([float(vstar * obj[var]) for var in variables] + [1.0])
    for m in range(M):
        c = np.zeros(M)
        c[m] = 1.0
        lo = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * M, method="highs")
        hi = linprog(-c, A_eq=A, b_eq=b, bounds=[(0, None)] * M, method="highs")
        if lo.status != 0 or hi.status != 0 or abs(hi.x[m] - lo.x[m]) > 1e-9:
            return None
    return weights, vstar


def _entropy_weights(terms, obj, variables, vstar: Fraction):
    """Numeric dual weights maximizing sum d*log(c/d) on the optimal face."""
    M = len(terms)
    n = len(variables)
    A = np.zeros((n + 1, M))
    for m in range(M):
        for t, var in enumerate(variables):
            A[t, m] = float(terms[m][1].get(var, 0))
        A[n, m] = 1.0
    b = np.array([float(vstar * obj[var]) for var in variables] + [1.0])
    c = np.array([float(t[0]) for t in terms])

    def negf(d):
        d = np.maximum(d, 1e-300)
        return -float(np.sum(d * np.log(c / d)))

    x0 = np.full(M, 1.0 / M)
    res = minimize(negf, x0, method="SLSQP", bounds=[(0, 1)] * M,
                   constraints=[{"type": "eq", "fun": lambda d: A @ d - b}],
                   options={"ftol": 1e-14, "maxiter": 500})
    d = np.maximum(res.x, 0)
    weights = {m: Fraction(float(d[m])).limit_denominator(10**6) for m in range(M) if d[m] > 1e-9}
    total = sum(weights.values())
    return {m: w / total for m, w in weights.items()}


def _solve_reduced(terms, obj: dict[str, Fraction], variables: list[str]):
    """Relaxed optimum over positive reals: (alpha, K, tiles, weights, exact) or None."""
    if not variables:
        return None
    for v in variables:
        if not any(e.get(v, 0) for _c, e in terms):
            return None
    lp = _dual_lp(terms, obj, variables)
    if lp is None:
        return None
    delta, v_float, _A, _b = lp
    if v_float <= 1e-12:
        return None
    face = _face_weights(terms, obj, variables, delta, v_float)
    exact = True
    if face is None:
        vstar = Fraction(float(v_float)).limit_denominator(1000)
        weights = _entropy_weights(terms, obj, variables, vstar)
        exact = False
    else:
        weights, vstar = face
    alpha = 1 / vstar
    C = ONE
    for m, w in weights.items():
        C = C * _pow_const(terms[m][0] / w, w)
    K = C ** (-alpha)
    # tiles: c_m b^e_m = w_m X on the active terms, minimum-norm in log space
    active = sorted(weights)
    E = [[Fraction(terms[m][1].get(t, 0)) for t in variables] for m in active]
    R = _independent_rows(E)
    ER = [E[i] for i in R]
    gram = [[sum(a * b for a, b in zip(r1, r2)) for r2 in ER] for r1 in ER]
    inv = _inverse(gram)
    G = [[sum(ER[k][t] * inv[k][j] for k in range(len(R))) for j in range(len(R))]
         for t in range(len(variables))]
    tiles = {}
    logs = {}
    for t, var in enumerate(variables):
        y = sum(G[t])
        coef = ONE
        lg = 0.0
        for j, i in enumerate(R):
            m = active[i]
            base = weights[m] / terms[m][0]
            if G[t][j]:
                coef = coef * _pow_const(base, G[t][j])
                lg += float(G[t][j]) * math.log(float(base))
        tiles[var] = coef * X ** y if y else coef
        logs[var] = (y, lg)
    return alpha, K, tiles, logs, {tuple(sorted(terms[m][1].items())): w for m, w in weights.items()}, exact


def solve_problem(problem: TilingProblem) -> TileSolution:
    terms = problem.combined()
    if not terms:
        raise DegenerateProgram("access-set constraint does not depend on any tile variable")
    present = set()
    for _c, e in terms:
        for name in e:
            present |= set(_group_vars(name)) if name.startswith("max(") else {name}
    missing = [v for v in problem.variables if v not in present]
    if missing:
        raise UnboundedTile(f"tile variable(s) {', '.join(missing)} appear in no access set; "
                            f"their extent is the full loop range")
    best: _Candidate | None = None
    for res in _resolutions(problem.groups):
        for cand in _candidates(problem, terms, res):
            if best is None or cand.alpha > best.alpha or (
                    cand.alpha == best.alpha
                    and cand.K.coefficient_value() > best.K.coefficient_value() * (1 + 1e-12)):
                best = cand
    if best is None:
        raise DegenerateProgram("no feasible tiling with all tiles >= 1")
    chi = problem.objective_coef * best.K * X ** best.alpha
    sol = TileSolution(problem.variables, best.tiles, chi, best.alpha, problem.objective_coef * best.K,
                       terms, [], {}, best.pinned, best.resolution, best.exact)
    if not best.exact:
        sol.warnings.append("dual weights are not unique; the coefficient of chi was found numerically")
    sol.kkt_residual_check = sol.kkt_check(1e6)
    return sol


def _candidates(problem: TilingProblem, terms, res: dict[str, tuple[str, str | None]]):
    # merge tied variables and replace max() symbols
    rep = {v: v for v in problem.variables}
    for name, (kind, dom) in res.items():
        vs = problem.groups[name]
        if kind == "tie":
            for v in vs[1:]:
                rep[v] = rep[vs[0]]
    obj: dict[str, Fraction] = {}
    for v in problem.variables:
        obj[rep[v]] = obj.get(rep[v], Fraction(0)) + 1
    reduced = []
    for c, e in terms:
        ne: dict[str, Fraction] = {}
        for name, p in e.items():
            if name in problem.groups:
                kind, dom = res[name]
                target = rep[problem.groups[name][0]] if kind == "tie" else rep[dom]
            else:
                target = rep[name]
            ne[target] = ne.get(target, Fraction(0)) + p
        reduced.append((c, ne))
    merged = sorted(set(rep.values()), key=problem.variables.index)

    def expand(tiles: dict[str, SymExpr]) -> dict[str, SymExpr]:
        return {v: tiles[rep[v]] for v in problem.variables}

    def valid(logs) -> bool:
        for v, (y, lg) in logs.items():
            if y < 0 or (y == 0 and lg < -1e-12):
                return False
        for name, (kind, dom) in res.items():
            if kind != "dominant":
                continue
            d = rep[dom]
            yd, ld = logs.get(d, (Fraction(0), 0.0))
            for u in problem.groups[name]:
                if rep[u] == d:
                    continue
                yu, lu = logs.get(rep[u], (Fraction(0), 0.0))
                if yu > yd or (yu == yd and lu > ld + 1e-12):
                    return False
        return True

    found = []
    for size in range(len(merged) + 1):
        for pinned in itertools.combinations(merged, size):
            free = [v for v in merged if v not in pinned]
            sub_acc: dict[tuple, Fraction] = {}
            for c, e in reduced:
                ne = {k: p for k, p in e.items() if k in free and p}
                if not ne:
                    continue
                key = tuple(sorted(ne.items()))
                sub_acc[key] = sub_acc.get(key, Fraction(0)) + c
            sub_terms = [(c, dict(k)) for k, c in sorted(sub_acc.items())]
            out = _solve_reduced(sub_terms, {v: obj[v] for v in free}, free)
            if out is None:
                continue
            alpha, K, tiles, logs, weights, exact = out
            for p in pinned:
                logs[p] = (Fraction(0), 0.0)
            if not valid(logs):
                continue
            # inactive terms must stay below the active level
            ok = True
            for c, e in sub_terms:
                key = tuple(sorted(e.items()))
                if key in weights:
                    continue
                level = sum(p * logs[k][0] for k, p in e.items())
                if level >= 1:
                    ok = False
                    break
            if not ok:
                continue
            full_tiles = dict(tiles)
            for p in pinned:
                full_tiles[p] = ONE
            found.append(_Candidate(alpha, K, expand(full_tiles), weights, tuple(pinned), dict(
                (n, k if k == "tie" else f"{d} dominant") for n, (k, d) in res.items()), exact))
        if found and size == 0:
            break
    return found


def problem_from_soap(sst: SoapStatement) -> TilingProblem:
    terms = []
    for info in sst.infos:
        terms += dominant_terms(info)
    return TilingProblem(sst.iter_vars, Fraction(1), terms, max_groups(sst.infos))


def solve_tiling(sst: SoapStatement) -> TileSolution:
    sol = solve_problem(problem_from_soap(sst))
    sol.constraint_terms = [access_set_bound(info, sol.tile_sizes) for info in sst.infos]
    return sol


def intensity_and_X0(ts: TileSolution) -> tuple[SymExpr, SymExpr | None]:
    a = ts.alpha
    if a < 1:
        raise NonMonomialChi(f"chi grows like X^{a}; intensity vanishes for large X")
    if a == 1:
        return ts.coefficient, None
    X0 = (a / (a - 1)) * S
    rho = substitute(ts.chi, {"X": X0}) / (X0 - S)
    return rho, X0


# statement bound -----------------------------------------------------------------

@dataclass
class BoundResult:
    statement_id: int | str
    Q_bound: SymExpr
    leading: SymExpr
    X0: SymExpr | None
    rho: SymExpr
    tiles: TileSolution
    tiles_at_X0: dict[str, SymExpr]
    domain: SymExpr
    case_condition: str | None = None
    case_kind: str | None = None
    warnings: list[str] = field(default_factory=list)


def default_order(symbols: Iterable[str], assumptions: Iterable = ()) -> GrowthOrder:
    return GrowthOrder.for_symbols(symbols, ("S",), assumptions)


def statement_bound(sst: SoapStatement, order: GrowthOrder | None = None) -> BoundResult:
    st = sst.statement
    D = domain_size(st)
    ts = solve_tiling(sst)
    rho, X0 = intensity_and_X0(ts)
    warnings = list(sst.warnings) + list(ts.warnings)
    if X0 is not None:
        at = {v: substitute(t, {"X": X0}) for v, t in ts.tile_sizes.items()}
        total = ZERO
        for info in sst.infos:
            total = total + access_set_bound(info, at)
        Q = D * (total - S) / substitute(ts.chi, {"X": X0})
    else:
        at = dict(ts.tile_sizes)
        Q = D / ts.coefficient
    for info in sst.infos:
        if not info.includes_output:
            continue
        for e, offs in zip(info.extents, info.offset_sets):
            if offs and e.kind == "var" and at[e.vars[0]].is_constant():
                val = at[e.vars[0]].evaluate({})
                if val <= len(offs):
                    warnings.append(f"tile of {e.vars[0]} ({val:g}) does not exceed the {len(offs)} "
                                    f"offsets of {info.array}; access-set term assumes it does")
    if order is None:
        order = default_order(Q.symbols() | D.symbols() | {"S"})
    return BoundResult(st.statement_id, Q, leading_term(Q, order), X0, rho, ts, at, D,
                       sst.case_condition, sst.case_kind, warnings)
