"""Canonical multivariate expressions with rational coefficients and exponents.

An expression is a sum of monomials ``c * r * x1^e1 * ... * xn^en`` where ``c`` is
a rational, ``r`` is a product of prime radicals ``p^q`` with ``0 < q < 1`` and the
exponents ``e`` are rationals.  Products of distinct prime radicals are linearly
independent over the rationals, so keeping radicals in the key makes structural
equality coincide with mathematical equality.
"""
from __future__ import annotations

import ast
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Union

import numpy as np
from scipy.optimize import nnls

Number = Union[int, Fraction]
Powers = tuple[tuple[str, Fraction], ...]
Radical = tuple[tuple[int, Fraction], ...]
Key = tuple[Powers, Radical]


class SymbolicError(Exception):
    pass


class UnclassifiedSymbol(SymbolicError):
    pass


class NonMonomialPower(SymbolicError):
    """Raised for a fractional or negative power of a sum of monomials."""


class ExpressionSyntaxError(SymbolicError):
    pass


@lru_cache(maxsize=4096)
def _factorize(n: int) -> tuple[tuple[int, int], ...]:
    out = []
    p = 2
    while p * p <= n:
        k = 0
        while n % p == 0:
            n //= p
            k += 1
        if k:
            out.append((p, k))
        p += 1 if p == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def _normalize_radical(coef: Fraction, rad: Mapping[int, Fraction]) -> tuple[Fraction, Radical]:
    """Move integer parts of radical exponents into the coefficient."""
    items = []
    for p, e in rad.items():
        whole = math.floor(e)
        frac = e - whole
        if whole:
            coef *= Fraction(p) ** whole
        if frac:
            items.append((p, frac))
    return coef, tuple(sorted(items))


def _rational_power(q: Fraction, e: Fraction) -> tuple[Fraction, Radical]:
    """q**e as (rational coefficient, radical) for q > 0."""
    if e.denominator == 1:
        return q ** int(e), ()
    if q <= 0:
        raise ValueError(f"cannot raise {q} to the non-integer power {e}")
    rad: dict[int, Fraction] = {}
    for p, k in _factorize(q.numerator):
        rad[p] = rad.get(p, Fraction(0)) + k * e
    for p, k in _factorize(q.denominator):
        rad[p] = rad.get(p, Fraction(0)) - k * e
    return _normalize_radical(Fraction(1), rad)


def _mul_keys(a: Key, b: Key) -> tuple[Fraction, Key]:
    powers = dict(a[0])
    for s, e in b[0]:
        powers[s] = powers.get(s, Fraction(0)) + e
    rad = dict(a[1])
    for p, e in b[1]:
        rad[p] = rad.get(p, Fraction(0)) + e
    coef, radical = _normalize_radical(Fraction(1), rad)
    pw = tuple(sorted((s, e) for s, e in powers.items() if e != 0))
    return coef, (pw, radical)


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    raise TypeError(f"not a rational number: {x!r}")


class SymExpr:
    """Immutable canonical sum of monomials."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Key, Fraction] | None = None):
        clean = {}
        for k, c in (terms or {}).items():
            if c != 0:
                clean[k] = Fraction(c)
        self._terms: dict[Key, Fraction] = clean
        self._hash = None

    # construction -----------------------------------------------------
    @classmethod
    def const(cls, value: Number) -> "SymExpr":
        return cls({((), ()): _as_fraction(value)})

    @classmethod
    def symbol(cls, name: str) -> "SymExpr":
        return cls({(((name, Fraction(1)),), ()): Fraction(1)})

    @classmethod
    def monomial(cls, coef: Number, powers: Mapping[str, Number]) -> "SymExpr":
        pw = tuple(sorted((s, _as_fraction(e)) for s, e in powers.items() if e != 0))
        return cls({(pw, ()): _as_fraction(coef)})

    @staticmethod
    def lift(x) -> "SymExpr":
        if isinstance(x, SymExpr):
            return x
        return SymExpr.const(x)

    # inspection -------------------------------------------------------
    @property
    def terms(self) -> dict[Key, Fraction]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def symbols(self) -> frozenset[str]:
        return frozenset(s for (pw, _r) in self._terms for s, _ in pw)

    def is_constant(self) -> bool:
        return all(not pw for (pw, _r) in self._terms)

    def rational_value(self) -> Fraction | None:
        """Exact value when the expression is a rational constant."""
        if not self._terms:
            return Fraction(0)
        if len(self._terms) == 1:
            ((pw, rad), c), = self._terms.items()
            if not pw and not rad:
                return c
        return None

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def monomials(self) -> list["SymExpr"]:
        return [SymExpr({k: c}) for k, c in sorted(self._terms.items(), key=_render_key)]

    def single(self) -> tuple[Fraction, Radical, dict[str, Fraction]]:
        """(coefficient, radical, powers) of a single-monomial expression."""
        if len(self._terms) != 1:
            raise NonMonomialPower(f"expected a monomial, got {render(self)}")
        ((pw, rad), c), = self._terms.items()
        return c, rad, dict(pw)

    def exponent(self, name: str) -> Fraction:
        return self.single()[2].get(name, Fraction(0))

    def coefficient_value(self) -> float:
        """Numeric value of the symbol-free factor of a monomial."""
        c, rad, _ = self.single()
        return float(c) * math.prod(p ** float(e) for p, e in rad)

    def without_symbols(self) -> "SymExpr":
        c, rad, _ = self.single()
        return SymExpr({((), rad): c})

    def degree(self, names: Iterable[str] | None = None) -> Fraction:
        names = None if names is None else set(names)
        best = None
        for (pw, _r) in self._terms:
            d = sum((e for s, e in pw if names is None or s in names), Fraction(0))
            best = d if best is None else max(best, d)
        return best if best is not None else Fraction(0)

    # arithmetic -------------------------------------------------------
    def __add__(self, other) -> "SymExpr":
        other = SymExpr.lift(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, Fraction(0)) + c
        return SymExpr(out)

    __radd__ = __add__

    def __neg__(self) -> "SymExpr":
        return SymExpr({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "SymExpr":
        return self + (-SymExpr.lift(other))

    def __rsub__(self, other) -> "SymExpr":
        return SymExpr.lift(other) - self

    def __mul__(self, other) -> "SymExpr":
        other = SymExpr.lift(other)
        out: dict[Key, Fraction] = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                extra, key = _mul_keys(k1, k2)
                out[key] = out.get(key, Fraction(0)) + c1 * c2 * extra
        return SymExpr(out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "SymExpr":
        other = SymExpr.lift(other)
        if other.is_zero():
            raise ZeroDivisionError("division by zero expression")
        return self * other ** -1

    def __rtruediv__(self, other) -> "SymExpr":
        return SymExpr.lift(other) / self

    def __pow__(self, exponent) -> "SymExpr":
        e = _as_fraction(exponent)
        if len(self._terms) == 1:
            ((pw, rad), c), = self._terms.items()
            if c < 0 and e.denominator != 1:
                raise ValueError("fractional power of a negative coefficient")
            sign = -1 if (c < 0 and e.numerator % 2) else 1
            coef, cr = _rational_power(abs(c), e)
            r = {p: x * e for p, x in rad}
            for p, x in cr:
                r[p] = r.get(p, Fraction(0)) + x
            coef, radical = _normalize_radical(coef, r)
            powers = tuple((s, x * e) for s, x in pw if x * e != 0)
            return SymExpr({(powers, radical): sign * coef})
        if e.denominator == 1 and e >= 0:
            out = SymExpr.const(1)
            for _ in range(int(e)):
                out = out * self
            return out
        if not self._terms and e > 0:
            return SymExpr()
        raise NonMonomialPower(f"cannot raise {render(self)} to {e}")

    # comparison -------------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = SymExpr.const(other)
        if not isinstance(other, SymExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"SymExpr({render(self)!r})"

    def __str__(self) -> str:
        return render(self)

    # evaluation -------------------------------------------------------
    def evaluate(self, bindings: Mapping[str, float]) -> float:
        total = 0.0
        for (pw, rad), c in self._terms.items():
            v = float(c)
            for p, e in rad:
                v *= p ** float(e)
            for s, e in pw:
                if s not in bindings:
                    raise KeyError(f"unbound symbol {s}")
                v *= float(bindings[s]) ** float(e)
            total += v
        return total


ZERO = SymExpr()
ONE = SymExpr.const(1)


def sym(name: str) -> SymExpr:
    return SymExpr.symbol(name)


def const(value: Number) -> SymExpr:
    return SymExpr.const(value)


def simplify(e: SymExpr) -> SymExpr:
    """Return the canonical form.  Expressions are canonical on construction."""
    return SymExpr(e.terms)


def substitute(e: SymExpr, bindings: Mapping[str, object]) -> SymExpr:
    """Simultaneous substitution of symbols by expressions or numbers."""
    lifted = {s: SymExpr.lift(v) for s, v in bindings.items()}
    out = ZERO
    for (pw, rad), c in e.terms.items():
        term = SymExpr({((), rad): c})
        for s, x in pw:
            if s in lifted:
                term = term * lifted[s] ** x
            else:
                term = term * SymExpr({(((s, x),), ()): Fraction(1)})
        out = out + term
    return out


def evaluate(e: SymExpr, bindings: Mapping[str, float]) -> float:
    return e.evaluate(bindings)


def equal_by_evaluation(a: SymExpr, b: SymExpr, trials: int = 20, seed: int = 0,
                        rel_tol: float = 1e-9) -> bool:
    """Compare two expressions at random positive rational points."""
    rng = random.Random(seed)
    names = sorted(a.symbols() | b.symbols())
    for _ in range(trials):
        pt = {s: rng.randint(1, 97) / rng.randint(1, 13) for s in names}
        va, vb = a.evaluate(pt), b.evaluate(pt)
        if not math.isclose(va, vb, rel_tol=rel_tol, abs_tol=1e-12):
            return False
    return True


# growth ordering ------------------------------------------------------------

_REL = re.compile(
    r"^\s*([A-Za-z_]\w*)\s*(<=|<|>=|>)\s*(?:(\d+(?:/\d+)?)\s*\*\s*)?([A-Za-z_]\w*)\s*(?:/\s*(\d+))?\s*$")


@dataclass(frozen=True)
class Relation:
    """``smaller < factor * larger`` for all parameter values of interest."""
    smaller: str
    larger: str
    factor: Fraction = Fraction(1)

    @classmethod
    def parse(cls, text: str) -> "Relation":
        m = _REL.match(text)
        if not m:
            raise ValueError(f"cannot parse relation {text!r}; expected e.g. 'T < N/2'")
        lhs, op, mult, rhs, div = m.groups()
        factor = Fraction(mult or 1) / int(div or 1)
        if op in ("<", "<="):
            return cls(lhs, rhs, factor)
        if factor != 1:
            raise ValueError(f"scaled right-hand side needs '<' form: {text!r}")
        return cls(rhs, lhs, Fraction(1))

    def __str__(self) -> str:
        rhs = self.larger if self.factor == 1 else f"{self.factor}*{self.larger}"
        return f"{self.smaller} < {rhs}"


@dataclass(frozen=True)
class GrowthOrder:
    growing: tuple[str, ...]
    bounded: tuple[str, ...] = ("S",)
    assumptions: tuple[Relation, ...] = field(default_factory=tuple)

    def __post_init__(self):
        overlap = set(self.growing) & set(self.bounded)
        if overlap:
            raise ValueError(f"symbols both growing and bounded: {sorted(overlap)}")

    @classmethod
    def for_symbols(cls, symbols: Iterable[str], bounded: Iterable[str] = ("S",),
                    assumptions: Iterable[Relation | str] = ()) -> "GrowthOrder":
        bounded = tuple(bounded)
        growing = tuple(sorted(s for s in set(symbols) if s not in bounded))
        rels = tuple(a if isinstance(a, Relation) else Relation.parse(a) for a in assumptions)
        return cls(growing, bounded, rels)


def _dominated_by_assumptions(diff: dict[str, Fraction], order: GrowthOrder) -> bool:
    """True when ``diff`` (exponent vector of m2/m1) is a nonnegative mix of
    assumption directions, so that m2 <= const * m1."""
    if not order.assumptions or not any(diff.values()):
        return False
    names = list(order.growing)
    A = np.zeros((len(names), len(order.assumptions)))
    for j, rel in enumerate(order.assumptions):
        if rel.smaller in names:
            A[names.index(rel.smaller), j] += 1
        if rel.larger in names:
            A[names.index(rel.larger), j] -= 1
    b = np.array([float(diff.get(n, 0)) for n in names])
    _, resid = nnls(A, b)
    return resid < 1e-9


def leading_term(e: SymExpr, order: GrowthOrder) -> SymExpr:
    """Sum of the monomials that are maximal under ``order``."""
    known = set(order.growing) | set(order.bounded)
    missing = sorted(e.symbols() - known)
    if missing:
        raise UnclassifiedSymbol(f"symbols not in the growth order: {', '.join(missing)}")
    if e.is_zero():
        return e
    grow = set(order.growing)

    def rank(key: Key):
        pw = dict(key[0])
        g = sum((x for s, x in pw.items() if s in grow), Fraction(0))
        b = sum((x for s, x in pw.items() if s not in grow), Fraction(0))
        return g, b

    terms = e.terms
    best = max(rank(k) for k in terms)
    top = [k for k in terms if rank(k) == best]
    keep = []
    for k in top:
        mine = dict(k[0])
        dominated = False
        for other in top:
            if other == k:
                continue
            theirs = dict(other[0])
            diff = {s: mine.get(s, Fraction(0)) - theirs.get(s, Fraction(0)) for s in grow}
            if _dominated_by_assumptions(diff, order):
                dominated = True
                break
        if not dominated:
            keep.append(k)
    return SymExpr({k: terms[k] for k in keep})


def compare_growth(a: SymExpr, b: SymExpr, symbol: str = "S") -> int:
    """Asymptotic comparison of two monomials in one symbol: -1, 0 or 1."""
    ea, eb = a.exponent(symbol), b.exponent(symbol)
    if ea != eb:
        return -1 if ea < eb else 1
    ca, cb = a.coefficient_value(), b.coefficient_value()
    if math.isclose(ca, cb, rel_tol=1e-12):
        return 0
    return -1 if ca < cb else 1


# rendering ------------------------------------------------------------------

def _total_degree(key: Key) -> Fraction:
    return sum((e for _s, e in key[0]), Fraction(0))


def _render_key(item):
    key = item[0]
    return (-_total_degree(key), tuple((s, -e) for s, e in key[0]), key[1])


def _power_str(base: str, e: Fraction) -> str:
    if e == 1:
        return base
    if e == Fraction(1, 2):
        return f"sqrt({base})"
    if e.denominator == 1:
        return f"{base}^{e.numerator}"
    return f"{base}^({e.numerator}/{e.denominator})"


def _render_monomial(key: Key, c: Fraction) -> tuple[bool, str]:
    pw, rad = key
    num = [str(abs(c.numerator))] if abs(c.numerator) != 1 else []
    num += [_power_str(str(p), e) for p, e in rad]
    num += [_power_str(s, e) for s, e in pw if e > 0]
    den = [str(c.denominator)] if c.denominator != 1 else []
    den += [_power_str(s, -e) for s, e in pw if e < 0]
    text = "*".join(num) if num else "1"
    if den:
        text += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
    return c < 0, text


def render(e: SymExpr) -> str:
    if e.is_zero():
        return "0"
    parts = []
    for i, (key, c) in enumerate(sorted(e.terms.items(), key=_render_key)):
        neg, text = _render_monomial(key, c)
        if i == 0:
            parts.append(("-" if neg else "") + text)
        else:
            parts.append((" - " if neg else " + ") + text)
    return "".join(parts)


# parsing --------------------------------------------------------------------

def _eval_node(node) -> SymExpr:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return SymExpr.const(node.value)
    if isinstance(node, ast.Name):
        return SymExpr.symbol(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        left, right = _eval_node(node.left), _eval_node(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            return left / right
        if isinstance(node.op, ast.Pow):
            ex = right.rational_value()
            if ex is None:
                raise ExpressionSyntaxError("exponent must be a rational constant")
            return left ** ex
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in ("sqrt", "cbrt") and len(node.args) == 1):
        arg = _eval_node(node.args[0])
        return arg ** (Fraction(1, 2) if node.func.id == "sqrt" else Fraction(1, 3))
    raise ExpressionSyntaxError(f"unsupported expression element: {ast.dump(node)}")


def parse_expr(text: str) -> SymExpr:
    """Parse the canonical rendering (or any ``+ - * / ^ sqrt`` expression)."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionSyntaxError(f"cannot parse {text!r}: {exc.msg}") from None
    return _eval_node(tree)
