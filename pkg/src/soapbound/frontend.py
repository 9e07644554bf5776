"""Parser for the loop-nest DSL and per-array access decomposition.

The DSL is a small subset of Python syntax::

    params: N, T, S
    for t in range(1, T):
        for i in range(t, N - t):
            A[i, t + 1] = f(A[i - 1, t], A[i, t], A[i + 1, t], B[i])

Loop bounds and array indices must be affine.  ``+=`` and ``-=`` read the
updated element, so the target also appears as the first input.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

from .symbolic import SymExpr, sym

Coef = Union[int, str]   # an integer, or a parameter name acting as a stride


class FrontendError(Exception):
    pass


class DSLSyntaxError(FrontendError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


class NonAffineBound(FrontendError):
    pass


class NonAffineIndex(FrontendError):
    pass


@dataclass(frozen=True)
class Affine:
    """``const + sum(coef * name)``; a string coefficient is a symbolic stride."""
    terms: tuple[tuple[str, Coef], ...] = ()
    const: int = 0

    @classmethod
    def build(cls, terms: Mapping[str, Coef], const: int = 0) -> "Affine":
        return cls(tuple(sorted((k, v) for k, v in terms.items() if v != 0)), const)

    def names(self) -> set[str]:
        return {n for n, _ in self.terms}

    def coefficient(self, name: str) -> Coef:
        return dict(self.terms).get(name, 0)

    def linear_part(self) -> "Affine":
        return Affine(self.terms, 0)

    def shifted(self, k: int) -> "Affine":
        return Affine(self.terms, self.const + k)

    def rename(self, mapping: Mapping[str, str]) -> "Affine":
        return Affine.build({mapping.get(n, n): c for n, c in self.terms}, self.const)

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.const
        for n, c in self.terms:
            total += (env[c] if isinstance(c, str) else c) * env[n]
        return total

    def to_sym(self) -> SymExpr:
        out = SymExpr.const(self.const)
        for n, c in self.terms:
            out = out + (sym(c) if isinstance(c, str) else c) * sym(n)
        return out

    def render(self) -> str:
        parts = []
        for n, c in self.terms:
            if isinstance(c, str):
                parts.append(("+", f"{c}*{n}"))
            elif c == 1:
                parts.append(("+", n))
            elif c == -1:
                parts.append(("-", n))
            else:
                parts.append(("+" if c > 0 else "-", f"{abs(c)}*{n}"))
        if self.const or not parts:
            parts.append(("+" if self.const >= 0 else "-", str(abs(self.const))))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, t in parts[1:]:
            text += f" {sign} {t}"
        return text


@dataclass(frozen=True)
class Loop:
    var: str
    lower: Affine
    upper: Affine   # exclusive


@dataclass(frozen=True)
class ArrayAccess:
    array: str
    index: tuple[Affine, ...]

    def render(self) -> str:
        return f"{self.array}[{', '.join(a.render() for a in self.index)}]"

    def rename(self, mapping: Mapping[str, str], array: str | None = None) -> "ArrayAccess":
        return ArrayAccess(array or self.array, tuple(a.rename(mapping) for a in self.index))

    def linear_part(self) -> tuple[Affine, ...]:
        return tuple(a.linear_part() for a in self.index)

    def offsets(self) -> tuple[int, ...]:
        return tuple(a.const for a in self.index)


@dataclass(frozen=True)
class Statement:
    statement_id: int
    loops: tuple[Loop, ...]
    output: ArrayAccess
    inputs: tuple[ArrayAccess, ...]
    accumulate: bool = False
    text: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)

    @property
    def iter_vars(self) -> tuple[str, ...]:
        return tuple(lp.var for lp in self.loops)

    @property
    def depth(self) -> int:
        return len(self.loops)

    def accesses(self) -> list[ArrayAccess]:
        return [*self.inputs, self.output]

    def domain_constraints(self) -> list[tuple[dict[str, int], int]]:
        """Loop bounds as ``sum(c * x) + k >= 0`` rows over iteration variables and parameters."""
        rows = []
        for lp in self.loops:
            lo = {n: c for n, c in lp.lower.terms}
            hi = {n: c for n, c in lp.upper.terms}
            rows.append(({lp.var: 1, **{n: -c for n, c in lo.items()}}, -lp.lower.const))
            up = dict(hi)
            up[lp.var] = up.get(lp.var, 0) - 1
            rows.append((up, lp.upper.const - 1))
        return rows


@dataclass(frozen=True)
class LoopNode:
    loop: Loop
    body: tuple["LoopNode | int", ...]


@dataclass(frozen=True)
class Program:
    parameters: tuple[str, ...]
    statements: tuple[Statement, ...]
    body: tuple[LoopNode | int, ...]
    name: str = field(default="program", compare=False)

    def size_parameters(self, memory_symbol: str = "S") -> tuple[str, ...]:
        return tuple(p for p in self.parameters if p != memory_symbol)


# parsing --------------------------------------------------------------------

_HEADER = re.compile(r"^\s*params\s*:\s*(.*)$")


def _affine(node: ast.AST, allowed_vars: set[str], params: set[str], err) -> Affine:
    """Convert an AST expression into an Affine or raise ``err``."""
    def go(n) -> tuple[dict[str, Coef], int]:
        if isinstance(n, ast.Constant) and isinstance(n.value, int) and not isinstance(n.value, bool):
            return {}, n.value
        if isinstance(n, ast.Name):
            if n.id not in allowed_vars and n.id not in params:
                raise err(f"unknown symbol {n.id!r}")
            return {n.id: 1}, 0
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            t, k = go(n.operand)
            if isinstance(n.op, ast.UAdd):
                return t, k
            if any(isinstance(c, str) for c in t.values()):
                raise err("negated symbolic stride")
            return {x: -c for x, c in t.items()}, -k
        if isinstance(n, ast.BinOp) and isinstance(n.op, (ast.Add, ast.Sub)):
            t1, k1 = go(n.left)
            t2, k2 = go(n.right)
            sign = 1 if isinstance(n.op, ast.Add) else -1
            out = dict(t1)
            for x, c in t2.items():
                if isinstance(c, str) or isinstance(out.get(x, 0), str):
                    if x in out or sign < 0:
                        raise err("symbolic stride combined with another coefficient")
                    out[x] = c
                else:
                    out[x] = out.get(x, 0) + sign * c
            return out, k1 + sign * k2
        if isinstance(n, ast.BinOp) and isinstance(n.op, ast.Mult):
            t1, k1 = go(n.left)
            t2, k2 = go(n.right)
            if not t1:
                t1, k1, t2, k2 = t2, k2, t1, k1
            if not t2:
                if any(isinstance(c, str) for c in t1.values()):
                    raise err("scaled symbolic stride")
                return {x: c * k2 for x, c in t1.items()}, k1 * k2
            # stride * variable, e.g. sw * w
            if (k1 == 0 and k2 == 0 and len(t1) == 1 and len(t2) == 1):
                (a, ca), = t1.items()
                (b, cb), = t2.items()
                if ca == 1 and cb == 1:
                    if a in params and b in allowed_vars:
                        return {b: a}, 0
                    if b in params and a in allowed_vars:
                        return {a: b}, 0
            raise err("product of non-constant terms")
        raise err(f"unsupported element {ast.unparse(n)!r}")

    terms, k = go(node)
    return Affine.build(terms, k)


def _collect_subscripts(node: ast.AST) -> Iterator[ast.Subscript]:
    if isinstance(node, ast.Subscript):
        yield node
        return
    for child in ast.iter_child_nodes(node):
        yield from _collect_subscripts(child)


class _Builder:
    def __init__(self, params: tuple[str, ...], source_lines: list[str]):
        self.params = params
        self.pset = set(params)
        self.lines = source_lines
        self.statements: list[Statement] = []
        self.arity: dict[str, int] = {}

    def access(self, node: ast.Subscript, ivars: set[str]) -> ArrayAccess:
        if not isinstance(node.value, ast.Name):
            raise DSLSyntaxError("array reference must be a plain name", node.lineno, node.col_offset + 1)
        name = node.value.id
        sl = node.slice
        elems = list(sl.elts) if isinstance(sl, ast.Tuple) else [sl]
        for e in elems:
            if any(True for _ in _collect_subscripts(e)):
                raise NonAffineIndex(f"line {node.lineno}: data-dependent index in {ast.unparse(node)}")

        def err(msg):
            return NonAffineIndex(f"line {node.lineno}: {msg} in {ast.unparse(node)}")

        index = tuple(_affine(e, ivars, self.pset, err) for e in elems)
        if name in self.arity and self.arity[name] != len(index):
            raise DSLSyntaxError(f"array {name} used with {len(index)} indices, "
                                 f"previously {self.arity[name]}", node.lineno, node.col_offset + 1)
        self.arity[name] = len(index)
        return ArrayAccess(name, index)

    def block(self, nodes: list[ast.stmt], loops: tuple[Loop, ...]) -> tuple:
        out = []
        for n in nodes:
            if isinstance(n, ast.For):
                out.append(self.loop(n, loops))
            elif isinstance(n, (ast.Assign, ast.AugAssign)):
                out.append(self.assignment(n, loops))
            elif isinstance(n, ast.Pass):
                continue
            else:
                raise DSLSyntaxError(f"unsupported statement {type(n).__name__}", n.lineno, n.col_offset + 1)
        return tuple(out)

    def loop(self, n: ast.For, loops: tuple[Loop, ...]) -> LoopNode:
        if not isinstance(n.target, ast.Name):
            raise DSLSyntaxError("loop variable must be a name", n.lineno, n.col_offset + 1)
        it = n.iter
        if not (isinstance(it, ast.Call) and isinstance(it.func, ast.Name) and it.func.id == "range"
                and 1 <= len(it.args) <= 2 and not it.keywords):
            raise DSLSyntaxError("loop header must be 'for v in range(lo, hi)'", n.lineno, n.col_offset + 1)
        var = n.target.id
        if var in self.pset or var in {lp.var for lp in loops}:
            raise DSLSyntaxError(f"loop variable {var!r} shadows a parameter or outer variable",
                                 n.lineno, n.col_offset + 1)
        outer = {lp.var for lp in loops}

        def err(msg):
            return NonAffineBound(f"line {n.lineno}: {msg}")

        if len(it.args) == 1:
            lo, hi = Affine(), _affine(it.args[0], outer, self.pset, err)
        else:
            lo = _affine(it.args[0], outer, self.pset, err)
            hi = _affine(it.args[1], outer, self.pset, err)
        if any(isinstance(c, str) for _, c in lo.terms + hi.terms):
            raise NonAffineBound(f"line {n.lineno}: product of symbols in a loop bound")
        if n.orelse:
            raise DSLSyntaxError("for/else is not supported", n.lineno, n.col_offset + 1)
        lp = Loop(var, lo, hi)
        return LoopNode(lp, self.block(n.body, loops + (lp,)))

    def assignment(self, n, loops: tuple[Loop, ...]) -> int:
        if not loops:
            raise DSLSyntaxError("statement outside any loop", n.lineno, n.col_offset + 1)
        target = n.targets[0] if isinstance(n, ast.Assign) else n.target
        if isinstance(n, ast.Assign) and len(n.targets) != 1:
            raise DSLSyntaxError("chained assignment", n.lineno, n.col_offset + 1)
        if not isinstance(target, ast.Subscript):
            raise DSLSyntaxError("assignment target must be an array element", n.lineno, n.col_offset + 1)
        ivars = {lp.var for lp in loops}
        out = self.access(target, ivars)
        inputs = [self.access(s, ivars) for s in _collect_subscripts(n.value)]
        accumulate = isinstance(n, ast.AugAssign)
        if accumulate:
            if not isinstance(n.op, (ast.Add, ast.Sub, ast.Mult)):
                raise DSLSyntaxError("only +=, -= and *= are supported", n.lineno, n.col_offset + 1)
            inputs.insert(0, out)
        sid = len(self.statements)
        text = "\n".join(self.lines[n.lineno - 1:n.end_lineno]).strip()
        self.statements.append(Statement(sid, loops, out, tuple(inputs), accumulate, text, n.lineno))
        return sid


def parse_program(source: str, name: str = "program") -> Program:
    lines = source.splitlines()
    params: tuple[str, ...] | None = None
    body_lines = []
    for ln in lines:
        m = _HEADER.match(ln)
        if m and params is None:
            names = [p.strip() for p in m.group(1).split("#")[0].split(",") if p.strip()]
            for p in names:
                if not p.isidentifier():
                    raise DSLSyntaxError(f"bad parameter name {p!r}", len(body_lines) + 1, 1)
            params = tuple(names)
            body_lines.append("")
        else:
            body_lines.append(ln)
    if params is None:
        raise DSLSyntaxError("missing 'params:' header line", 1, 1)
    try:
        tree = ast.parse("\n".join(body_lines))
    except SyntaxError as exc:
        raise DSLSyntaxError(exc.msg, exc.lineno, exc.offset) from None
    b = _Builder(params, lines)
    body = b.block(tree.body, ())
    if not b.statements:
        raise DSLSyntaxError("program has no statements", 1, 1)
    return Program(params, tuple(b.statements), body, name)


def load_program(path) -> Program:
    from pathlib import Path
    p = Path(path)
    return parse_program(p.read_text(encoding="utf-8"), name=p.stem)


def render_program(p: Program) -> str:
    out = [f"params: {', '.join(p.parameters)}"]
    stmts = {st.statement_id: st for st in p.statements}

    def emit(node, depth):
        pad = "    " * depth
        if isinstance(node, LoopNode):
            lp = node.loop
            out.append(f"{pad}for {lp.var} in range({lp.lower.render()}, {lp.upper.render()}):")
            for child in node.body:
                emit(child, depth + 1)
            return
        st = stmts[node]
        if st.accumulate:
            args = ", ".join(a.render() for a in st.inputs[1:])
            out.append(f"{pad}{st.output.render()} += f({args})")
        else:
            args = ", ".join(a.render() for a in st.inputs)
            out.append(f"{pad}{st.output.render()} = f({args})")

    for node in p.body:
        emit(node, 0)
    return "\n".join(out) + "\n"


def execution_order(p: Program, env: Mapping[str, int]) -> Iterator[tuple[Statement, dict[str, int]]]:
    """Yield (statement, iteration environment) in sequential program order."""
    stmts = {st.statement_id: st for st in p.statements}

    def run(nodes, scope):
        for node in nodes:
            if isinstance(node, LoopNode):
                lp = node.loop
                for v in range(lp.lower.evaluate(scope), lp.upper.evaluate(scope)):
                    inner = dict(scope)
                    inner[lp.var] = v
                    yield from run(node.body, inner)
            else:
                yield stmts[node], scope

    yield from run(p.body, dict(env))


# access decomposition ------------------------------------------------------

@dataclass(frozen=True)
class Extent:
    """How one array dimension projects onto the iteration variables."""
    kind: str                    # "var", "const", "sum" (non-injective), "max", "prod"
    vars: tuple[str, ...] = ()


@dataclass(frozen=True)
class AccessInfo:
    array: str
    source: str
    accesses: tuple[ArrayAccess, ...]        # inputs in source order, then the output if present
    includes_output: bool
    base: tuple[Affine, ...]
    translations: tuple[tuple[int, ...], ...]
    offset_sets: tuple[frozenset[int], ...]
    extents: tuple[Extent, ...]
    reason: str | None = None                # None when conforming

    @property
    def conforming(self) -> bool:
        return self.reason is None

    @property
    def role(self) -> str:
        n_in = len(self.accesses) - (1 if self.includes_output else 0)
        if not self.includes_output:
            return "input"
        return "inout" if n_in else "output"

    @property
    def output(self) -> ArrayAccess | None:
        return self.accesses[-1] if self.includes_output else None

    @property
    def inputs(self) -> tuple[ArrayAccess, ...]:
        return self.accesses[:-1] if self.includes_output else self.accesses


def _extents(base: tuple[Affine, ...], ivars: set[str]) -> tuple[tuple[Extent, ...], str | None]:
    ext = []
    seen: set[str] = set()
    reason = None
    for a in base:
        vs = [n for n, _ in a.terms if n in ivars]
        strided = any(isinstance(c, str) for n, c in a.terms if n in ivars)
        if not vs:
            ext.append(Extent("const"))
        elif len(vs) == 1 and not strided:
            ext.append(Extent("var", (vs[0],)))
        else:
            ext.append(Extent("sum", tuple(vs)))
            reason = reason or "NonInjective"
        for v in vs:
            if v in seen:
                reason = reason or "RepeatedVariable"
            seen.add(v)
    return tuple(ext), reason


def decompose(array: str, source: str, inputs: list[ArrayAccess], output: ArrayAccess | None,
              ivars: set[str]) -> AccessInfo:
    """Translation decomposition of one access group against its first input."""
    accesses = tuple(inputs) + ((output,) if output is not None else ())
    base_access = inputs[0] if inputs else output
    base = base_access.index
    reason = None
    linear = base_access.linear_part()
    if any(acc.linear_part() != linear for acc in accesses):
        reason = "VariableMismatch"
        translations: tuple[tuple[int, ...], ...] = ()
        offsets = tuple(frozenset() for _ in base)
    else:
        translations = tuple(tuple(x - y for x, y in zip(acc.offsets(), base_access.offsets()))
                             for acc in accesses)
        offsets = tuple(frozenset(t[i] for t in translations if t[i] != 0) for i in range(len(base)))
    extents, ext_reason = _extents(base, ivars)
    return AccessInfo(array, source, accesses, output is not None, base, translations, offsets,
                      extents, reason or ext_reason)


def extract_accesses(st: Statement) -> list[AccessInfo]:
    """One AccessInfo per array in order of first appearance."""
    order: list[str] = []
    groups: dict[str, list[ArrayAccess]] = {}
    for acc in st.inputs:
        if acc.array not in groups:
            order.append(acc.array)
            groups[acc.array] = []
        groups[acc.array].append(acc)
    if st.output.array not in groups:
        order.append(st.output.array)
        groups[st.output.array] = []
    ivars = set(st.iter_vars)
    out = []
    for name in order:
        output = st.output if name == st.output.array else None
        out.append(decompose(name, name, groups[name], output, ivars))
    return out
