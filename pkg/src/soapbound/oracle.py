"""Ground truth at desk scale: concrete CDAGs, exact red-blue pebbling, dominators.

The exact search is an A* over (red, blue) bitmask states. Discards are implicit:
a load or compute on a full red set branches over which pebble to evict, and no
state ever drops a red pebble voluntarily (holding more red pebbles is never
worse, so this loses no optimal schedule).
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .frontend import Program, execution_order

log = logging.getLogger(__name__)


class OracleError(Exception):
    pass


class TooLarge(OracleError):
    pass


class UnboundParameter(OracleError):
    pass


class InfeasibleCapacity(OracleError):
    pass


class SoundnessViolation(OracleError):
    pass


class InvalidMove(OracleError):
    pass


class SearchBudgetExceeded(OracleError):
    def __init__(self, lower: int, upper: float, expanded: int):
        super().__init__(f"search budget exhausted after {expanded} states; "
                         f"optimum lies in [{lower}, {upper}]")
        self.lower = lower
        self.upper = upper
        self.expanded = expanded


# CDAG --------------------------------------------------------------------------

@dataclass(frozen=True)
class Vertex:
    array: str
    index: tuple[int, ...]
    version: int
    statement: int | None = None           # None for input vertices
    iteration: tuple[int, ...] = ()

    @property
    def is_input(self) -> bool:
        return self.statement is None

    def label(self) -> str:
        idx = ",".join(map(str, self.index))
        return f"{self.array}[{idx}]#{self.version}"


@dataclass
class Cdag:
    vertices: list[Vertex]
    parents: list[tuple[int, ...]]
    inputs: frozenset[int]
    outputs: frozenset[int]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v, ps in enumerate(self.parents) for u in ps]

    @property
    def compute_vertices(self) -> list[int]:
        return [v for v in range(len(self.vertices)) if v not in self.inputs]

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.vertices]
        for u, v in self.edges:
            out[u].append(v)
        return out

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.vertices)))
        g.add_edges_from(self.edges)
        return g


def build_cdag(p: Program, params: Mapping[str, int], cap: int = 10_000) -> Cdag:
    """Simulate the program sequentially; every write creates a fresh vertex.

    An accumulating statement whose target element was never written reads no
    initial value, so ``C[i,j] += A[i,k]*B[k,j]`` starts its chain at the first
    product instead of at an input copy of C.
    """
    needed = set(p.size_parameters()) | _index_parameters(p)
    missing = sorted(n for n in needed if n not in params)
    if missing:
        raise UnboundParameter(f"no value for parameter(s) {', '.join(missing)}")
    vertices: list[Vertex] = []
    parents: list[tuple[int, ...]] = []
    current: dict[tuple[str, tuple[int, ...]], int] = {}
    versions: dict[tuple[str, tuple[int, ...]], int] = {}

    def add(v: Vertex, ps: tuple[int, ...]) -> int:
        if len(vertices) >= cap:
            raise TooLarge(f"CDAG exceeds {cap} vertices; use smaller parameters")
        vertices.append(v)
        parents.append(ps)
        return len(vertices) - 1

    for st, env in execution_order(p, dict(params)):
        target = (st.output.array, tuple(a.evaluate(env) for a in st.output.index))
        reads = list(st.inputs)
        if st.accumulate and target not in current:
            reads = reads[1:]
        ps: list[int] = []
        for acc in reads:
            key = (acc.array, tuple(a.evaluate(env) for a in acc.index))
            if key not in current:
                current[key] = add(Vertex(key[0], key[1], 0), ())
                versions[key] = 0
            if current[key] not in ps:
                ps.append(current[key])
        ver = versions.get(target, 0) + 1
        it = tuple(env[v] for v in st.iter_vars)
        current[target] = add(Vertex(target[0], target[1], ver, st.statement_id, it), tuple(ps))
        versions[target] = ver
    inputs = frozenset(i for i, v in enumerate(vertices) if v.is_input)
    has_child = {u for ps in parents for u in ps}
    outputs = frozenset(i for i in range(len(vertices)) if i not in has_child and i not in inputs)
    return Cdag(vertices, parents, inputs, outputs)


def _index_parameters(p: Program) -> set[str]:
    out = set()
    for st in p.statements:
        for acc in st.accesses():
            for a in acc.index:
                out |= {c for _n, c in a.terms if isinstance(c, str)}
    return out


# exact pebbling ------------------------------------------------------------------

Move = tuple[str, int]          # ("load" | "store" | "compute" | "discard", vertex)


@dataclass
class PebbleResult:
    cost: float
    exact: bool
    moves: list[Move] = field(default_factory=list)
    expanded: int = 0


def _bits(mask: int) -> Iterable[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def max_indegree(g: Cdag) -> int:
    return max((len(ps) for ps in g.parents), default=0)


def pebble_search(g: Cdag, S: int, budget: int = 10_000_000, recompute: bool = True) -> PebbleResult:
    """Minimum I/O over all pebblings with at most S red pebbles.

    Returns cost ``inf`` when some vertex needs more than S-1 red parents, since
    no legal compute move exists for it then.
    """
    n = len(g.vertices)
    if S < 1:
        raise ValueError("S must be at least 1")
    if not g.outputs:
        return PebbleResult(0, True)
    if max_indegree(g) + 1 > S:
        return PebbleResult(math.inf, True)
    pmask = [sum(1 << u for u in ps) for ps in g.parents]
    in_mask = sum(1 << v for v in g.inputs)
    out_mask = sum(1 << v for v in g.outputs)

    anc = [0] * n
    for v in range(n):                     # vertex ids are a topological order
        a = 1 << v
        for u in g.parents[v]:
            a |= anc[u]
        anc[v] = a

    def useful(blue: int) -> int:
        m = 0
        for o in _bits(out_mask & ~blue):
            m |= anc[o]
        return m

    def h(red: int, blue: int) -> int:
        """Pending stores plus inputs that must be loaded again: those reaching a pending
        output through values that are neither red nor stored."""
        pending = out_mask & ~blue
        live = pending & ~red
        reach = live
        stack = list(_bits(live))
        while stack:
            v = stack.pop()
            for u in g.parents[v]:
                bit = 1 << u
                if reach & bit or red & bit:
                    continue
                if in_mask & bit or not blue & bit:
                    reach |= bit
                    if not in_mask & bit:
                        stack.append(u)
        return pending.bit_count() + (reach & in_mask).bit_count()

    def canon(red: int, blue: int, done: int) -> tuple[int, int, int]:
        u = useful(blue)
        return red & u, (blue & u) | in_mask | (blue & out_mask), done

    # state: (red, blue, done); done tracks computed vertices only without recomputation
    start = (0, in_mask, 0)
    best = {start: 0}
    prev: dict[tuple, tuple[tuple, list[Move]]] = {}
    frontier = [(h(0, in_mask), 0, 0, start)]     # (f, -cost, tie, state): deeper first on ties
    tie = itertools.count(1)
    expanded = 0

    def macro(red: int, blue: int, v: int):
        """Ways to load the missing parents of v, make room, and compute v.

        Loads are delayed until just before their first use and stores until the
        value is evicted; every schedule can be rearranged into this form without
        extra cost, so only these combined moves are searched.
        """
        miss = pmask[v] & ~red
        loads = list(_bits(miss))
        evict = len(loads) + 1 - (S - red.bit_count())
        base = [("load", u) for u in loads] + [("compute", v)]
        bit = 1 << v
        if out_mask & bit:
            base.append(("store", v))
        extra = 1 if out_mask & bit else 0
        if evict <= 0:
            yield red | miss | bit, blue | (bit if extra else 0), len(loads) + extra, base
            return
        for victims in itertools.combinations(list(_bits(red & ~pmask[v])), evict):
            unstored = [w for w in victims if not blue >> w & 1]
            for keep in itertools.product((False, True), repeat=len(unstored)):
                nb = blue | (bit if extra else 0)
                moves: list[Move] = []
                for w, k in zip(unstored, keep):
                    if k:
                        nb |= 1 << w
                        moves.append(("store", w))
                nr = red | miss | bit
                for w in victims:
                    nr &= ~(1 << w)
                    moves.append(("discard", w))
                yield nr, nb, len(loads) + extra + sum(keep), moves + base

    while frontier:
        f, neg, _t, state = heapq.heappop(frontier)
        cost = -neg
        if cost > best.get(state, math.inf):
            continue
        red, blue, done = state
        if blue & out_mask == out_mask:
            return PebbleResult(cost, True, _replay_path(prev, state), expanded)
        expanded += 1
        if expanded > budget:
            raise SearchBudgetExceeded(f, _greedy_or_inf(g, S), expanded)
        need = useful(blue) & ~red & ~in_mask
        cands = [v for v in _bits(need) if pmask[v] & ~red & ~blue == 0
                 and (recompute or not done >> v & 1)]
        if recompute and red.bit_count() < S:
            # computing into a free slot with every parent red dominates all alternatives
            ready = [v for v in cands if pmask[v] & ~red == 0]
            ready.sort(key=lambda v: (blue >> v & 1, out_mask >> v & 1))
            if ready:
                cands = ready[:1]
        succ: list[tuple[tuple, int, list[Move]]] = []
        for v in cands:
            nd = done | (1 << v) if not recompute else 0
            for nr, nb, c, moves in macro(red, blue, v):
                succ.append(((nr, nb, nd), c, moves))
        for raw, c, moves in succ:
            ns = canon(*raw)
            if raw[0] != ns[0]:
                moves = moves + [("discard", w) for w in _bits(raw[0] & ~ns[0])]
            nc = cost + c
            if nc < best.get(ns, math.inf):
                best[ns] = nc
                prev[ns] = (state, moves)
                heapq.heappush(frontier, (nc + h(ns[0], ns[1]), -nc, next(tie), ns))
    return PebbleResult(math.inf, True, [], expanded)


def _replay_path(prev, state) -> list[Move]:
    out: list[list[Move]] = []
    while state in prev:
        state, moves = prev[state]
        out.append(moves)
    return [m for moves in reversed(out) for m in moves]


def _greedy_or_inf(g: Cdag, S: int) -> float:
    try:
        return pebble_greedy(g, S)
    except InfeasibleCapacity:
        return math.inf


def pebble_exact(g: Cdag, S: int, budget: int = 10_000_000, recompute: bool = True) -> float:
    return pebble_search(g, S, budget, recompute).cost


def replay(g: Cdag, S: int, moves: Sequence[Move]) -> int:
    """Check a move sequence against the game rules and return its I/O count."""
    red: set[int] = set()
    blue: set[int] = set(g.inputs)
    io = 0
    for step, (kind, v) in enumerate(moves):
        if kind == "load":
            if v not in blue:
                raise InvalidMove(f"step {step}: load of {v} without a blue pebble")
            red.add(v)
            io += 1
        elif kind == "store":
            if v not in red:
                raise InvalidMove(f"step {step}: store of {v} without a red pebble")
            blue.add(v)
            io += 1
        elif kind == "compute":
            if v in g.inputs:
                raise InvalidMove(f"step {step}: input {v} cannot be computed")
            if not set(g.parents[v]) <= red:
                raise InvalidMove(f"step {step}: compute of {v} with a parent not red")
            red.add(v)
        elif kind == "discard":
            if v not in red:
                raise InvalidMove(f"step {step}: discard of {v} without a red pebble")
            red.discard(v)
        else:
            raise InvalidMove(f"step {step}: unknown move {kind!r}")
        if len(red) > S:
            raise InvalidMove(f"step {step}: {len(red)} red pebbles exceed S={S}")
    if not g.outputs <= blue:
        raise InvalidMove("sequence ends with an output lacking a blue pebble")
    return io


# greedy upper bound ------------------------------------------------------------

def pebble_greedy(g: Cdag, S: int) -> int:
    """A valid schedule: repeatedly compute the ready vertex with the most red parents,
    evicting least recently used values and storing those still needed."""
    for v, ps in enumerate(g.parents):
        if v not in g.inputs and len(ps) + 1 > S:
            raise InfeasibleCapacity(f"vertex {g.vertices[v].label()} has {len(ps)} parents; "
                                     f"needs S >= {len(ps) + 1}")
    kids = g.children()
    remaining = [len(k) for k in kids]
    red: OrderedDict[int, None] = OrderedDict()
    blue = set(g.inputs)
    io = 0

    def make_room(protect: set[int]):
        nonlocal io
        while len(red) >= S:
            victim = next(w for w in red if w not in protect)
            if victim not in blue and (remaining[victim] > 0 or victim in g.outputs):
                blue.add(victim)
                io += 1
            del red[victim]

    missing = [sum(1 for u in ps if u not in g.inputs) for ps in g.parents]
    ready = {v for v in g.compute_vertices if missing[v] == 0}
    while ready:
        v = max(ready, key=lambda x: (sum(1 for u in g.parents[x] if u in red), -x))
        ready.discard(v)
        ps = set(g.parents[v])
        for u in g.parents[v]:
            if u in red:
                red.move_to_end(u)
                continue
            make_room(ps)
            red[u] = None
            io += 1
        make_room(ps)
        red[v] = None
        for u in g.parents[v]:
            remaining[u] -= 1
            if remaining[u] == 0 and u not in g.outputs:
                red.pop(u, None)
        for c in kids[v]:
            missing[c] -= 1
            if missing[c] == 0:
                ready.add(c)
    for v in g.outputs:
        if v not in blue:
            io += 1
    return io


# dominators ----------------------------------------------------------------------

def min_dominator(g: Cdag, H: Iterable[int]) -> int:
    """Fewest vertices meeting every path from an input into H (H itself may be used)."""
    H = set(H)
    if not H:
        return 0
    net = nx.DiGraph()
    for v in range(len(g.vertices)):
        net.add_edge(("in", v), ("out", v), capacity=1)
    for u, v in g.edges:
        net.add_edge(("out", u), ("in", v))
    for v in g.inputs:
        net.add_edge("src", ("in", v))
    for v in H:
        net.add_edge(("out", v), "sink")
    return int(nx.maximum_flow_value(net, "src", "sink"))


# soundness -----------------------------------------------------------------------

@dataclass
class VerifyReport:
    bound: float
    exact: float
    greedy: float | None
    exact_is_exact: bool
    vertices: int
    notes: list[str] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.exact - self.bound

    def as_dict(self) -> dict:
        return {"bound": self.bound, "exact": self.exact, "greedy": self.greedy,
                "exact_is_exact": self.exact_is_exact, "gap": self.gap, "vertices": self.vertices,
                "notes": list(self.notes)}


def verify_bound(p: Program, params: Mapping[str, int], S: int, budget: int = 10_000_000,
                 bound=None, recompute: bool = True) -> VerifyReport:
    """Check bound <= exact optimum <= greedy schedule on a concrete instance."""
    from .sdg import build_sdg, sdg_bound
    g = build_cdag(p, params)
    if bound is None:
        bound = sdg_bound(build_sdg(p)).Q_bound
    env = {k: float(v) for k, v in params.items()}
    env["S"] = float(S)
    value = bound.evaluate(env)
    notes = []
    try:
        exact = pebble_search(g, S, budget, recompute).cost
        is_exact = True
    except SearchBudgetExceeded as exc:
        exact, is_exact = exc.lower, False
        notes.append(str(exc))
    try:
        greedy: float | None = pebble_greedy(g, S)
    except InfeasibleCapacity as exc:
        greedy = None
        notes.append(f"{exc}; the bound holds vacuously")
    if value > exact + 1e-9:
        raise SoundnessViolation(f"bound {value:g} exceeds the optimum {exact:g} at "
                                 f"{dict(params)}, S={S}")
    if greedy is not None and is_exact and exact > greedy:
        raise SoundnessViolation(f"exact search {exact} exceeds the greedy schedule {greedy}")
    return VerifyReport(value, exact, greedy, is_exact, len(g.vertices), notes)
