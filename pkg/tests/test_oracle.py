import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from soapbound.bounds import access_set_bound
from soapbound.oracle import (Cdag, InfeasibleCapacity, InvalidMove, SearchBudgetExceeded, TooLarge,
                              UnboundParameter, Vertex, build_cdag, min_dominator, pebble_exact,
                              pebble_greedy, pebble_search, replay, verify_bound)
from soapbound.soap import normalize

from conftest import kernel
from oracles import brute_min_dominator, naive_pebbling, random_dag


def chain(n: int) -> Cdag:
    verts = [Vertex("x", (0,), 0)] + [Vertex("x", (i,), i, 0) for i in range(1, n + 1)]
    parents = [()] + [(i - 1,) for i in range(1, n + 1)]
    return Cdag(verts, parents, frozenset({0}), frozenset({n}))


def fan_in(k: int) -> Cdag:
    verts = [Vertex("a", (i,), 0) for i in range(k)] + [Vertex("z", (0,), 1, 0)]
    return Cdag(verts, [()] * k + [tuple(range(k))], frozenset(range(k)), frozenset({k}))


# CDAG construction --------------------------------------------------------------

def test_stencil_cdag():
    g = build_cdag(kernel("stencil_example"), {"N": 6, "T": 2})
    assert len(g.compute_vertices) == 4
    assert sorted(g.vertices[v].iteration for v in g.compute_vertices) == [(1, i) for i in range(1, 5)]
    arrays = sorted({g.vertices[v].array for v in g.inputs})
    assert arrays == ["A", "B"]
    assert all(g.vertices[v].index[1] == 1 for v in g.inputs if g.vertices[v].array == "A")


def test_mmm_cdag():
    g = build_cdag(kernel("gemm"), {"N": 2})
    assert len(g.compute_vertices) == 8
    assert len(g.inputs) == 8
    assert len(g.outputs) == 4
    for v in g.outputs:
        # each output closes a chain of two accumulations
        prev = [u for u in g.parents[v] if g.vertices[u].array == "C"]
        assert len(prev) == 1 and not g.vertices[prev[0]].is_input


def test_empty_domain():
    g = build_cdag(kernel("stencil_example"), {"N": 6, "T": 1})
    assert g.compute_vertices == []


def test_cdag_acyclic_and_parents_are_accesses():
    p = kernel("jacobi2d")
    g = build_cdag(p, {"N": 5, "T": 2})
    import networkx as nx
    assert nx.is_directed_acyclic_graph(g.to_networkx())
    st_ = p.statements[0]
    for v in g.compute_vertices:
        env = dict(zip(st_.iter_vars, g.vertices[v].iteration))
        want = {(a.array, tuple(x.evaluate(env) for x in a.index)) for a in st_.inputs}
        got = {(g.vertices[u].array, g.vertices[u].index) for u in g.parents[v]}
        assert got == want


def test_too_large():
    with pytest.raises(TooLarge):
        build_cdag(kernel("gemm"), {"N": 50})


def test_unbound_parameter():
    with pytest.raises(UnboundParameter):
        build_cdag(kernel("stencil_example"), {"N": 6})
    with pytest.raises(UnboundParameter):
        build_cdag(kernel("conv"), {"Nb": 1, "Cin": 1, "Cout": 1, "Wout": 2, "Hout": 2, "Wker": 2, "Hker": 2})


# exact pebbling -----------------------------------------------------------------

def test_chain_cost():
    assert pebble_exact(chain(2), 2) == 2


def test_fan_in_cost():
    assert pebble_exact(fan_in(2), 3) == 3


@pytest.mark.parametrize("name,params", [("chain2", {"N": 3}), ("stencil_example", {"N": 6, "T": 2}),
                                         ("gemm", {"N": 2})])
def test_unconstrained_capacity(name, params):
    g = build_cdag(kernel(name), params)
    assert pebble_exact(g, len(g.vertices)) == len(g.inputs) + len(g.outputs)


def test_infeasible_capacity_is_infinite():
    assert pebble_exact(fan_in(3), 3) == math.inf


def test_replay_of_optimal_moves():
    for name, params, S in [("gemm", {"N": 2}, 4), ("stencil_example", {"N": 6, "T": 3}, 5),
                            ("chain2", {"N": 4}, 3)]:
        g = build_cdag(kernel(name), params)
        r = pebble_search(g, S)
        assert r.exact
        assert replay(g, S, r.moves) == r.cost


def test_replay_rejects_illegal_moves():
    g = chain(2)
    with pytest.raises(InvalidMove):
        replay(g, 2, [("compute", 2)])
    with pytest.raises(InvalidMove):
        replay(g, 1, [("load", 0), ("compute", 1)])
    with pytest.raises(InvalidMove):
        replay(g, 2, [("load", 0), ("compute", 1), ("compute", 2)])


def test_budget_exhaustion():
    g = build_cdag(kernel("stencil_example"), {"N": 8, "T": 3})
    with pytest.raises(SearchBudgetExceeded) as exc:
        pebble_search(g, 5, budget=5)
    assert exc.value.lower <= exc.value.upper


def _dags(seed, count, max_compute):
    rng = random.Random(seed)
    for _ in range(count):
        yield random_dag(rng, rng.randint(1, 4), rng.randint(1, max_compute), 3), rng.randint(2, 4)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_search_matches_plain_dijkstra(seed):
    for g, S in _dags(seed, 60, 6):
        r = pebble_search(g, S)
        assert r.cost == naive_pebbling(g, S)
        if r.moves:
            assert replay(g, S, r.moves) == r.cost


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_in_capacity(seed):
    rng = random.Random(seed)
    g = random_dag(rng, rng.randint(1, 4), rng.randint(1, 7), 3)
    costs = [pebble_exact(g, S) for S in range(2, 7)]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_recomputation_never_hurts(seed):
    rng = random.Random(seed)
    g = random_dag(rng, rng.randint(1, 4), rng.randint(1, 7), 3)
    S = rng.randint(3, 5)
    assert pebble_exact(g, S) <= pebble_exact(g, S, recompute=False)


# greedy ------------------------------------------------------------------------

def test_greedy_chain():
    assert pebble_greedy(chain(2), 2) == 2


def test_greedy_above_exact_mmm():
    g = build_cdag(kernel("gemm"), {"N": 2})
    assert pebble_greedy(g, 4) >= pebble_exact(g, 4)


def test_greedy_infeasible():
    with pytest.raises(InfeasibleCapacity):
        pebble_greedy(fan_in(4), 4)


@pytest.mark.parametrize("seed", [4, 5])
def test_greedy_is_upper_bound(seed):
    for g, S in _dags(seed, 60, 7):
        try:
            up = pebble_greedy(g, S)
        except InfeasibleCapacity:
            assert pebble_exact(g, S) == math.inf
            continue
        assert pebble_exact(g, S) <= up


# dominators ----------------------------------------------------------------------

def test_dominator_single_vertex():
    g = build_cdag(kernel("gemm"), {"N": 2})
    for v in g.compute_vertices:
        assert min_dominator(g, [v]) == 1


def test_dominator_empty():
    assert min_dominator(chain(3), []) == 0


def test_dominator_stencil_row():
    g = build_cdag(kernel("stencil_example"), {"N": 6, "T": 2})
    row = g.compute_vertices
    assert len(row) == 4
    assert min_dominator(g, row) == 4 == brute_min_dominator(g, row)


@pytest.mark.parametrize("seed", [7, 8])
def test_dominator_matches_brute_force(seed):
    rng = random.Random(seed)
    for _ in range(40):
        g = random_dag(rng, rng.randint(1, 4), rng.randint(2, 8), 3)
        H = rng.sample(g.compute_vertices, rng.randint(1, min(4, len(g.compute_vertices))))
        d = min_dominator(g, H)
        assert d == brute_min_dominator(g, H)
        reach = {v for v in g.inputs if any(v in _ancestors(g, h) for h in H)}
        assert d <= len(H) and d <= len(reach)


def _ancestors(g, v):
    out, stack = set(), [v]
    while stack:
        u = stack.pop()
        for p in g.parents[u]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


# rectangular subcomputations ---------------------------------------------------

def _rect_tiles(name, params, trials, seed, skip_chain_start=False):
    """Sample rectangular tiles with every extent above its offset count."""
    p = kernel(name)
    g = build_cdag(p, params)
    st_ = p.statements[0]
    sst = normalize(st_)[0]
    need = {}
    for info in sst.infos:
        for e, o in zip(info.extents, info.offset_sets):
            if e.kind == "var":
                need[e.vars[0]] = max(need.get(e.vars[0], 0), len(o))
    its = {v: g.vertices[v].iteration for v in g.compute_vertices}
    values = [sorted({it[d] for it in its.values()}) for d in range(st_.depth)]
    rng = random.Random(seed)
    for _ in range(trials):
        sets = []
        for d, var in enumerate(st_.iter_vars):
            lo = need.get(var, 0) + 1
            if lo > len(values[d]):
                break
            k = rng.randint(lo, min(5, len(values[d])))
            start = rng.randint(0, len(values[d]) - k)
            sets.append(set(values[d][start:start + k]))
        if len(sets) < st_.depth:
            continue
        H = [v for v, it in its.items() if all(it[d] in sets[d] for d in range(st_.depth))]
        if len(H) != math.prod(len(s) for s in sets):
            continue
        # the first write of an accumulated element has no initial value to read
        if skip_chain_start and st_.accumulate and any(g.vertices[v].version == 1 for v in H):
            continue
        tiles = {var: len(s) for var, s in zip(st_.iter_vars, sets)}
        formula = sum(access_set_bound(i, tiles).evaluate({}) for i in sst.infos)
        yield g, H, formula


RECT = [("stencil_example", {"N": 14, "T": 6}), ("jacobi1d", {"N": 10, "T": 5}),
        ("jacobi2d", {"N": 7, "T": 3}), ("heat3d", {"N": 5, "T": 2}), ("lu", {"N": 7}),
        ("gemm", {"N": 4}), ("syrk", {"N": 4, "M": 4})]


@pytest.mark.parametrize("name,params", RECT, ids=[r[0] for r in RECT])
def test_access_set_lower_bound_on_cdag(name, params):
    """Distinct outside parents of a rectangular tile are at least the access-set formula.

    Accumulation chains that begin inside the tile read no initial value, so
    those tiles are excluded."""
    checked = 0
    for g, H, formula in _rect_tiles(name, params, 200, 11, skip_chain_start=True):
        Hs = set(H)
        touched = {u for v in H for u in g.parents[v] if u not in Hs}
        assert len(touched) >= formula
        checked += 1
    assert checked > 0


@pytest.mark.parametrize("name,params", RECT, ids=[r[0] for r in RECT])
def test_dominator_lower_bound_on_cdag(name, params):
    """Minimum dominator of a rectangular tile is at least the access-set formula."""
    for g, H, formula in _rect_tiles(name, params, 200, 11):
        assert min_dominator(g, H) >= formula


# end-to-end --------------------------------------------------------------------

def test_verify_mmm():
    r = verify_bound(kernel("gemm"), {"N": 2}, 4)
    assert r.exact_is_exact and r.bound <= r.exact <= r.greedy


def test_verify_stencil_small_memory():
    r = verify_bound(kernel("stencil_example"), {"N": 6, "T": 2}, 3)
    assert r.bound <= r.exact


def test_verify_capacity_free():
    p = kernel("chain2")
    g = build_cdag(p, {"N": 3})
    S = len(g.vertices)
    r = verify_bound(p, {"N": 3}, S)
    assert r.bound <= len(g.inputs) + len(g.outputs) == r.exact
