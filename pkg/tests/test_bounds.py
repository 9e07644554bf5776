from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from soapbound.bounds import (DegenerateProgram, TilingProblem, UnboundedTile, _power_sum, access_set_bound,
                              domain_size, intensity_and_X0, problem_from_soap, solve_problem,
                              solve_tiling, statement_bound)
from soapbound.frontend import ArrayAccess, decompose, extract_accesses, parse_program
from soapbound.soap import normalize
from soapbound.symbolic import SymExpr, const, parse_expr, render, sym

from conftest import KERNELS, kernel
from oracles import antipodal_volume, argmin_ratio, numeric_chi

F = Fraction
X, S = sym("X"), sym("S")


def _two_dim_info(shifts, with_output=False):
    p = parse_program("params: N\nfor i in range(N):\n    for j in range(N):\n        Z[i, j] = f(A[i, j])\n")
    i_, j_ = p.statements[0].output.index
    accs = [ArrayAccess("A", (i_.shifted(a), j_.shifted(b))) for a, b in shifts]
    if with_output:
        return decompose("A", "A", accs[:-1], accs[-1], {"i", "j"})
    return decompose("A", "A", accs, None, {"i", "j"})


# domain sizes -----------------------------------------------------------------

def test_box_volume():
    assert domain_size(kernel("gemm").statements[0]) == sym("N") ** 3


def test_lu_domain_leading():
    d = domain_size(kernel("lu").statements[0])
    assert d.terms[((("N", F(3)),), ())] == F(1, 3)
    count = lambda n: sum((n - k - 1) ** 2 for k in range(n))
    for n in (10, 20):
        assert d.evaluate({"N": n}) == count(n)


def test_stencil_domain():
    d = domain_size(kernel("stencil_example").statements[0])
    assert d == parse_expr("N*T - T^2 - N + T")
    assert d.evaluate({"N": 40, "T": 10}) == sum(40 - 2 * t for t in range(1, 10))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 7), st.integers(0, 40))
def test_power_sums_match_direct(k, n):
    coeffs = _power_sum(k)
    value = sum(c * n ** i for i, c in enumerate(coeffs))
    assert value == sum(x ** k for x in range(n))


# access-set bound ------------------------------------------------------------

def test_access_set_two_rectangles():
    info = _two_dim_info([(0, 0), (1, 0), (2, 1)])
    assert [len(s) for s in info.offset_sets] == [2, 1]
    val = access_set_bound(info, {"i": 4, "j": 4})
    assert val == const(26)
    assert antipodal_volume((4, 4), (2, 1)) == 26


def test_access_set_without_offsets_is_volume():
    info = _two_dim_info([(0, 0)])
    bi, bj = sym("b_i"), sym("b_j")
    assert access_set_bound(info, {"i": bi, "j": bj}) == bi * bj


def test_access_set_with_output():
    info = next(i for i in extract_accesses(kernel("stencil_example").statements[0]) if i.array == "A")
    bi, bt = sym("b_i"), sym("b_t")
    e = access_set_bound(info, {"i": bi, "t": bt})
    assert e == bi + 2 * bt - 2
    assert e.evaluate({"b_i": 5, "b_t": 3}) == 9


# tiling solver ---------------------------------------------------------------

def _problem(vars_, terms):
    return TilingProblem(tuple(vars_), F(1), [(F(c), {k: F(v) for k, v in e.items()}) for c, e in terms])


def test_mmm_like_tiling():
    ts = solve_problem(_problem("abc", [(1, {"a": 1, "b": 1}), (1, {"b": 1, "c": 1}), (1, {"a": 1, "c": 1})]))
    assert ts.alpha == F(3, 2)
    assert ts.chi == (X / 3) ** F(3, 2)
    for t in ts.tile_sizes.values():
        assert t == (X / 3) ** F(1, 2)
    for x in (30, 300, 3000):
        num = numeric_chi("abc", 1, ts.constraint, x)
        assert num == pytest.approx(ts.chi.evaluate({"X": x}), rel=0.01)


def test_stencil_tiling():
    (sst,) = normalize(kernel("stencil_example").statements[0])
    ts = solve_tiling(sst)
    assert ts.chi == X ** 2 / 16
    assert ts.tile_sizes == {"t": X / 4, "i": X / 4}
    pr = problem_from_soap(sst)
    assert numeric_chi(pr.variables, 1, pr.combined(), 100) == pytest.approx(100 ** 2 / 16, rel=0.01)


def test_single_variable_tiling():
    ts = solve_problem(_problem("a", [(1, {"a": 1})]))
    assert ts.chi == X and ts.tile_sizes["a"] == X


def test_unbounded_tile():
    with pytest.raises(UnboundedTile):
        solve_problem(_problem("ab", [(1, {"a": 1})]))


def test_degenerate_program():
    with pytest.raises(DegenerateProgram):
        solve_problem(_problem("a", []))


def test_chi_is_tile_product():
    for path in sorted(KERNELS.glob("*.soap")):
        for s in kernel(path.stem).statements:
            for c in normalize(s):
                ts = solve_tiling(c)
                prod = const(1)
                for t in ts.tile_sizes.values():
                    prod = prod * t
                assert prod == ts.chi, path.stem


# intensity and X0 ------------------------------------------------------------

def test_mmm_intensity():
    ts = solve_problem(_problem("abc", [(1, {"a": 1, "b": 1}), (1, {"b": 1, "c": 1}), (1, {"a": 1, "c": 1})]))
    rho, X0 = intensity_and_X0(ts)
    assert X0 == 3 * S
    assert rho == S ** F(1, 2) / 2
    chi = lambda x: (x / 3) ** 1.5
    assert argmin_ratio(chi, 50.0) == pytest.approx(150.0, rel=1e-6)


def test_square_chi_intensity():
    (sst,) = normalize(kernel("stencil_example").statements[0])
    rho, X0 = intensity_and_X0(solve_tiling(sst))
    assert X0 == 2 * S and rho == S / 4


def test_copy_regime():
    ts = solve_problem(_problem("a", [(1, {"a": 1})]))
    rho, X0 = intensity_and_X0(ts)
    assert X0 is None and rho == const(1)


# statement bounds -----------------------------------------------------------

@pytest.mark.parametrize("name,expected", [
    ("cholesky", "N^3/(3*sqrt(S))"), ("jacobi1d", "2*N*T/S"), ("trisolv", "N^2/2"),
])
def test_statement_leading(name, expected):
    (sst,) = normalize(kernel(name).statements[0])
    assert render(statement_bound(sst).leading) == expected


def test_bound_matches_formula():
    (sst,) = normalize(kernel("gemm").statements[0])
    b = statement_bound(sst)
    at = b.tiles_at_X0
    total = sum((access_set_bound(i, at) for i in sst.infos), SymExpr())
    chi0 = b.tiles.chi
    from soapbound.symbolic import substitute
    assert b.Q_bound == domain_size(sst.statement) * (total - S) / substitute(chi0, {"X": b.X0})


# solver invariants over the whole corpus -----------------------------------

CASES = [(path.stem, s.statement_id, k) for path in sorted(KERNELS.glob("*.soap"))
         for s in kernel(path.stem).statements for k in range(len(normalize(s)))]


def _case(name, sid, k):
    s = next(x for x in kernel(name).statements if x.statement_id == sid)
    return normalize(s)[k]


@pytest.mark.parametrize("name,sid,k", CASES)
def test_numeric_cross_check(name, sid, k):
    sst = _case(name, sid, k)
    pr = problem_from_soap(sst)
    ts = solve_tiling(sst)
    for x in (1e6, 3e6, 1e7, 3e7, 1e8):
        num = numeric_chi(pr.variables, pr.objective_coef, pr.combined(), x)
        assert num == pytest.approx(ts.chi.evaluate({"X": x}), rel=0.01)


@pytest.mark.parametrize("name,sid,k", CASES)
def test_kkt_and_argmin(name, sid, k):
    ts = solve_tiling(_case(name, sid, k))
    chk = ts.kkt_residual_check
    assert abs(chk["relative_residual"]) <= 1e-9
    assert chk["min_tile"] >= 1
    grid = [10 * 1.6 ** n for n in range(20)]
    chis = [ts.chi.evaluate({"X": x}) for x in grid]
    assert all(b >= a for a, b in zip(chis, chis[1:]))
    rho, X0 = intensity_and_X0(ts)
    if X0 is None:
        return
    s = 64.0
    x0 = X0.evaluate({"S": s})
    r0 = ts.chi.evaluate({"X": x0}) / (x0 - s)
    assert r0 == pytest.approx(rho.evaluate({"S": s}), rel=1e-9)
    for n in range(1, 21):
        x = s * (1 + 0.25 * n)
        assert r0 <= ts.chi.evaluate({"X": x}) / (x - s) * (1 + 1e-12)
    sc = ts.kkt_check(x0 * 1e4)
    assert abs(sc["relative_residual"]) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([F(3, 2), F(2), F(3), F(4, 3), F(5, 2)]),
       st.fractions(min_value=F(1, 10), max_value=10, max_denominator=10),
       st.integers(4, 10_000))
def test_closed_form_X0(alpha, c, s):
    chi = lambda x: float(c) * x ** float(alpha)
    expect = float(alpha) * s / (float(alpha) - 1)
    assert argmin_ratio(chi, float(s)) == pytest.approx(expect, rel=1e-6)
