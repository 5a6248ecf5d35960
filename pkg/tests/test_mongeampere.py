from __future__ import annotations

import pytest
import sympy

from edskit import catalog
from edskit.exterior import ext_d, in_ideal, pullback, rank_of, wedge
from edskit.mongeampere import (
    DARBOUX_ORDER_2,
    MONGE_INTEGRABLE,
    SEMI_ORDER_2,
    UNDETERMINED,
    WAVE_EQUIVALENT,
    characteristic_systems,
    classify,
    from_pde,
    prolong,
    total_derivatives,
    verdict_from_ranks,
    verify_invariant,
)
from edskit.exterior import ChartMismatchError
from edskit.symcore import UnknownIdentifierError

x, y, u, p, q, r, t = sympy.symbols("x y u p q r t")


def spans_equal(A, forms):
    forms = list(forms)
    return A.rank == rank_of(forms) == rank_of(list(A.forms) + forms)


def test_wave_system():
    M = from_pde("0")
    c = M.chart
    assert (ext_d(M.theta) - (wedge(c.d("x"), c.d("p")) + wedge(c.d("y"), c.d("q")))).is_zero()
    C1, C2 = characteristic_systems(M)
    assert spans_equal(C1, [M.theta, c.d("x"), c.d("p")])
    assert spans_equal(C2, [M.theta, c.d("y"), c.d("q")])


def test_liouville_system():
    M = from_pde("exp(u)")
    c = M.chart
    assert (M.omega1 - wedge(c.d("p") - c.d("y") * sympy.exp(u), c.d("x"))).is_zero()
    C1, C2 = characteristic_systems(M)
    assert spans_equal(C1, [M.theta, c.d("x"), c.d("p") - c.d("y") * sympy.exp(u)])
    assert spans_equal(C2, [M.theta, c.d("y"), c.d("q") - c.d("x") * sympy.exp(u)])


def test_xiii_system():
    M = from_pde("2*u/(x + y)^2")
    c = M.chart
    F = 2 * u / (x + y) ** 2
    assert sympy.simplify(M.F - F) == 0
    assert spans_equal(M.C1, [M.theta, c.d("x"), c.d("p") - c.d("y") * F])


def test_disallowed_variable():
    with pytest.raises(UnknownIdentifierError):
        from_pde("r*u")
    with pytest.raises(ChartMismatchError):
        from_pde(sympy.Symbol("r") * u)


def test_prolong_liouville_and_wave():
    P = prolong(from_pde("exp(u)"))
    c = P.chart
    assert (P.omega1 - wedge(c.d("r") - c.d("y") * p * sympy.exp(u), c.d("x"))).is_zero()
    assert (P.omega2 - wedge(c.d("t") - c.d("x") * q * sympy.exp(u), c.d("y"))).is_zero()
    W = prolong(from_pde("0"))
    assert (W.omega1 - wedge(W.chart.d("r"), W.chart.d("x"))).is_zero()
    assert (W.omega2 - wedge(W.chart.d("t"), W.chart.d("y"))).is_zero()


def test_total_derivative_formula():
    F = sympy.exp(u) * sympy.sqrt(1 + p**2) + x * q
    DxF, _ = total_derivatives(F)
    expected = sympy.diff(F, x) + sympy.diff(F, u) * p + sympy.diff(F, p) * r + sympy.diff(F, q) * F
    assert sympy.simplify(DxF - expected) == 0


@pytest.mark.parametrize("F, verdict", [
    ("0", WAVE_EQUIVALENT),
    ("exp(u)", DARBOUX_ORDER_2),
    ("sin(u)", UNDETERMINED),
])
def test_classify_examples(F, verdict):
    report = classify(from_pde(F))
    assert report.verdict == verdict


def test_liouville_terminal_ranks():
    report = classify(from_pde("exp(u)"))
    assert report.terminal_ranks == {1: (1, 1), 2: (2, 2)}


def test_verdict_is_function_of_ranks():
    assert verdict_from_ranks((2, 2), None) == (WAVE_EQUIVALENT, None)
    assert verdict_from_ranks((1, 2), (2, 3)) == (MONGE_INTEGRABLE, 2)
    assert verdict_from_ranks((1, 1), (2, 2)) == (DARBOUX_ORDER_2, None)
    assert verdict_from_ranks((1, 1), (1, 2)) == (SEMI_ORDER_2, 2)
    assert verdict_from_ranks((0, 1), (1, 1)) == (UNDETERMINED, None)


@pytest.mark.parametrize("F, side, h", [
    ("exp(u)", 1, "r - p^2/2"),
    ("2*u/(x + y)^2", 1, "r + 2*p/(x + y)"),
])
def test_verify_invariant_examples(F, side, h):
    assert verify_invariant(prolong(from_pde(F)), side, h)


def test_verify_invariant_iv():
    entry = catalog.get("IV")
    P = prolong(entry.system())
    assert verify_invariant(P, 1, "r/alpha(p) - alpha(p)/u")
    assert not verify_invariant(P, 1, "r/alpha(p)")


def test_non_invariants_rejected():
    P = prolong(from_pde("exp(u)"))
    assert not verify_invariant(P, 1, "y")
    assert not verify_invariant(P, 2, "r - p^2/2")
    # u - u is constant: a first integral trivially, but not independent of the ideal
    assert not verify_invariant(P, 1, "0")


# -- properties over the catalog -------------------------------------------

RUNNABLE = [e.id for e in catalog.entries() if e.runnable]


@pytest.mark.parametrize("entry_id", RUNNABLE)
def test_structure(entry_id):
    M = catalog.get(entry_id).system()
    assert all(M.check_structure().values())
    C1, C2 = M.C1, M.C2
    assert C1.rank == C2.rank == 3
    # the two characteristic systems meet in the span of theta
    assert C1.rank + C2.rank - rank_of(list(C1.forms) + list(C2.forms)) == 1


@pytest.mark.parametrize("entry_id", RUNNABLE)
def test_prolongation_consistency(entry_id):
    M = catalog.get(entry_id).system()
    P = prolong(M)
    for omega in (M.omega1, M.omega2):
        assert in_ideal(pullback(omega, P.chart, {}), P.ideal_one_forms)


SWAP = {x: y, y: x, p: q, q: p}


@pytest.mark.parametrize("entry_id", ["X", "VIII*", "IX", "XIII", "wave"])
def test_classify_relabel_invariance(entry_id):
    M = catalog.get(entry_id).system()
    a = classify(M)
    b = classify(from_pde(M.F.xreplace(SWAP)))
    assert a.verdict == b.verdict
    assert a.side == ({1: 2, 2: 1}[b.side] if b.side else None)
    for order in (1, 2):
        assert a.terminal_ranks[order] == b.terminal_ranks[order][::-1]
