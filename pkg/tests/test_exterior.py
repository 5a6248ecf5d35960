from __future__ import annotations

import random

import pytest
import sympy
from hypothesis import given, settings

from edskit.exterior import (
    Chart,
    ChartMismatchError,
    DependentGeneratorsError,
    DifferentialForm,
    ext_d,
    in_ideal,
    is_decomposable,
    parse_form,
    pullback,
    rank_of,
    reduce_mod,
    wedge,
)
from strategies import CHART_COORDS, forms, random_form, seeds

M5 = Chart(("x", "y", "u", "p", "q"))
x, y, u, p, q = M5.symbols
dx, dy, du, dp, dq = (M5.d(c) for c in ("x", "y", "u", "p", "q"))
theta = du - dx * p - dy * q
E = sympy.exp(u)


def test_wedge_examples():
    assert wedge(dx, dx).is_zero()
    omega1 = wedge(dp - dy * E, dx)
    assert omega1.coefficient("x", "p") == -1
    assert omega1.coefficient("x", "y") == E
    assert (wedge(dx, dy) + wedge(dy, dx)).is_zero()


def test_wedge_chart_mismatch():
    other = Chart(("x", "y"))
    with pytest.raises(ChartMismatchError):
        wedge(dx, other.d("x"))


def test_ext_d_examples():
    assert (ext_d(theta) - (wedge(dx, dp) + wedge(dy, dq))).is_zero()
    assert ext_d(dx).is_zero()
    f, g = x * sympy.sin(u), p**2 + y
    assert (ext_d(M5.d(g) * f) - wedge(M5.d(f), M5.d(g))).is_zero()


def test_reduce_mod_liouville():
    red = reduce_mod(ext_d(theta), [theta, dx, dp - dy * E])
    assert not red.is_zero()
    assert (red + wedge(dq, dy)).is_zero()


def test_reduce_mod_kills_ideal_multiples():
    anything = wedge(dp, dq) + wedge(dy, dx) * x
    assert reduce_mod(wedge(theta, anything), [theta]).is_zero()


def test_reduce_mod_dependent_generators():
    with pytest.raises(DependentGeneratorsError):
        reduce_mod(wedge(dx, dy), [dx, dx * 2])


def test_reduce_mod_through_liouville_transformation():
    # Omega_1 pulled back along p = f, q = g is a multiple of dP^dx modulo theta, theta_bar
    J = Chart(("x", "y", "u", "Z", "P", "Q"))
    f = J.parse("P + 2*exp((u + Z)/2)")
    g = J.parse("-Q + exp((u - Z)/2)")
    th = J.d("u") - J.d("x") * f - J.d("y") * g
    thb = J.d("Z") - J.d("x") * J.symbol("P") - J.d("y") * J.symbol("Q")
    omega1 = wedge(dp - dy * E, dx)
    pulled = reduce_mod(pullback(omega1, J, {"p": f, "q": g}), [th, thb])
    target = reduce_mod(wedge(J.d("P"), J.d("x")), [th, thb])
    key = next(iter(target.terms))
    ratio = sympy.cancel(pulled.terms[key] / target.terms[key])
    assert (pulled - target * ratio).is_zero()


def test_decomposable_examples():
    w = wedge(dp - dy * E, dx)
    dec = is_decomposable(w)
    assert dec and not dec.degenerate
    s, t = dec.factors
    assert (wedge(s, t) - w).is_zero()
    assert rank_of([s, t, dp - dy * E, dx]) == 2
    assert not is_decomposable(wedge(dx, dp) + wedge(dy, dq))
    zero = is_decomposable(DifferentialForm(M5, 2))
    assert not zero and zero.degenerate


def test_rank_of_examples():
    assert rank_of([dx, dy, dx + dy]) == 2
    assert rank_of([theta, dx, dp - dy * E]) == 3
    assert rank_of([]) == 0


def test_in_ideal():
    assert in_ideal(wedge(theta, dp) * x, [theta])
    assert not in_ideal(wedge(dx, dp), [theta])


def test_parse_form_syntax():
    th = parse_form("du - p*dx - q*dy", M5)
    assert (th - theta).is_zero()
    w = parse_form("(dp - exp(u)*d y) ^ dx", M5)
    assert (w - wedge(dp - dy * E, dx)).is_zero()
    named = parse_form("theta ^ d(p*q)", M5, {"theta": theta})
    assert (named - wedge(theta, M5.d(p * q))).is_zero()
    assert parse_form("x^2*dy", M5).coefficient("y") == x**2


def test_printing():
    assert str(theta) == "-p*dx - q*dy + du"


def test_pullback_defaults_to_same_name():
    src = Chart(("x", "y"))
    tgt = Chart(("x", "y", "s"))
    pb = pullback(wedge(src.d("x"), src.d("y")), tgt, {"y": "x*s"})
    assert pb.coefficient("x", "s") == tgt.symbol("x")


# -- properties ---------------------------------------------------------------

PROP_CHART = Chart(CHART_COORDS)


def _all_forms(seed: int, rational: bool):
    rng = random.Random(seed)
    return [random_form(rng, PROP_CHART, k, rational) for k in (0, 1, 2)]


@settings(max_examples=40)
@given(seeds)
def test_d_squared_zero(s):
    for a in _all_forms(s, rational=False):
        assert ext_d(ext_d(a)).is_zero()


@settings(max_examples=40)
@given(seeds)
def test_graded_anticommutativity(s):
    a, b, c = _all_forms(s, rational=True)
    for f, g in ((b, c), (b, b), (a, c), (c, c)):
        sign = (-1) ** (f.degree * g.degree)
        assert (wedge(f, g) - wedge(g, f) * sign).is_zero()


@settings(max_examples=40)
@given(seeds)
def test_leibniz(s):
    a, b, c = _all_forms(s, rational=False)
    for f, g in ((a, b), (b, b), (b, c), (a, c)):
        lhs = ext_d(wedge(f, g))
        rhs = wedge(ext_d(f), g) + wedge(f, ext_d(g)) * (-1) ** f.degree
        assert (lhs - rhs).is_zero()


@settings(max_examples=40)
@given(forms(2, polynomial=True), forms(1, polynomial=True), forms(1, polynomial=True))
def test_reduce_mod_idempotent_and_sound(w, g1, g2):
    gens = [g1, g2] if rank_of([g1, g2]) == 2 else [g1]
    red = reduce_mod(w, gens)
    assert (reduce_mod(red, gens) - red).is_zero()
    assert in_ideal(w - red, gens)


@settings(max_examples=40)
@given(forms(1), forms(1))
def test_decomposition_certificate(a, b):
    w = wedge(a, b)
    dec = is_decomposable(w)
    if w.is_zero():
        assert not dec
    else:
        s, t = dec.factors
        assert (wedge(s, t) - w).is_zero()
