from __future__ import annotations

import random

import pytest
import sympy
from hypothesis import given, settings

from edskit import catalog
from edskit.backlund import (
    AutoBT,
    BTPreconditionError,
    DegenerateCompatibilityError,
    WaveBT,
    compatibility_pde,
    invariant_transport,
    is_holonomic,
    is_normal,
    residuals,
    verify_general_congruence,
    verify_wave_bt,
    wave_direction,
)
from edskit.symcore import FunctionSymbol, is_zero
from strategies import random_polynomial, seeds

x, y, u, Z, P, Q, R, T = sympy.symbols("x y u Z P Q R T")

LIOUVILLE = WaveBT("exp(u)", "P + 2*exp((u + Z)/2)", "-Q + exp((u - Z)/2)")
XIII = WaveBT("2*u/(x + y)^2", "P + y*(u + Z)/(x*(x + y))", "-Q + x*(u - Z)/(y*(x + y))")
BAD = WaveBT("exp(u)", "P", "Q")
IDENTITY = WaveBT("0", "P", "Q")


def catalog_bt(entry_id: str, name: str) -> WaveBT:
    entry = catalog.get(entry_id)
    tr = next(t for t in entry.transformations if t.name == name)
    return tr.build(entry)


def test_verify_examples():
    assert verify_wave_bt(LIOUVILLE).passed
    assert verify_wave_bt(XIII).passed
    rep = verify_wave_bt(BAD)
    assert not rep.passed
    fy = next(r for r in rep.residuals if r.name == "f_y")
    assert not fy.zero and is_zero(fy.expression + sympy.exp(u))


def test_normality():
    assert is_normal(LIOUVILLE)
    assert is_normal(XIII)
    assert not is_normal(IDENTITY)


def test_precondition_enforced():
    with pytest.raises(BTPreconditionError):
        is_normal(BAD)
    with pytest.raises(BTPreconditionError):
        is_holonomic(BAD)
    with pytest.raises(BTPreconditionError):
        invariant_transport(BAD, "r", 1)


def test_holonomy():
    assert is_holonomic(XIII).holonomic
    cert = is_holonomic(LIOUVILLE)
    assert not cert.holonomic
    assert is_zero(cert.c1 + sympy.exp((u + Z) / 2) / 2)
    assert not is_holonomic(catalog_bt("VII", "Z.VII")).holonomic
    assert not is_holonomic(catalog_bt("II", "Z.II")).holonomic


def test_transport():
    res = invariant_transport(LIOUVILLE, "r - p^2/2", 1)
    assert res.ok and is_zero(res.result - (R - P**2 / 2))
    xiii = invariant_transport(XIII, "r + 2*p/(x + y)", 1)
    assert xiii.ok and xiii.result.free_symbols <= {x, P, R}
    bad = invariant_transport(LIOUVILLE, "r", 1)
    assert not bad.ok and bad.result is None
    assert bad.failing_variable == "u" and not is_zero(bad.failing_partial)


def test_congruence_examples():
    assert verify_general_congruence(LIOUVILLE)
    assert verify_general_congruence(catalog_bt("II", "Z.II"))
    assert not verify_general_congruence(BAD)


def test_liouville_general_family_symbolic():
    v, w = FunctionSymbol("v"), FunctionSymbol("w")
    bt = WaveBT(
        "exp(u)",
        "k*P + 2*exp((u + k*Z + v(x) + w(y))/2) + v'(x)",
        "-k*Q + exp((u - k*Z - v(x) - w(y))/2) - w'(y)",
        constants=["k"], functions=[v, w],
    )
    assert all(r.zero for r in residuals(bt))
    assert verify_general_congruence(bt)


def test_open_question_z1_both_readings():
    printed = verify_wave_bt(catalog_bt("I", "Z.I"))
    assert not printed.passed and printed.congruence is False
    flipped = verify_wave_bt(catalog_bt("I", "Z.I+"))
    assert flipped.passed and flipped.congruence


def test_compatibility_examples():
    sg = compatibility_pde(AutoBT("ux + sin((u + v)/2)/2", "-uy - sin((u - v)/2)/2"))
    assert sg.v_independent
    c = sympy.cancel(sg.G / sympy.sin(u))
    assert c.is_number and catalog.sg_constant_matches(sg.G)
    assert compatibility_pde(wave_direction(LIOUVILLE)).G == 0
    shift = compatibility_pde(AutoBT("ux", "-uy"))
    assert shift.G == 0 and shift.v_independent


def test_compatibility_degenerate():
    with pytest.raises(DegenerateCompatibilityError):
        compatibility_pde(AutoBT("v", "v"))


@pytest.mark.parametrize("entry_id, name", [
    ("IX", "liouville-wave"), ("XIII", "xiii-wave"), ("II", "Z.II"), ("VII", "Z.VII"),
])
def test_wave_direction_is_wave(entry_id, name):
    res = compatibility_pde(wave_direction(catalog_bt(entry_id, name)))
    assert res.v_independent and is_zero(res.G)


def test_holonomy_gauge_covariant():
    for bt in (LIOUVILLE, XIII, catalog_bt("VII", "Z.VII")):
        c = sympy.Rational(3, 7)
        shifted = WaveBT(bt.F, bt.f.xreplace({Z: Z + c}), bt.g.xreplace({Z: Z + c}))
        assert verify_wave_bt(shifted).passed
        assert is_holonomic(shifted).holonomic == is_holonomic(bt).holonomic


def test_domain_guards_scope():
    bt = catalog_bt("I", "Z.I+")
    assert bt.domain
    assert verify_wave_bt(bt).passed


def test_report_serializes():
    d = verify_wave_bt(LIOUVILLE, {1: ["r - p^2/2"]}).as_dict()
    assert d["passed"] and d["holonomy"]["holonomic"] is False
    assert d["transports"][0]["transported"] == "-P^2/2 + R"


# -- perturbed negatives and agreement ----------------------------------------

EXPLICIT = [("IX", "liouville-wave"), ("XIII", "xiii-wave"), ("II", "Z.II"), ("VII", "Z.VII")]


@pytest.mark.parametrize("entry_id, name", EXPLICIT)
def test_perturbed_negatives_fail(entry_id, name):
    bt = catalog_bt(entry_id, name)
    for f, g in ((bt.f + sympy.Rational(1, 100), bt.g), (bt.f, bt.g * sympy.Rational(101, 100)),
                 (bt.f, bt.g + u / 50)):
        bad = WaveBT(bt.F, f, g, bt.constants, bt.functions, domain=bt.domain)
        rep = verify_wave_bt(bad)
        assert not rep.passed and rep.congruence is False


@settings(max_examples=25)
@given(seeds)
def test_agreement_randomized(s):
    rng = random.Random(s)
    base = [LIOUVILLE, XIII][s % 2]
    f_vars = [x, y, u, Z, P]
    g_vars = [x, y, u, Z, Q]
    eps = sympy.Rational(rng.randint(1, 9), 100) * rng.choice([0, 1])
    f = base.f + eps * random_polynomial(rng, f_vars)
    g = base.g + sympy.Rational(rng.randint(0, 3), 50) * random_polynomial(rng, g_vars)
    bt = WaveBT(base.F, f, g)
    rep = verify_wave_bt(bt)
    assert rep.passed == rep.congruence
