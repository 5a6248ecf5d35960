"""Backlund transformations to the wave equation, and auto-transformations.

A :class:`WaveBT` is the solved form p = f(x, y, u, Z, P), q = g(x, y, u, Z, Q)
linking u_xy = F(x, y, u, p, q) to Z_xy = 0 with x and y preserved.  All
checks are done on the joint chart (x, y, u, Z, P, Q).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import sympy

from . import _linalg
from .exterior import Chart, DifferentialForm, ext_d, pullback, reduce_mod, wedge
from .mongeampere import BASE_COORDINATES, PROLONGED_COORDINATES
from .symcore import (
    Expression,
    FunctionSymbol,
    current_config,
    is_zero,
    normal_form,
    to_text,
    zero_test_settings,
)

__all__ = [
    "JOINT_COORDINATES",
    "WaveBT",
    "AutoBT",
    "BTReport",
    "Residual",
    "HolonomyCertificate",
    "TransportResult",
    "CompatibilityResult",
    "BTPreconditionError",
    "DegenerateCompatibilityError",
    "verify_wave_bt",
    "residuals",
    "is_normal",
    "is_holonomic",
    "invariant_transport",
    "compatibility_pde",
    "verify_general_congruence",
    "wave_direction",
]

JOINT_COORDINATES = ("x", "y", "u", "Z", "P", "Q")
AUTO_COORDINATES = ("x", "y", "u", "v", "ux", "uy")

x, y, u, p, q, r, t = sympy.symbols(PROLONGED_COORDINATES)
Z, P, Q, R, T = sympy.symbols("Z P Q R T")
v, ux, uy, s = sympy.symbols("v ux uy s")


class BTPreconditionError(ValueError):
    """The transformation does not satisfy the defining identities."""


class DegenerateCompatibilityError(ValueError):
    """Cross-differentiation does not determine u_xy."""


def _parse_on(coords, text_or_expr, constants, functions) -> Expression:
    chart = Chart(coords, constants, functions)
    if isinstance(text_or_expr, str):
        return chart.parse(text_or_expr)
    e = normal_form(sympy.sympify(text_or_expr))
    chart.check_expression(e)
    return e


@dataclass
class WaveBT:
    """p = f(x, y, u, Z, P), q = g(x, y, u, Z, Q) for u_xy = F."""

    F: Expression
    f: Expression
    g: Expression
    constants: tuple[str, ...] = ()
    functions: tuple[FunctionSymbol, ...] = ()
    name: str = ""
    domain: tuple[Expression, ...] = ()

    def __post_init__(self):
        self.constants = tuple(self.constants)
        self.functions = tuple(self.functions)
        self.F = _parse_on(BASE_COORDINATES, self.F, self.constants, self.functions)
        self.f = _parse_on(("x", "y", "u", "Z", "P"), self.f, self.constants, self.functions)
        self.g = _parse_on(("x", "y", "u", "Z", "Q"), self.g, self.constants, self.functions)
        self.domain = tuple(
            _parse_on(JOINT_COORDINATES, d, self.constants, self.functions) for d in self.domain
        )

    def assumptions(self):
        """Zero-test settings restricted to the declared domain (positivity guards)."""
        guards = tuple(dict.fromkeys(current_config().guards + self.domain))
        return zero_test_settings(guards=guards)

    @property
    def chart(self) -> Chart:
        return Chart(JOINT_COORDINATES, self.constants, self.functions)

    def on_solution(self, e: Expression) -> Expression:
        """Substitute p -> f, q -> g."""
        return e.xreplace({p: self.f, q: self.g})


@dataclass
class Residual:
    name: str
    expression: Expression
    zero: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": to_text(self.expression), "zero": self.zero}


@dataclass
class HolonomyCertificate:
    c1: Expression
    c2: Expression
    holonomic: bool

    def __bool__(self) -> bool:
        return self.holonomic

    def as_dict(self) -> dict:
        return {"holonomic": self.holonomic, "c1": to_text(self.c1), "c2": to_text(self.c2)}


@dataclass
class TransportResult:
    invariant: Expression
    side: int
    transported: Expression
    failing_variable: str | None = None
    failing_partial: Expression | None = None

    @property
    def ok(self) -> bool:
        return self.failing_variable is None

    @property
    def result(self) -> Expression | None:
        return self.transported if self.ok else None

    def as_dict(self) -> dict:
        d = {"side": self.side, "invariant": to_text(self.invariant), "ok": self.ok}
        if self.ok:
            d["transported"] = to_text(self.transported)
        else:
            d["failing_variable"] = self.failing_variable
            d["failing_partial"] = to_text(self.failing_partial)
        return d


@dataclass
class BTReport:
    residuals: list[Residual]
    normal: bool | None = None
    holonomy: HolonomyCertificate | None = None
    congruence: bool | None = None
    transports: list[TransportResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(res.zero for res in self.residuals)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "residuals": [res.as_dict() for res in self.residuals],
            "congruence": self.congruence,
            "normal": self.normal,
            "holonomy": None if self.holonomy is None else self.holonomy.as_dict(),
            "transports": [tr.as_dict() for tr in self.transports],
        }


def _in_domain(fn):
    @functools.wraps(fn)
    def wrapper(bt, *args, **kwargs):
        with bt.assumptions():
            return fn(bt, *args, **kwargs)

    return wrapper


@_in_domain
def residuals(bt: WaveBT) -> list[Residual]:
    f, g = bt.f, bt.g
    Fo = bt.on_solution(bt.F)
    Fp = bt.on_solution(sympy.diff(bt.F, p))
    Fq = bt.on_solution(sympy.diff(bt.F, q))
    fu, fZ, gu, gZ = sympy.diff(f, u), sympy.diff(f, Z), sympy.diff(g, u), sympy.diff(g, Z)
    raw = [
        ("f_y", sympy.diff(f, y) - (Fo - fu * g - fZ * Q)),
        ("g_x", sympy.diff(g, x) - (Fo - gu * f - gZ * P)),
        ("f_Z", fZ - (Fq - fu) * sympy.diff(g, Q)),
        ("g_Z", gZ - (Fp - gu) * sympy.diff(f, P)),
    ]
    out = []
    for name, e in raw:
        e = normal_form(e)
        out.append(Residual(name, e, is_zero(e)))
    return out


@_in_domain
def verify_wave_bt(
    bt: WaveBT, invariants: Mapping[int, Sequence[Expression | str]] | None = None
) -> BTReport:
    """Residuals, plus normality, holonomy, congruence and transports when they pass."""
    report = BTReport(residuals(bt))
    report.congruence = verify_general_congruence(bt)
    if not report.passed:
        return report
    report.normal = is_normal(bt)
    report.holonomy = is_holonomic(bt)
    for side, Js in sorted((invariants or {}).items()):
        for J in Js:
            report.transports.append(invariant_transport(bt, J, side))
    return report


def _require(bt: WaveBT) -> None:
    bad = [res.name for res in residuals(bt) if not res.zero]
    if bad:
        raise BTPreconditionError(f"residuals {', '.join(bad)} do not vanish")


def _contact_forms(bt: WaveBT) -> tuple[DifferentialForm, DifferentialForm]:
    J = bt.chart
    theta = J.d("u") - J.d("x") * bt.f - J.d("y") * bt.g
    theta_bar = J.d("Z") - J.d("x") * P - J.d("y") * Q
    return theta, theta_bar


@_in_domain
def is_normal(bt: WaveBT, check: bool = True) -> bool:
    """d(theta) and d(theta_bar) stay independent modulo theta, theta_bar."""
    if check:
        _require(bt)
    theta, theta_bar = _contact_forms(bt)
    gens = [theta, theta_bar]
    a = reduce_mod(ext_d(theta), gens)
    b = reduce_mod(ext_d(theta_bar), gens)
    keys = sorted(set(a.terms) | set(b.terms))
    rows = [[w.terms.get(k, sympy.S.Zero) for k in keys] for w in (a, b)]
    return bool(keys) and _linalg.rank(rows) == 2


@_in_domain
def is_holonomic(bt: WaveBT, check: bool = True) -> HolonomyCertificate:
    if check:
        _require(bt)
    f, g = bt.f, bt.g
    fP, fZ, gQ, gZ = (sympy.diff(f, P), sympy.diff(f, Z), sympy.diff(g, Q), sympy.diff(g, Z))
    c1 = gQ * (sympy.diff(f, u, Z) * fP - sympy.diff(f, P, u) * fZ)
    c2 = fP * (sympy.diff(g, u, Z) * gQ - sympy.diff(g, Q, u) * gZ)
    c1, c2 = normal_form(c1), normal_form(c2)
    return HolonomyCertificate(c1, c2, is_zero(c1) and is_zero(c2))


_TRANSPORT_CHECKS = {1: (u, Z, y, Q, T), 2: (u, Z, x, P, R)}


@_in_domain
def invariant_transport(
    bt: WaveBT, J: Expression | str, side: int, check: bool = True
) -> TransportResult:
    """Rewrite a second-order invariant through the transformation.

    Side 1 must land in functions of (x, P, R), side 2 in (y, Q, T).
    """
    if side not in (1, 2):
        raise ValueError("side must be 1 or 2")
    if check:
        _require(bt)
    J = _parse_on(PROLONGED_COORDINATES, J, bt.constants, bt.functions)
    f, g = bt.f, bt.g
    r_image = sympy.diff(f, x) + sympy.diff(f, u) * f + sympy.diff(f, Z) * P + sympy.diff(f, P) * R
    t_image = sympy.diff(g, y) + sympy.diff(g, u) * g + sympy.diff(g, Z) * Q + sympy.diff(g, Q) * T
    image = normal_form(J.xreplace({p: f, q: g, r: r_image, t: t_image}))
    for var in _TRANSPORT_CHECKS[side]:
        partial = normal_form(sympy.diff(image, var))
        if not is_zero(partial):
            return TransportResult(J, side, image, str(var), partial)
    return TransportResult(J, side, image)


@_in_domain
def verify_general_congruence(bt: WaveBT) -> bool:
    """Omega_1, Omega_2 pulled back become nonzero multiples of dP^dx, dQ^dy mod theta, theta_bar.

    This goes through the exterior algebra only, independent of the residual formulas.
    """
    source = Chart(BASE_COORDINATES, bt.constants, bt.functions)
    joint = bt.chart
    omegas = (
        wedge(source.d("p") - source.d("y") * bt.F, source.d("x")),
        wedge(source.d("q") - source.d("x") * bt.F, source.d("y")),
    )
    targets = (wedge(joint.d("P"), joint.d("x")), wedge(joint.d("Q"), joint.d("y")))
    gens = list(_contact_forms(bt))
    mapping = {"p": bt.f, "q": bt.g}
    for omega, target in zip(omegas, targets):
        a = reduce_mod(pullback(omega, joint, mapping), gens)
        b = reduce_mod(target, gens)
        if a.is_zero() or b.is_zero():
            return False
        key = next(iter(b.terms))
        ratio = normal_form(a.terms.get(key, sympy.S.Zero) / b.terms[key])
        if is_zero(ratio) or not (a - b * ratio).is_zero():
            return False
    return True


# ---------------------------------------------------------------------------
# auto-Backlund transformations


@dataclass
class AutoBT:
    """v_x = A(x, y, u, v, ux), v_y = B(x, y, u, v, uy)."""

    A: Expression
    B: Expression
    constants: tuple[str, ...] = ()
    functions: tuple[FunctionSymbol, ...] = ()
    name: str = ""

    def __post_init__(self):
        self.constants = tuple(self.constants)
        self.functions = tuple(self.functions)
        self.A = _parse_on(("x", "y", "u", "v", "ux"), self.A, self.constants, self.functions)
        self.B = _parse_on(("x", "y", "u", "v", "uy"), self.B, self.constants, self.functions)


@dataclass
class CompatibilityResult:
    G: Expression
    v_independent: bool

    def as_dict(self) -> dict:
        return {"G": to_text(self.G), "v_independent": self.v_independent}


def compatibility_pde(abt: AutoBT) -> CompatibilityResult:
    """The equation u_xy = G forced on u by requiring v_xy = v_yx."""
    A, B = abt.A, abt.B
    DyA = sympy.diff(A, y) + sympy.diff(A, u) * uy + sympy.diff(A, v) * B + sympy.diff(A, ux) * s
    DxB = sympy.diff(B, x) + sympy.diff(B, u) * ux + sympy.diff(B, v) * A + sympy.diff(B, uy) * s
    E = sympy.expand(DyA - DxB)
    if not is_zero(normal_form(sympy.diff(E, s, 2))):
        raise DegenerateCompatibilityError("compatibility condition is not linear in u_xy")
    a = normal_form(sympy.diff(E, s))
    if is_zero(a):
        raise DegenerateCompatibilityError("u_xy drops out of the compatibility condition")
    b = normal_form(E.xreplace({s: 0}))
    G = normal_form(-b / a)
    simpler = sympy.simplify(G)
    if sympy.count_ops(simpler) < sympy.count_ops(G) and is_zero(simpler - G):
        G = simpler
    return CompatibilityResult(G, is_zero(normal_form(sympy.diff(G, v))))


def wave_direction(bt: WaveBT) -> AutoBT:
    """Read p = f, q = g as equations for u driven by a seed Z.

    In the returned system the seed is called u and the generated function v,
    so its compatibility equation constrains the seed.
    """
    table = {u: v, Z: u, P: ux, Q: uy}
    return AutoBT(
        bt.f.xreplace(table), bt.g.xreplace(table), bt.constants, bt.functions, bt.name
    )
