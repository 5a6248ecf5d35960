"""Hyperbolic Monge-Ampere systems for u_xy = F(x, y, u, p, q).

The order-one data live on the chart (x, y, u, p, q); the prolongation adds
r = u_xx and t = u_yy.  Integrability is read off the terminal ranks of the
derived flags of the characteristic systems on both charts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import sympy

from .exterior import (
    Chart,
    DifferentialForm,
    ext_d,
    is_decomposable,
    reduce_mod,
    wedge,
)
from .pfaff import (
    DEFAULT_MAX_STEPS,
    DerivedFlag,
    PfaffianSystem,
    derived_flag,
    is_first_integral,
    rank_increase,
)
from .symcore import Expression, FunctionSymbol, normal_form, to_text

__all__ = [
    "BASE_COORDINATES",
    "PROLONGED_COORDINATES",
    "MongeAmpereSystem",
    "ProlongedSystem",
    "IntegrabilityReport",
    "from_pde",
    "characteristic_systems",
    "prolong",
    "classify",
    "verdict_from_ranks",
    "verify_invariant",
    "total_derivatives",
]

BASE_COORDINATES = ("x", "y", "u", "p", "q")
PROLONGED_COORDINATES = BASE_COORDINATES + ("r", "t")

WAVE_EQUIVALENT = "wave-equivalent"
MONGE_INTEGRABLE = "monge-integrable"
DARBOUX_ORDER_2 = "darboux-after-one-prolongation"
SEMI_ORDER_2 = "semi-integrable-after-prolongation"
UNDETERMINED = "undetermined-at-order-2"

x, y, u, p, q, r, t = sympy.symbols(PROLONGED_COORDINATES)


class DegenerateSystemError(ValueError):
    """A 2-form that should factor did not."""


@dataclass
class MongeAmpereSystem:
    chart: Chart
    F: Expression
    theta: DifferentialForm
    omega1: DifferentialForm
    omega2: DifferentialForm
    C1: PfaffianSystem
    C2: PfaffianSystem

    def characteristic(self, side: int) -> PfaffianSystem:
        return _pick(side, self.C1, self.C2)

    @property
    def ideal_one_forms(self) -> list[DifferentialForm]:
        return [self.theta]

    def parse(self, text: str) -> Expression:
        return self.chart.parse(text)

    def check_structure(self) -> dict[str, bool]:
        """The contact, decomposability and normalization conditions."""
        dth = ext_d(self.theta)
        return {
            "contact": not wedge(wedge(self.theta, dth), dth).is_zero(),
            "omega1_decomposable": wedge(self.omega1, self.omega1).is_zero(),
            "omega2_decomposable": wedge(self.omega2, self.omega2).is_zero(),
            "normalized": reduce_mod(dth + self.omega1 + self.omega2, [self.theta]).is_zero(),
        }


@dataclass
class ProlongedSystem:
    base: MongeAmpereSystem
    chart: Chart
    theta0: DifferentialForm
    theta1: DifferentialForm
    theta2: DifferentialForm
    omega1: DifferentialForm
    omega2: DifferentialForm
    D1: PfaffianSystem
    D2: PfaffianSystem

    def characteristic(self, side: int) -> PfaffianSystem:
        return _pick(side, self.D1, self.D2)

    @property
    def ideal_one_forms(self) -> list[DifferentialForm]:
        return [self.theta0, self.theta1, self.theta2]

    def parse(self, text: str) -> Expression:
        return self.chart.parse(text)


def _pick(side: int, a, b):
    if side not in (1, 2):
        raise ValueError("side must be 1 or 2")
    return a if side == 1 else b


def from_pde(
    F: Expression | str,
    constants: Sequence[str] = (),
    functions: Sequence[FunctionSymbol] = (),
) -> MongeAmpereSystem:
    """The system with theta = du - p dx - q dy and its two decomposable 2-forms."""
    chart = Chart(BASE_COORDINATES, constants, functions)
    F = chart.parse(F) if isinstance(F, str) else normal_form(sympy.sympify(F))
    chart.check_expression(F)
    theta = chart.d("u") - chart.d("x") * p - chart.d("y") * q
    pi1 = chart.d("p") - chart.d("y") * F
    pi2 = chart.d("q") - chart.d("x") * F
    omega1 = wedge(pi1, chart.d("x"))
    omega2 = wedge(pi2, chart.d("y"))
    C1 = PfaffianSystem(chart, [theta, chart.d("x"), pi1])
    C2 = PfaffianSystem(chart, [theta, chart.d("y"), pi2])
    return MongeAmpereSystem(chart, F, theta, omega1, omega2, C1, C2)


def characteristic_systems(M: MongeAmpereSystem) -> tuple[PfaffianSystem, PfaffianSystem]:
    """theta plus the factors of each Omega, recomputed from the 2-forms."""
    out = []
    for omega in (M.omega1, M.omega2):
        dec = is_decomposable(omega)
        if not dec:
            raise DegenerateSystemError(f"{omega} does not factor")
        out.append(PfaffianSystem(M.chart, [M.theta, *dec.factors]))
    return out[0], out[1]


def total_derivatives(F: Expression) -> tuple[Expression, Expression]:
    """D_x F and D_y F on the prolonged chart, using u_xy = F."""
    Fp, Fq, Fu = (sympy.diff(F, v) for v in (p, q, u))
    DxF = sympy.diff(F, x) + Fu * p + Fp * r + Fq * F
    DyF = sympy.diff(F, y) + Fu * q + Fp * F + Fq * t
    return normal_form(DxF), normal_form(DyF)


def prolong(M: MongeAmpereSystem) -> ProlongedSystem:
    chart = Chart(PROLONGED_COORDINATES, M.chart.constants, M.chart.functions)
    F = M.F
    dx, dy = chart.d("x"), chart.d("y")
    theta0 = chart.d("u") - dx * p - dy * q
    theta1 = chart.d("p") - dy * F - theta0 * sympy.diff(F, q) - dx * r
    theta2 = chart.d("q") - dx * F - theta0 * sympy.diff(F, p) - dy * t
    gens = [theta0, theta1, theta2]
    DxF, DyF = total_derivatives(F)
    expected = (
        wedge(chart.d("r") - dy * DxF, dx),
        wedge(chart.d("t") - dx * DyF, dy),
    )
    systems = []
    omegas = []
    for th, omega, eta in zip((theta1, theta2), expected, (dx, dy)):
        if not (reduce_mod(ext_d(th), gens) + omega).is_zero():
            raise DegenerateSystemError(f"d({th}) is not congruent to -({omega})")
        dec = is_decomposable(omega)
        if not dec:
            raise DegenerateSystemError(f"{omega} does not factor")
        omegas.append(omega)
        systems.append(PfaffianSystem(chart, gens + [eta, _first_factor(omega, eta)]))
    return ProlongedSystem(M, chart, theta0, theta1, theta2, omegas[0], omegas[1], *systems)


def _first_factor(omega: DifferentialForm, eta: DifferentialForm) -> DifferentialForm:
    """The factor sigma of omega = sigma ^ eta for a coordinate differential eta."""
    (j,) = next(iter(eta.terms))
    chart = omega.chart
    terms = {}
    for (a, b), c in omega.terms.items():
        if b == j:
            terms[(a,)] = c
        elif a == j:
            terms[(b,)] = -c
    sigma = DifferentialForm(chart, 1, terms)
    if not (wedge(sigma, eta) - omega).is_zero():
        raise DegenerateSystemError(f"{omega} is not a multiple of {eta}")
    return sigma


def verdict_from_ranks(order1: tuple[int, int], order2: tuple[int, int] | None) -> tuple[str, int | None]:
    """Verdict and (for Monge integrability) the integrable side."""
    ok1 = [rk >= 2 for rk in order1]
    if all(ok1):
        return WAVE_EQUIVALENT, None
    if any(ok1):
        return MONGE_INTEGRABLE, 1 if ok1[0] else 2
    if order2 is None:
        return UNDETERMINED, None
    ok2 = [rk >= 2 for rk in order2]
    if all(ok2):
        return DARBOUX_ORDER_2, None
    if any(ok2):
        return SEMI_ORDER_2, 1 if ok2[0] else 2
    return UNDETERMINED, None


@dataclass
class IntegrabilityReport:
    F: Expression
    order1: tuple[DerivedFlag, DerivedFlag]
    order2: tuple[DerivedFlag, DerivedFlag]
    invariants: list[dict] = field(default_factory=list)

    @property
    def terminal_ranks(self) -> dict[int, tuple[int, int]]:
        return {
            1: tuple(f.terminal.rank for f in self.order1),
            2: tuple(f.terminal.rank for f in self.order2),
        }

    @property
    def verdict(self) -> str:
        return verdict_from_ranks(self.terminal_ranks[1], self.terminal_ranks[2])[0]

    @property
    def side(self) -> int | None:
        return verdict_from_ranks(self.terminal_ranks[1], self.terminal_ranks[2])[1]

    def as_dict(self) -> dict:
        def flag(f: DerivedFlag) -> dict:
            return {
                "ranks": f.ranks,
                "terminal": f.terminal.text(),
                "terminal_is_frobenius": f.terminal_is_frobenius,
            }

        return {
            "F": to_text(self.F),
            "order1": {"side1": flag(self.order1[0]), "side2": flag(self.order1[1])},
            "order2": {"side1": flag(self.order2[0]), "side2": flag(self.order2[1])},
            "verdict": self.verdict,
            "side": self.side,
            "invariants": self.invariants,
        }


def classify(
    M: MongeAmpereSystem,
    max_steps: int = DEFAULT_MAX_STEPS,
    invariants: Mapping[int, Iterable[Expression | str]] | None = None,
) -> IntegrabilityReport:
    """Derived flags at orders one and two, the verdict, and optional invariant checks.

    ``invariants`` maps a side to second-order invariant candidates, which are
    checked on the prolongation.
    """
    order1 = tuple(derived_flag(M.characteristic(s), max_steps) for s in (1, 2))
    P = prolong(M)
    order2 = tuple(derived_flag(P.characteristic(s), max_steps) for s in (1, 2))
    checked = []
    for side, hs in sorted((invariants or {}).items()):
        for h in hs:
            expr = P.parse(h) if isinstance(h, str) else h
            checked.append(
                {"side": side, "invariant": to_text(expr), "verified": verify_invariant(P, side, expr)}
            )
    return IntegrabilityReport(M.F, order1, order2, checked)


def verify_invariant(
    system: MongeAmpereSystem | ProlongedSystem, side: int, h: Expression | str
) -> bool:
    """h is a first integral of the side's characteristic system, independent of the ideal."""
    h = system.parse(h) if isinstance(h, str) else normal_form(sympy.sympify(h))
    system.chart.check_expression(h)
    K = system.characteristic(side)
    if not is_first_integral(K, h):
        return False
    return rank_increase(system.ideal_one_forms, [system.chart.d(h)]) == 1
