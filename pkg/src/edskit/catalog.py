"""Built-in equations and transformations with self-checks.

Entries follow Goursat's numbering for the Darboux-integrable equations, plus
the wave equation and sine-Gordon.  Transformations are stored in solved form
where one is known; implicit ones are kept as non-runnable stubs so that
``show`` can still print them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator

import sympy

from .backlund import AutoBT, WaveBT, compatibility_pde, verify_wave_bt
from .mongeampere import classify, from_pde, prolong, verify_invariant
from .pfaff import DEFAULT_MAX_STEPS
from .symcore import FunctionSymbol, is_zero, parse_expression, to_text

__all__ = [
    "FunctionSpec",
    "Transformation",
    "CatalogEntry",
    "CATALOG",
    "get",
    "ids",
    "selftest",
    "SelftestLine",
    "SG_COMPATIBILITY_CONSTANT",
]

# u_xy = c sin u is what cross-differentiating the classical sine-Gordon
# auto-transformation (with halves in front of the sines) forces; c != 1.
SG_COMPATIBILITY_CONSTANT = "1/16"


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    rule: str | None = None
    constants: tuple[str, ...] = ()

    def build(self) -> FunctionSymbol:
        return FunctionSymbol(self.name, self.rule, constants=self.constants)


@dataclass(frozen=True)
class Transformation:
    """A stored transformation and what its checks are expected to report."""

    name: str
    kind: str  # "wave", "auto" or "implicit"
    provenance: str
    f: str = ""
    g: str = ""
    F: str | None = None  # source equation if it differs from the entry's
    constants: tuple[str, ...] = ()
    functions: tuple[FunctionSpec, ...] = ()
    domain: tuple[str, ...] = ()
    expect_pass: bool = True
    expect_normal: bool | None = None
    expect_holonomic: bool | None = None
    relation: str = ""  # implicit form, for display
    note: str = ""

    @property
    def runnable(self) -> bool:
        return self.kind in ("wave", "auto")

    def build(self, entry: CatalogEntry):
        consts = tuple(dict.fromkeys(entry.constants + self.constants))
        funcs = tuple(fs.build() for fs in entry.functions + self.functions)
        if self.kind == "wave":
            return WaveBT(self.F or entry.F, self.f, self.g, consts, funcs, self.name, self.domain)
        if self.kind == "auto":
            return AutoBT(self.f, self.g, consts, funcs, self.name)
        raise ValueError(f"{self.name} is stored in implicit form and cannot be run")


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    title: str
    F: str
    provenance: str
    constants: tuple[str, ...] = ()
    functions: tuple[FunctionSpec, ...] = ()
    invariants: dict = field(default_factory=dict)  # side -> second-order invariants
    first_order_invariants: dict = field(default_factory=dict)
    expected_verdict: str | None = None
    expected_side: int | None = None
    transformations: tuple[Transformation, ...] = ()
    runnable: bool = True
    note: str = ""

    def system(self):
        return from_pde(self.F, self.constants, [fs.build() for fs in self.functions])

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "F": self.F,
            "provenance": self.provenance,
            "runnable": self.runnable,
            "constants": list(self.constants),
            "functions": [
                {"name": fs.name, "rule": fs.rule, "constants": list(fs.constants)}
                for fs in self.functions
            ],
            "expected_verdict": self.expected_verdict,
            "expected_side": self.expected_side,
            "first_order_invariants": {str(k): v for k, v in self.first_order_invariants.items()},
            "invariants": {str(k): v for k, v in self.invariants.items()},
            "transformations": [
                {
                    k: v
                    for k, v in {
                        "name": t.name,
                        "kind": t.kind,
                        "provenance": t.provenance,
                        "f" if t.kind == "wave" else "A": t.f or None,
                        "g" if t.kind == "wave" else "B": t.g or None,
                        "F": t.F,
                        "constants": list(t.constants) or None,
                        "domain": list(t.domain) or None,
                        "relation": t.relation or None,
                        "expect_pass": t.expect_pass,
                        "expect_holonomic": t.expect_holonomic,
                        "note": t.note or None,
                    }.items()
                    if v is not None
                }
                for t in self.transformations
            ],
            "note": self.note or None,
        }


DARBOUX = "darboux-after-one-prolongation"
ALPHA = FunctionSpec("alpha", "K - s/alpha(s)", ("K",))
BETA = FunctionSpec("beta", "K - s/beta(s)", ("K",))
V_OF_X = FunctionSpec("v")
W_OF_Y = FunctionSpec("w")

_ZI_RADICAL_PRINTED = "((Z - u)/(x - y))^(1/2)"
_ZI_RADICAL = "((Z - u)/(x + y))^(1/2)"

_ENTRIES = [
    CatalogEntry(
        "wave",
        "wave equation",
        "0",
        "classical",
        first_order_invariants={1: ["x", "p"], 2: ["y", "q"]},
        invariants={1: ["r"], 2: ["t"]},
        expected_verdict="wave-equivalent",
        transformations=(
            Transformation(
                "identity", "wave", "trivial", f="P", g="Q",
                expect_normal=False, expect_holonomic=True,
                note="dtheta and dtheta_bar coincide modulo the contact forms",
            ),
        ),
    ),
    CatalogEntry(
        "I",
        "(x+y) u_xy = 2 sqrt(u_x u_y)",
        "2*(p*q)^(1/2)/(x + y)",
        "Goursat-Vessiot list",
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "Z.I", "wave", "Zvyagin's list, as printed, solved for p and q",
                f=f"(P^(1/2) + {_ZI_RADICAL_PRINTED})^2",
                g=f"(Q^(1/2) - {_ZI_RADICAL_PRINTED})^2",
                expect_pass=False,
                note="verify-expected-to-fail-or-need-coordinate-flip: the (x - y) "
                "radicand does not match (x + y) in the equation",
            ),
            Transformation(
                "Z.I+", "wave", "Zvyagin's list with the radicand over (x + y)",
                f=f"(P^(1/2) + {_ZI_RADICAL})^2",
                g=f"(Q^(1/2) - {_ZI_RADICAL})^2",
                domain=(f"Q^(1/2) - {_ZI_RADICAL}",),
                expect_normal=True, expect_holonomic=False,
                note="valid where sqrt(Q) exceeds the radical, so that sqrt(p q) "
                "takes the principal branch",
            ),
        ),
    ),
    CatalogEntry(
        "II",
        "u u_xy = sqrt(1+u_x^2) sqrt(1+u_y^2)",
        "(1 + p^2)^(1/2)*(1 + q^2)^(1/2)/u",
        "Goursat-Vessiot list",
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "Z.II", "wave", "Zvyagin's list, solved for p and q (branch matching the equation)",
                f="(Z*P - (Z^2 - u^2)^(1/2)*(1 + P^2)^(1/2))/u",
                g="(Z*Q + (Z^2 - u^2)^(1/2)*(1 + Q^2)^(1/2))/u",
                expect_normal=True, expect_holonomic=False,
            ),
            Transformation(
                "Z.II-printed", "wave",
                "Zvyagin's list, both relations with the same sign, solved for p and q",
                f="(Z*P - (Z^2 - u^2)^(1/2)*(1 + P^2)^(1/2))/u",
                g="(Z*Q - (Z^2 - u^2)^(1/2)*(1 + Q^2)^(1/2))/u",
                F="-(1 + p^2)^(1/2)*(1 + q^2)^(1/2)/u",
                expect_normal=True, expect_holonomic=False,
                note="links the wave equation to u u_xy = -sqrt(1+p^2) sqrt(1+q^2), "
                "the image of the equation under y -> -y",
            ),
        ),
    ),
    CatalogEntry(
        "III",
        "sin(u) u_xy = sqrt(1+u_x^2) sqrt(1+u_y^2)",
        "(1 + p^2)^(1/2)*(1 + q^2)^(1/2)/sin(u)",
        "Goursat-Vessiot list",
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "Z.III", "implicit", "Zvyagin's list",
                relation="p = ((sinh(Z) + exp(-w)/2) P + exp((Z - w)/2) sqrt(P^2 - 1))/(-sin(u)), "
                "q = ((sinh(Z) - exp(-w)/2) Q + exp(-(w + Z)/2) sqrt(Q^2 - 1))/(-sin(u)), "
                "with cos(u) = cosh(Z) - exp(-w)/2",
                note="implicit in w; solved-form transformations only",
            ),
        ),
    ),
    CatalogEntry(
        "IV",
        "u u_xy = alpha(u_x) beta(u_y), alpha' = K - s/alpha, beta' = K - s/beta",
        "alpha(p)*beta(q)/u",
        "Goursat-Vessiot list",
        constants=("K",),
        functions=(ALPHA, BETA),
        invariants={1: ["r/alpha(p) - alpha(p)/u"], 2: ["t/beta(q) - beta(q)/u"]},
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "IV-implicit", "implicit", "holonomic family",
                relation="alpha(p) - p = (v'(x) - P) u/(Z - v(x) - w(y)), "
                "beta(q) - q = (w'(y) - Q) u/(Z - v(x) - w(y))",
                note="implicit in p and q; solved-form transformations only",
            ),
        ),
    ),
    CatalogEntry(
        "V",
        "(x+y) u_xy = gamma(u_x) gamma(u_y), gamma(s) - 1 = exp(s - gamma(s))",
        "gamma(p)*gamma(q)/(x + y)",
        "Goursat-Vessiot list",
        runnable=False,
        note="gamma is defined implicitly with no elementary closed form; not runnable",
    ),
    CatalogEntry(
        "VII",
        "u_xy = exp(u) sqrt(1+u_x^2)",
        "exp(u)*(1 + p^2)^(1/2)",
        "Goursat-Vessiot list (contact-equivalent representative)",
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "Z.VII", "wave", "Zvyagin's list",
                f="(1 - 2*exp(u + Z))*P - 2*exp((u + Z)/2)*(exp(u + Z) - 1)^(1/2)*(P^2 + 1)^(1/2)",
                g="-Q - exp((u - Z)/2)*(exp(u + Z) - 1)^(1/2)",
                expect_normal=True, expect_holonomic=False,
            ),
        ),
    ),
    CatalogEntry(
        "VIII*",
        "u_xy = u_x/(x+y)",
        "p/(x + y)",
        "Goursat-Vessiot list (contact-reduced special case of VIII)",
        expected_verdict="monge-integrable",
        expected_side=1,
    ),
    CatalogEntry(
        "IX",
        "Liouville: u_xy = exp(u)",
        "exp(u)",
        "Goursat-Vessiot list",
        invariants={1: ["x", "r - p^2/2"], 2: ["y", "t - q^2/2"]},
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "liouville-wave", "wave", "classical",
                f="P + 2*exp((u + Z)/2)", g="-Q + exp((u - Z)/2)",
                expect_normal=True, expect_holonomic=False,
            ),
            Transformation(
                "liouville-general", "wave", "general solved form with arbitrary v(x), w(y)",
                f="k*P + 2*exp((u + k*Z + v(x) + w(y))/2) + v'(x)",
                g="-k*Q + exp((u - k*Z - v(x) - w(y))/2) - w'(y)",
                constants=("k",), functions=(V_OF_X, W_OF_Y),
                expect_normal=True, expect_holonomic=False,
            ),
            Transformation(
                "liouville-lambda", "wave", "parametric (scaling) family",
                f="P + 2*lambda*exp((u + Z)/2)", g="-Q + exp((u - Z)/2)/lambda",
                constants=("lambda",),
                expect_normal=True, expect_holonomic=False,
            ),
        ),
    ),
    CatalogEntry(
        "X",
        "u_xy = u_x exp(u)",
        "p*exp(u)",
        "Goursat-Vessiot list",
        first_order_invariants={2: ["y", "exp(u) - q"]},
        expected_verdict="monge-integrable",
        expected_side=2,
    ),
    CatalogEntry(
        "XI",
        "u_xy = (1/(u+x) + 1/(u+y)) u_x u_y",
        "(1/(u + x) + 1/(u + y))*p*q",
        "Goursat-Vessiot list (contact-equivalent representative)",
        expected_verdict=DARBOUX,
    ),
    CatalogEntry(
        "XII",
        "u_xy = a u_x + b u_y - a b u",
        "a(x, y)*p + b(x, y)*q - a(x, y)*b(x, y)*u",
        "Vessiot's linear addition",
        runnable=False,
        note="a, b must solve a coupled Liouville-type system with no closed form; "
        "two-argument functions are also outside the expression language; not runnable",
    ),
    CatalogEntry(
        "XIII",
        "u_xy = 2u/(x+y)^2",
        "2*u/(x + y)^2",
        "Vessiot's linear addition",
        invariants={1: ["r + 2*p/(x + y)"], 2: ["t + 2*q/(x + y)"]},
        expected_verdict=DARBOUX,
        transformations=(
            Transformation(
                "xiii-wave", "wave", "holonomic family member",
                f="P + y*(u + Z)/(x*(x + y))", g="-Q + x*(u - Z)/(y*(x + y))",
                expect_normal=True, expect_holonomic=True,
            ),
        ),
    ),
    CatalogEntry(
        "sine-gordon",
        "u_xy = sin(u)",
        "sin(u)",
        "classical",
        expected_verdict="undetermined-at-order-2",
        transformations=(
            Transformation(
                "sg-auto", "auto", "classical auto-transformation",
                f="ux + sin((u + v)/2)/2", g="-uy - sin((u - v)/2)/2",
                note="open question: cross-differentiation gives u_xy = c sin(u) with "
                f"c = {SG_COMPATIBILITY_CONSTANT}, not 1; the constant is reported, not asserted",
            ),
            Transformation(
                "sg-auto-lambda", "auto", "parametric (scaling) family",
                f="ux + lambda*sin((u + v)/2)/2", g="-uy - sin((u - v)/2)/(2*lambda)",
                constants=("lambda",),
            ),
        ),
    ),
]

CATALOG: dict[str, CatalogEntry] = {e.id: e for e in _ENTRIES}
ALIASES = {"liouville": "IX", "sg": "sine-gordon", "VIII": "VIII*"}


def ids() -> list[str]:
    return list(CATALOG)


def get(entry_id: str) -> CatalogEntry:
    key = ALIASES.get(entry_id, entry_id)
    try:
        return CATALOG[key]
    except KeyError:
        raise KeyError(f"unknown catalog id {entry_id!r}; known: {', '.join(CATALOG)}") from None


def entries() -> Iterator[CatalogEntry]:
    return iter(_ENTRIES)


# ---------------------------------------------------------------------------
# self-test


@dataclass
class SelftestLine:
    entry: str
    check: str
    ok: bool
    detail: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"entry": self.entry, "check": self.check, "ok": self.ok, "detail": self.detail}


def _check_entry(entry: CatalogEntry, max_steps: int) -> list[SelftestLine]:
    lines: list[SelftestLine] = []

    def add(check, ok, detail="", t0=None):
        lines.append(SelftestLine(entry.id, check, bool(ok), detail,
                                  0.0 if t0 is None else time.perf_counter() - t0))

    if not entry.runnable:
        add("stub", True, "not runnable: " + entry.note)
        return lines
    t0 = time.perf_counter()
    M = entry.system()
    report = classify(M, max_steps)
    side = f" side {report.side}" if report.side else ""
    if entry.expected_verdict is not None:
        ok = report.verdict == entry.expected_verdict and (
            entry.expected_side is None or report.side == entry.expected_side
        )
        add("verdict", ok, f"{report.verdict}{side}, ranks {report.terminal_ranks}", t0)
    P = prolong(M)
    for s, hs in sorted(entry.first_order_invariants.items()):
        for h in hs:
            t0 = time.perf_counter()
            add(f"invariant order 1 side {s}", verify_invariant(M, s, h), h, t0)
    for s, hs in sorted(entry.invariants.items()):
        for h in hs:
            t0 = time.perf_counter()
            add(f"invariant order 2 side {s}", verify_invariant(P, s, h), h, t0)
    for tr in entry.transformations:
        t0 = time.perf_counter()
        if not tr.runnable:
            add(f"{tr.name}", True, "implicit form, not runnable")
            continue
        obj = tr.build(entry)
        if tr.kind == "auto":
            res = compatibility_pde(obj)
            add(f"{tr.name} compatibility", res.v_independent, f"u_xy = {to_text(res.G)}", t0)
            continue
        wants = {} if tr.F else {s: [h for h in hs if h not in ("x", "y")]
                                 for s, hs in entry.invariants.items()}
        rep = verify_wave_bt(obj, wants)
        add(f"{tr.name} residuals", rep.passed == tr.expect_pass,
            "pass" if rep.passed else "fail", t0)
        add(f"{tr.name} congruence agrees", rep.congruence == rep.passed,
            f"congruence {'pass' if rep.congruence else 'fail'}")
        if rep.passed:
            if tr.expect_normal is not None:
                add(f"{tr.name} normal", rep.normal == tr.expect_normal, str(rep.normal))
            if tr.expect_holonomic is not None:
                add(f"{tr.name} holonomic", rep.holonomy.holonomic == tr.expect_holonomic,
                    str(rep.holonomy.holonomic))
            for trn in rep.transports:
                add(f"{tr.name} transports side {trn.side}", trn.ok,
                    f"{to_text(trn.invariant)} -> "
                    + (to_text(trn.transported) if trn.ok else f"d/d{trn.failing_variable} != 0"))
    return lines


def selftest(ids_: list[str] | None = None, max_steps: int = DEFAULT_MAX_STEPS) -> list[SelftestLine]:
    """Run every stored expectation; results are in catalog order."""
    chosen = [get(i) for i in ids_] if ids_ else list(_ENTRIES)
    out: list[SelftestLine] = []
    for entry in chosen:
        out.extend(_check_entry(entry, max_steps))
    return out


def sg_constant_matches(G) -> bool:
    """Is G (an Expression or text in u) equal to the recorded multiple of sin(u)?"""
    if isinstance(G, str):
        G = parse_expression(G, ("u",))
    c = sympy.Rational(SG_COMPATIBILITY_CONSTANT)
    return is_zero(G - c * sympy.sin(sympy.Symbol("u")))
