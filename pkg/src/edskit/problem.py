"""Problem files (TOML) and catalog lookups, resolved into one object.

Schema (every table except ``[equation]`` is optional)::

    [equation]
    F = "exp(u)"
    constants = ["K"]                 # symbolic constants
    name = "liouville"

    [[functions]]                     # unary function symbols
    name = "alpha"
    rule = "K - s/alpha(s)"           # derivative in the formal argument s
    constants = ["K"]

    [invariants]                      # second-order invariants by side
    side1 = ["r - p^2/2"]
    side2 = ["t - q^2/2"]

    [first_order_invariants]
    side1 = ["x", "p"]

    [transformation]                  # or [[transformations]] for several
    kind = "wave"                     # "wave" (f, g), "auto" (A, B) or "implicit"
    f = "P + 2*exp((u + Z)/2)"
    g = "-Q + exp((u - Z)/2)"
    domain = []                       # expressions required positive
    constants = []

    [propagate]
    phi = "0"                         # seed Z = phi(x) + psi(y)
    psi = "0"
    u0 = 0.0
    grid = { x0 = 0.0, x1 = 0.6, y0 = 0.0, y1 = 0.6, nx = 61, ny = 61 }
    substeps = 4
    constants = { lambda = 1.0 }      # numeric values for symbolic constants
    perturb_g = 0.0
    exact = "-2*ln(1 - x - y/2)"      # optional closed form for an error column
    output = "u.csv"

``catalog:ID`` stands for the built-in entry ``ID`` wherever a file is expected.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import catalog
from .catalog import CatalogEntry, FunctionSpec, Transformation
from .exterior import Chart
from .mongeampere import BASE_COORDINATES, PROLONGED_COORDINATES
from .symcore import SymcoreError

__all__ = ["Problem", "PropagationSpec", "ProblemError", "load", "from_catalog", "from_text"]

CATALOG_PREFIX = "catalog:"


class ProblemError(ValueError):
    """The problem file is malformed or references undeclared names."""


@dataclass(frozen=True)
class PropagationSpec:
    phi: str = "0"
    psi: str = "0"
    u0: float = 0.0
    grid: dict = field(default_factory=lambda: {"x0": 0.0, "x1": 1.0, "y0": 0.0, "y1": 1.0,
                                                "nx": 21, "ny": 21})
    substeps: int = 4
    constants: dict = field(default_factory=dict)
    perturb_g: float = 0.0
    exact: str | None = None
    output: str | None = None
    transformation: str | None = None


@dataclass(frozen=True)
class Problem:
    entry: CatalogEntry
    source: str
    propagation: PropagationSpec | None = None

    @property
    def name(self) -> str:
        return self.entry.id

    def transformation(self, name: str | None = None) -> Transformation:
        trs = self.entry.transformations
        if not trs:
            raise ProblemError(f"{self.source}: no transformation given")
        if name is None:
            return trs[0]
        for tr in trs:
            if tr.name == name:
                return tr
        raise ProblemError(f"{self.source}: no transformation named {name!r} "
                           f"(have {', '.join(t.name for t in trs)})")


def _str_list(value, where: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str) or not all(isinstance(v, str) for v in value):
        raise ProblemError(f"{where} must be a list of strings")
    return tuple(value)


def _sides(table, where: str) -> dict[int, list[str]]:
    out = {}
    for key, value in (table or {}).items():
        if key not in ("side1", "side2"):
            raise ProblemError(f"{where}: unknown key {key!r} (use side1, side2)")
        out[int(key[-1])] = list(_str_list(value, f"{where}.{key}"))
    return out


def _transformation(t: dict, i: int) -> Transformation:
    kind = t.get("kind", "wave")
    if kind not in ("wave", "auto", "implicit"):
        raise ProblemError(f"transformation {i}: kind must be wave, auto or implicit")
    first, second = ("f", "g") if kind == "wave" else ("A", "B")
    if kind != "implicit" and (first not in t or second not in t):
        raise ProblemError(f"transformation {i}: {kind} needs {first} and {second}")
    known = {"kind", "name", first, second, "domain", "constants", "relation", "F", "provenance"}
    extra = set(t) - known
    if extra:
        raise ProblemError(f"transformation {i}: unknown keys {sorted(extra)}")
    return Transformation(
        name=t.get("name", f"T{i + 1}"),
        kind=kind,
        provenance=t.get("provenance", "problem file"),
        f=t.get(first, ""),
        g=t.get(second, ""),
        F=t.get("F"),
        constants=_str_list(t.get("constants"), "transformation.constants"),
        domain=_str_list(t.get("domain"), "transformation.domain"),
        relation=t.get("relation", ""),
    )


def from_text(text: str, source: str = "<string>") -> Problem:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemError(f"{source}: {exc}") from None
    eq = data.get("equation")
    if not isinstance(eq, dict) or "F" not in eq:
        raise ProblemError(f"{source}: missing [equation] table with F")
    functions = tuple(
        FunctionSpec(fn["name"], fn.get("rule"), _str_list(fn.get("constants"), "functions.constants"))
        for fn in data.get("functions", [])
    )
    raw_trs = data.get("transformations", [])
    if "transformation" in data:
        raw_trs = [data["transformation"], *raw_trs]
    entry = CatalogEntry(
        id=eq.get("name", Path(source).stem),
        title=eq.get("title", ""),
        F=eq["F"],
        provenance=source,
        constants=_str_list(eq.get("constants"), "equation.constants"),
        functions=functions,
        invariants=_sides(data.get("invariants"), "invariants"),
        first_order_invariants=_sides(data.get("first_order_invariants"), "first_order_invariants"),
        transformations=tuple(_transformation(t, i) for i, t in enumerate(raw_trs)),
    )
    prop = None
    if "propagate" in data:
        p = dict(data["propagate"])
        try:
            prop = PropagationSpec(**p)
        except TypeError as exc:
            raise ProblemError(f"{source}: [propagate]: {exc}") from None
    problem = Problem(entry, source, prop)
    validate(problem)
    return problem


def validate(problem: Problem) -> None:
    """Parse every expression once so errors surface with their location."""
    e = problem.entry
    funcs = [fs.build() for fs in e.functions]

    def check(coords, text, where, consts=e.constants):
        try:
            Chart(coords, consts, funcs).parse(text)
        except SymcoreError as exc:
            raise ProblemError(f"{problem.source}: {where}: {exc}") from None

    check(BASE_COORDINATES, e.F, "equation.F")
    for side, hs in e.first_order_invariants.items():
        for h in hs:
            check(BASE_COORDINATES, h, f"first_order_invariants.side{side}")
    for side, hs in e.invariants.items():
        for h in hs:
            check(PROLONGED_COORDINATES, h, f"invariants.side{side}")
    for tr in e.transformations:
        consts = tuple(dict.fromkeys(e.constants + tr.constants))
        if tr.kind == "wave":
            check(("x", "y", "u", "Z", "P"), tr.f, f"{tr.name}.f", consts)
            check(("x", "y", "u", "Z", "Q"), tr.g, f"{tr.name}.g", consts)
        elif tr.kind == "auto":
            check(("x", "y", "u", "v", "ux"), tr.f, f"{tr.name}.A", consts)
            check(("x", "y", "u", "v", "uy"), tr.g, f"{tr.name}.B", consts)


def from_catalog(entry_id: str) -> Problem:
    return Problem(catalog.get(entry_id), CATALOG_PREFIX + entry_id)


def load(path: str) -> Problem:
    """A TOML problem file, or ``catalog:ID``."""
    if path.startswith(CATALOG_PREFIX):
        try:
            return from_catalog(path[len(CATALOG_PREFIX):])
        except KeyError as exc:
            raise ProblemError(exc.args[0]) from None
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemError(f"{path}: {exc.strerror}") from None
    return from_text(text, path)
