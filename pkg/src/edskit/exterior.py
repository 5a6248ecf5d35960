"""Differential forms on a coordinate chart.

A form of degree k stores one coefficient per strictly increasing k-tuple of
coordinate indices; zero coefficients are never stored.  Congruences modulo
an ideal of 1-forms are computed by completing the generators to a coframe
with coordinate differentials (chart order, skipping dependents) and
discarding every monomial that contains a generator.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import sympy

from . import _linalg
from .symcore import (
    Expression,
    FunctionSymbol,
    ParseError,
    is_zero,
    normal_form,
    parse_expression,
    to_text,
    _Parser as _ScalarParser,
)

__all__ = [
    "Chart",
    "DifferentialForm",
    "ChartMismatchError",
    "DependentGeneratorsError",
    "Decomposition",
    "wedge",
    "ext_d",
    "pullback",
    "reduce_mod",
    "is_decomposable",
    "rank_of",
    "in_ideal",
    "parse_form",
]


class ChartMismatchError(ValueError):
    pass


class DependentGeneratorsError(ValueError):
    """Ideal generators are not pointwise linearly independent."""


class Chart:
    """Ordered coordinates plus declared constants and function symbols."""

    def __init__(
        self,
        coordinates: Sequence[str],
        constants: Sequence[str] = (),
        functions: Sequence[FunctionSymbol] = (),
    ):
        coordinates = tuple(coordinates)
        if len(set(coordinates)) != len(coordinates):
            raise ValueError(f"duplicate coordinate names in {coordinates}")
        clash = set(coordinates) & set(constants)
        if clash:
            raise ValueError(f"names declared both coordinate and constant: {sorted(clash)}")
        self.coordinates = coordinates
        self.constants = tuple(constants)
        self.functions = tuple(functions)
        self.symbols = tuple(sympy.Symbol(c) for c in coordinates)
        self._index = {c: i for i, c in enumerate(coordinates)}

    def __repr__(self) -> str:
        return f"Chart({', '.join(self.coordinates)})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Chart)
            and self.coordinates == other.coordinates
            and self.constants == other.constants
        )

    def __hash__(self) -> int:
        return hash((self.coordinates, self.constants))

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    def index(self, name: str) -> int:
        return self._index[name]

    def symbol(self, name: str) -> sympy.Symbol:
        return self.symbols[self._index[name]]

    def extend(self, coordinates: Sequence[str]) -> Chart:
        return Chart(self.coordinates + tuple(coordinates), self.constants, self.functions)

    def parse(self, text: str) -> Expression:
        return parse_expression(text, self.coordinates, self.constants, self.functions)

    def scalar(self, e: Expression | str) -> DifferentialForm:
        e = self.parse(e) if isinstance(e, str) else e
        return DifferentialForm(self, 0, {(): e})

    def d(self, e: Expression | str) -> DifferentialForm:
        """Differential of a coordinate name or scalar expression."""
        if isinstance(e, str) and e in self._index:
            return DifferentialForm(self, 1, {(self._index[e],): sympy.S.One})
        return ext_d(self.scalar(e))

    def one_form(self, coefficients: Mapping[str, Expression | str]) -> DifferentialForm:
        terms = {}
        for name, c in coefficients.items():
            terms[(self._index[name],)] = self.parse(c) if isinstance(c, str) else c
        return DifferentialForm(self, 1, terms)

    def check_expression(self, e: Expression) -> None:
        allowed = set(self.symbols) | {sympy.Symbol(c) for c in self.constants}
        stray = sympy.sympify(e).free_symbols - allowed
        if stray:
            raise ChartMismatchError(
                f"{', '.join(sorted(map(str, stray)))} not on {self!r}"
            )


def _merge_sign(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, tuple[int, ...]] | None:
    """Sign and sorted index tuple of dx_a ^ dx_b, or None if they overlap."""
    if set(a) & set(b):
        return None
    inversions = sum(1 for i in a for j in b if i > j)
    return (-1 if inversions % 2 else 1), tuple(sorted(a + b))


class DifferentialForm:
    """An immutable degree-k form; coefficients live in ``terms``."""

    __slots__ = ("chart", "degree", "_terms")

    def __init__(self, chart: Chart, degree: int, terms: Mapping[tuple[int, ...], Expression] = ()):
        self.chart = chart
        self.degree = degree
        clean: dict[tuple[int, ...], Expression] = {}
        for idx, c in dict(terms).items():
            idx = tuple(idx)
            if len(idx) != degree or list(idx) != sorted(set(idx)):
                raise ValueError(f"bad multi-index {idx} for a {degree}-form")
            c = normal_form(c)
            if not is_zero(c):
                clean[idx] = c
        self._terms = dict(sorted(clean.items()))

    @property
    def terms(self) -> dict[tuple[int, ...], Expression]:
        return dict(self._terms)

    def coefficient(self, *names: str) -> Expression:
        """Coefficient on d(names[0]) ^ d(names[1]) ^ ... (sign-adjusted)."""
        idx = [self.chart.index(n) for n in names]
        if len(set(idx)) != len(idx):
            return sympy.S.Zero
        perm_sign = 1
        for i, j in itertools.combinations(range(len(idx)), 2):
            if idx[i] > idx[j]:
                perm_sign = -perm_sign
        return perm_sign * self._terms.get(tuple(sorted(idx)), sympy.S.Zero)

    def vector(self) -> list[Expression]:
        """Coefficients of a 1-form in chart order."""
        if self.degree != 1:
            raise ValueError("vector() is defined for 1-forms")
        return [self._terms.get((i,), sympy.S.Zero) for i in range(self.chart.dim)]

    def is_zero(self) -> bool:
        return not self._terms

    def _check(self, other: DifferentialForm) -> None:
        if other.chart != self.chart:
            raise ChartMismatchError(f"{self.chart!r} vs {other.chart!r}")

    def __add__(self, other: DifferentialForm) -> DifferentialForm:
        self._check(other)
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        terms = dict(self._terms)
        for k, v in other._terms.items():
            terms[k] = terms.get(k, 0) + v
        return DifferentialForm(self.chart, self.degree, terms)

    def __neg__(self) -> DifferentialForm:
        return DifferentialForm(self.chart, self.degree, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other: DifferentialForm) -> DifferentialForm:
        return self + (-other)

    def __mul__(self, scalar) -> DifferentialForm:
        if isinstance(scalar, DifferentialForm):
            return wedge(self, scalar)
        s = sympy.sympify(scalar)
        return DifferentialForm(self.chart, self.degree, {k: s * v for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other: DifferentialForm) -> DifferentialForm:
        return wedge(self, other)

    def __repr__(self) -> str:
        return f"<{self.degree}-form {self}>"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        out = ""
        for idx, c in self._terms.items():
            basis = " ^ ".join("d" + self.chart.coordinates[i] for i in idx)
            negative = c.could_extract_minus_sign()
            if negative:
                c = -c
            if not basis:
                body = to_text(c)
            elif c == 1:
                body = basis
            elif c.is_Add:
                body = f"({to_text(c)})*{basis}"
            else:
                body = f"{to_text(c)}*{basis}"
            if out:
                out += " - " if negative else " + "
            elif negative:
                out = "-"
            out += body
        return out

    def subs(self, bindings: Mapping[str, Expression]) -> DifferentialForm:
        table = {sympy.Symbol(k): sympy.sympify(v) for k, v in bindings.items()}
        return DifferentialForm(
            self.chart, self.degree, {k: v.xreplace(table) for k, v in self._terms.items()}
        )


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Exterior product, bilinear and graded-anticommutative."""
    if a.chart != b.chart:
        raise ChartMismatchError(f"{a.chart!r} vs {b.chart!r}")
    terms: dict[tuple[int, ...], Expression] = {}
    for ia, ca in a._terms.items():
        for ib, cb in b._terms.items():
            merged = _merge_sign(ia, ib)
            if merged is None:
                continue
            sign, idx = merged
            terms[idx] = terms.get(idx, 0) + sign * ca * cb
    return DifferentialForm(a.chart, a.degree + b.degree, terms)


def ext_d(a: DifferentialForm) -> DifferentialForm:
    """Exterior derivative (differentiates coefficients in coordinates only)."""
    terms: dict[tuple[int, ...], Expression] = {}
    for idx, c in a._terms.items():
        for j, sym in enumerate(a.chart.symbols):
            if j in idx:
                continue
            dc = sympy.diff(c, sym)
            if dc == 0:
                continue
            sign, merged = _merge_sign((j,), idx)
            terms[merged] = terms.get(merged, 0) + sign * dc
    return DifferentialForm(a.chart, a.degree + 1, terms)


def pullback(
    a: DifferentialForm, target: Chart, mapping: Mapping[str, Expression | str]
) -> DifferentialForm:
    """Pull ``a`` back along a map given by its coordinate functions on ``target``.

    Coordinates of ``a.chart`` missing from ``mapping`` map to the coordinate of
    the same name on ``target``.
    """
    images: dict[str, Expression] = {}
    for name in a.chart.coordinates:
        value = mapping.get(name, name)
        images[name] = target.parse(value) if isinstance(value, str) else sympy.sympify(value)
    table = {sympy.Symbol(k): v for k, v in images.items()}
    differentials = [target.d(images[n]) for n in a.chart.coordinates]
    result = DifferentialForm(target, a.degree)
    for idx, c in a._terms.items():
        piece = target.scalar(c.xreplace(table))
        for i in idx:
            piece = wedge(piece, differentials[i])
        result = result + piece
    return result


class _Reducer:
    """Rewrites forms modulo the algebraic ideal of independent 1-forms."""

    def __init__(self, gens: Sequence[DifferentialForm], chart: Chart):
        self.chart = chart
        n = chart.dim
        rows = [g.vector()[::-1] for g in gens]
        red, pivots = _linalg.rref(rows) if rows else ([], [])
        if len(pivots) < len(gens):
            raise DependentGeneratorsError(
                f"{len(gens)} generators span only rank {len(pivots)}"
            )
        solved = {n - 1 - pc: red[r] for r, pc in enumerate(pivots)}
        self.eliminated = sorted(solved)
        self.kept = [j for j in range(n) if j not in solved]
        self.images: dict[int, DifferentialForm] = {}
        for j in range(n):
            if j in solved:
                row = solved[j][::-1]
                self.images[j] = DifferentialForm(
                    chart, 1, {(c,): -row[c] for c in self.kept}
                )
            else:
                self.images[j] = DifferentialForm(chart, 1, {(j,): sympy.S.One})

    def reduce(self, a: DifferentialForm) -> DifferentialForm:
        if not self.eliminated:
            return a
        result = DifferentialForm(self.chart, a.degree)
        for idx, c in a._terms.items():
            if not any(i in self.eliminated for i in idx):
                result = result + DifferentialForm(self.chart, a.degree, {idx: c})
                continue
            piece = self.chart.scalar(c)
            for i in idx:
                piece = wedge(piece, self.images[i])
                if piece.is_zero():
                    break
            else:
                result = result + piece
        return result


def _check_gens(a_chart: Chart, gens: Sequence[DifferentialForm]) -> None:
    for g in gens:
        if g.chart != a_chart:
            raise ChartMismatchError(f"{g.chart!r} vs {a_chart!r}")
        if g.degree != 1:
            raise ValueError("ideal generators must be 1-forms")


def reduce_mod(a: DifferentialForm, ideal_gens: Sequence[DifferentialForm]) -> DifferentialForm:
    """Canonical representative of ``a`` modulo the algebraic ideal of ``ideal_gens``.

    The result only involves differentials of the completing coordinates.
    """
    _check_gens(a.chart, ideal_gens)
    if not ideal_gens:
        return a
    return _Reducer(list(ideal_gens), a.chart).reduce(a)


def in_ideal(a: DifferentialForm, ideal_gens: Sequence[DifferentialForm]) -> bool:
    """Membership test independent of the reducer: a ^ g_1 ^ ... ^ g_m == 0."""
    _check_gens(a.chart, ideal_gens)
    prod = a
    for g in ideal_gens:
        prod = wedge(prod, g)
        if prod.is_zero():
            return True
    return prod.is_zero()


@dataclass(frozen=True)
class Decomposition:
    """Result of :func:`is_decomposable`; truthy iff factors were found."""

    factors: tuple[DifferentialForm, DifferentialForm] | None
    degenerate: bool = False

    def __bool__(self) -> bool:
        return self.factors is not None


def is_decomposable(w: DifferentialForm) -> Decomposition:
    """Factor a 2-form as sigma ^ tau when w ^ w vanishes.

    With (i, j) the first index pair carrying a nonzero coefficient c, the
    factors are contractions of w with the i-th and j-th coordinate vector
    fields; the product is re-checked against w before returning.
    """
    if w.degree != 2:
        raise ValueError("is_decomposable expects a 2-form")
    if w.is_zero():
        return Decomposition(None, degenerate=True)
    if not wedge(w, w).is_zero():
        return Decomposition(None)
    (i, j), c = next(iter(w._terms.items()))
    names = w.chart.coordinates

    def contract(k: int) -> DifferentialForm:
        return DifferentialForm(
            w.chart, 1, {(m,): w.coefficient(names[k], names[m]) for m in range(w.chart.dim)}
        )

    alpha, beta = contract(i), contract(j)
    # for decomposable w: w(d_i, .) ^ w(d_j, .) = c * w
    sigma, tau = alpha * (1 / c), beta
    if not (wedge(sigma, tau) - w).is_zero():
        raise ArithmeticError(f"factor certificate failed for {w}")
    return Decomposition((sigma, tau))


def rank_of(forms: Sequence[DifferentialForm]) -> int:
    """Generic pointwise rank of a list of 1-forms."""
    forms = list(forms)
    if not forms:
        return 0
    _check_gens(forms[0].chart, forms)
    return _linalg.rank([f.vector() for f in forms])


# ---------------------------------------------------------------------------
# form text syntax: "du - p*dx - q*dy", "theta ^ d y", "d(x*y)"


class _FormParser(_ScalarParser):
    """The scalar grammar with form-valued atoms and ``^`` doubling as wedge."""

    def __init__(self, text: str, chart: Chart, named: Mapping[str, DifferentialForm]):
        super().__init__(text, chart.coordinates, chart.constants, chart.functions)
        self.chart = chart
        self.named = dict(named)

    def expr(self):
        v = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take()
            rhs = self.term()
            if isinstance(v, DifferentialForm) != isinstance(rhs, DifferentialForm):
                raise ParseError("cannot add a scalar and a form", op.offset)
            v = v + rhs if op.text == "+" else v - rhs
        return v

    def term(self):
        v = self.factor()
        while self.tok.text in ("*", "/", "^"):
            op = self.take()
            rhs = self.factor()
            if op.text == "/":
                if isinstance(rhs, DifferentialForm):
                    raise ParseError("cannot divide by a form", op.offset)
                v = v * (1 / rhs)
            elif isinstance(v, DifferentialForm) and isinstance(rhs, DifferentialForm):
                v = wedge(v, rhs)
            elif isinstance(rhs, DifferentialForm):
                v = rhs * v
            else:
                v = v * rhs
        return v

    def factor(self):
        if self.tok.text in ("+", "-"):
            sign = self.take().text
            f = self.factor()
            return -f if sign == "-" else f
        base = self.base()
        if self.tok.text == "^" and not isinstance(base, DifferentialForm):
            mark = self.i
            self.take()
            try:
                return base ** self.exponent()
            except ParseError:
                self.i = mark  # not a power: wedge handled by term()
        return base

    def base(self):
        tok = self.tok
        if tok.kind == "id" and tok.text in self.named:
            self.take()
            return self.named[tok.text]
        if tok.kind == "id" and tok.text == "d" and "d" not in self.names:
            self.take()
            if self.tok.kind == "id" and self.tok.text in self.chart.coordinates \
                    and self.tokens[self.i + 1].text != "(":
                return self.chart.d(self.take().text)
            self.take("(")
            inner = self.expr()
            self.take(")")
            return ext_d(_as_form(inner, self.chart))
        if tok.kind == "id" and tok.text not in self.names and tok.text.startswith("d") \
                and tok.text[1:] in self.chart.coordinates:
            self.take()
            return self.chart.d(tok.text[1:])
        if tok.text == "(":
            self.take()
            v = self.expr()
            self.take(")")
            return v
        return super().base()


def _as_form(v, chart: Chart) -> DifferentialForm:
    return v if isinstance(v, DifferentialForm) else chart.scalar(v)


def parse_form(
    text: str, chart: Chart, named: Mapping[str, DifferentialForm] | None = None
) -> DifferentialForm:
    """Parse a differential form such as ``du - p*dx - q*dy`` or ``theta ^ d y``.

    ``dX`` (or ``d X``) is the differential of coordinate ``X``; ``d(expr)`` is
    the exterior derivative; ``^`` between forms is the wedge product.
    """
    return _as_form(_FormParser(text, chart, named or {}).parse(), chart)
