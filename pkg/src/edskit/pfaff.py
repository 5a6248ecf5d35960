"""Pfaffian systems, derived systems and derived flags."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import sympy

from . import _linalg
from .exterior import Chart, DifferentialForm, _Reducer, ext_d, rank_of
from .symcore import Expression, normal_form

__all__ = [
    "PfaffianSystem",
    "DerivedFlag",
    "FlagBudgetError",
    "derived_system",
    "derived_flag",
    "is_frobenius",
    "is_first_integral",
    "rank_increase",
]

DEFAULT_MAX_STEPS = 8


class FlagBudgetError(RuntimeError):
    """The derived flag did not stabilize within the allowed number of steps."""

    def __init__(self, flag: "DerivedFlag", max_steps: int):
        super().__init__(
            f"derived flag not stable after {max_steps} steps (ranks {flag.ranks})"
        )
        self.flag = flag


class PfaffianSystem:
    """Span of a list of 1-forms; dependent generators are dropped on construction."""

    def __init__(self, chart: Chart, forms: Sequence[DifferentialForm] = ()):
        forms = list(forms)
        for f in forms:
            if f.chart != chart or f.degree != 1:
                raise ValueError("a Pfaffian system is spanned by 1-forms on its chart")
        self.chart = chart
        self.forms: tuple[DifferentialForm, ...] = tuple(_independent_subset(forms))
        self.rank = len(self.forms)
        self._reducer: _Reducer | None = None

    def __repr__(self) -> str:
        return f"PfaffianSystem(rank={self.rank}, [{'; '.join(map(str, self.forms))}])"

    def __len__(self) -> int:
        return self.rank

    def __iter__(self):
        return iter(self.forms)

    @property
    def reducer(self) -> _Reducer:
        if self._reducer is None:
            self._reducer = _Reducer(self.forms, self.chart)
        return self._reducer

    def reduce(self, form: DifferentialForm) -> DifferentialForm:
        return self.reducer.reduce(form) if self.forms else form

    def contains(self, form: DifferentialForm) -> bool:
        """Pointwise span membership of a 1-form (generic rank test)."""
        if form.is_zero():
            return True
        return rank_of(list(self.forms) + [form]) == self.rank

    def text(self) -> list[str]:
        return [str(f) for f in self.forms]


def _independent_subset(forms: list[DifferentialForm]) -> list[DifferentialForm]:
    """Greedy subset: keep each form that raises the rank of those already kept."""
    forms = [f for f in forms if not f.is_zero()]
    if len(forms) <= 1:
        return forms
    kept: list[DifferentialForm] = []
    for f in forms:
        if _linalg.symbolic_rank([g.vector() for g in kept + [f]]) > len(kept):
            kept.append(f)
    numeric = _linalg.numeric_rank([f.vector() for f in forms])
    if numeric != len(kept):
        warnings.warn(
            f"symbolic rank {len(kept)} differs from sampled rank {numeric}",
            _linalg.GenericRankWarning,
            stacklevel=3,
        )
    return kept


def _monomials(forms: Sequence[DifferentialForm]) -> list[tuple[int, ...]]:
    keys = set()
    for f in forms:
        keys.update(f.terms)
    return sorted(keys)


def derived_system(K: PfaffianSystem) -> PfaffianSystem:
    """Forms sum(a_i w_i) in K whose exterior derivative vanishes modulo K.

    Since d(a w) = da ^ w + a dw and da ^ w lies in the ideal, the condition is
    linear in the a_i: solve sum a_i [dw_i] = 0 for the reduced 2-forms [dw_i].
    """
    if K.rank == 0:
        return K
    reduced = [K.reduce(ext_d(f)) for f in K.forms]
    keys = _monomials(reduced)
    if not keys:
        return K
    matrix = [[r.terms.get(k, sympy.S.Zero) for r in reduced] for k in keys]
    basis = _linalg.kernel(matrix, K.rank)
    new_forms = []
    for vec in basis:
        acc = DifferentialForm(K.chart, 1)
        for a, w in zip(vec, K.forms):
            if a != 0:
                acc = acc + w * a
        new_forms.append(_rescale(acc))
    return PfaffianSystem(K.chart, new_forms)


def _rescale(form: DifferentialForm) -> DifferentialForm:
    """Divide by the coefficient of the last coordinate present (span-preserving)."""
    terms = form.terms
    if not terms:
        return form
    lead = terms[max(terms)]
    return form if lead == 1 else form * (1 / lead)


def is_frobenius(K: PfaffianSystem) -> bool:
    return all(K.reduce(ext_d(f)).is_zero() for f in K.forms)


@dataclass
class DerivedFlag:
    """K, K', K'', ... until the rank stops dropping."""

    systems: list[PfaffianSystem] = field(default_factory=list)
    terminal_is_frobenius: bool = False

    @property
    def ranks(self) -> list[int]:
        return [s.rank for s in self.systems]

    @property
    def terminal(self) -> PfaffianSystem:
        return self.systems[-1]


def derived_flag(K: PfaffianSystem, max_steps: int = DEFAULT_MAX_STEPS) -> DerivedFlag:
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    flag = DerivedFlag([K])
    current = K
    for _ in range(max_steps):
        nxt = derived_system(current)
        if nxt.rank == current.rank:
            flag.terminal_is_frobenius = is_frobenius(current)
            return flag
        flag.systems.append(nxt)
        current = nxt
    if is_frobenius(current):
        flag.terminal_is_frobenius = True
        return flag
    raise FlagBudgetError(flag, max_steps)


def is_first_integral(K: PfaffianSystem, h: Expression) -> bool:
    """True iff dh lies in the span of K."""
    dh = K.chart.d(normal_form(sympy.sympify(h)))
    return K.contains(dh)


def rank_increase(base: Sequence[DifferentialForm], extra: Sequence[DifferentialForm]) -> int:
    """How much ``extra`` raises the rank of ``base``; used for independence checks."""
    base, extra = list(base), list(extra)
    return rank_of(base + extra) - rank_of(base)
