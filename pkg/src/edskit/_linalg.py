"""Row reduction over the field of expressions, with generic-rank cross-checks."""
from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
import sympy

from .symcore import (
    DomainError,
    _evaluate,
    current_config,
    is_zero,
    normal_form,
    sample_points,
)


class GenericRankWarning(UserWarning):
    """Symbolic and sampled ranks disagree: a non-generic locus was sampled."""


Matrix = list[list[sympy.Expr]]


def rref(rows: Sequence[Sequence[sympy.Expr]]) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form; pivots are decided by :func:`is_zero`.

    Among admissible pivots in a column the structurally smallest entry is
    used, which keeps intermediate expressions small.
    """
    m = [[sympy.sympify(v) for v in row] for row in rows]
    if not m:
        return m, []
    ncols = len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == len(m):
            break
        candidates = []
        for i in range(r, len(m)):
            if is_zero(m[i][c]):
                m[i][c] = sympy.S.Zero
            else:
                candidates.append(i)
        if not candidates:
            continue
        best = min(candidates, key=lambda i: (sympy.count_ops(m[i][c]), i))
        m[r], m[best] = m[best], m[r]
        pv = m[r][c]
        m[r] = [normal_form(v / pv) if k != c else sympy.S.One for k, v in enumerate(m[r])]
        for i in range(len(m)):
            if i == r:
                continue
            factor = m[i][c]
            if factor == 0:
                continue
            m[i] = [
                sympy.S.Zero if k == c else normal_form(v - factor * m[r][k])
                for k, v in enumerate(m[i])
            ]
        pivots.append(c)
        r += 1
    return m, pivots


def symbolic_rank(rows: Sequence[Sequence[sympy.Expr]]) -> int:
    """Rank by elimination with full pivoting on the structurally smallest entry."""
    m = [[sympy.sympify(v) for v in row] for row in rows]
    rank_ = 0
    while m and m[0]:
        best = None
        for i, row in enumerate(m):
            for j, v in enumerate(row):
                if v == 0:
                    continue
                if is_zero(v):
                    row[j] = sympy.S.Zero
                    continue
                key = (sympy.count_ops(v), i, j)
                if best is None or key < best[0]:
                    best = (key, i, j)
        if best is None:
            break
        _, pi, pj = best
        pivot_row = m.pop(pi)
        pv = pivot_row[pj]
        rest = []
        for row in m:
            factor = row[pj]
            if factor != 0:
                ratio = factor / pv
                row = [normal_form(v - ratio * pivot_row[k]) for k, v in enumerate(row)]
            rest.append([v for k, v in enumerate(row) if k != pj])
        m = rest
        rank_ += 1
    return rank_


def numeric_rank(rows: Sequence[Sequence[sympy.Expr]], count: int | None = None) -> int:
    """Largest rank of the matrix over seeded sample points."""
    entries = [sympy.sympify(v) for row in rows for v in row]
    live = [e for e in entries if not e.is_Number]
    if not rows or not rows[0]:
        return 0
    config = current_config()
    points = sample_points(live, config, count=count or config.samples) if live else [{}]
    best = 0
    for pt in points:
        try:
            a = np.array([[_evaluate(v, pt)[0] for v in row] for row in rows], dtype=float)
        except DomainError:
            continue
        s = np.linalg.svd(a, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            continue
        tol = max(a.shape) * s[0] * 1e-9
        best = max(best, int(np.sum(s > tol)))
    return best


def rank(rows: Sequence[Sequence[sympy.Expr]]) -> int:
    """Generic rank: max of symbolic elimination and sampled numeric rank."""
    if not rows or not rows[0]:
        return 0
    sym = symbolic_rank(rows)
    num = numeric_rank(rows)
    if sym != num:
        warnings.warn(
            f"symbolic rank {sym} differs from sampled rank {num}",
            GenericRankWarning,
            stacklevel=3,
        )
    return max(sym, num)


def kernel(rows: Sequence[Sequence[sympy.Expr]], ncols: int) -> list[list[sympy.Expr]]:
    """Basis of the right null space, one vector per free column."""
    if not rows:
        return [[sympy.S.One if k == j else sympy.S.Zero for k in range(ncols)] for j in range(ncols)]
    red, pivots = rref(rows)
    if len(pivots) != numeric_rank(rows):
        warnings.warn("kernel dimension disagrees with sampled rank", GenericRankWarning, stacklevel=3)
    basis = []
    for j in range(ncols):
        if j in pivots:
            continue
        vec = [sympy.S.Zero] * ncols
        vec[j] = sympy.S.One
        for r, pc in enumerate(pivots):
            vec[pc] = normal_form(-red[r][j])
        basis.append(vec)
    return basis
