"""Propagating solutions through a solved-form Backlund transformation.

Given Z = phi(x) + psi(y) on the wave side, p = f and q = g become ODEs along
grid lines: u_x = f along the bottom edge, then u_y = g up every column.  The
transposed order (left edge, then rows) is computed as a diagnostic; the two
agree only when the transformation is compatible.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy
from scipy.interpolate import make_interp_spline
from scipy.optimize import minimize

from .backlund import WaveBT
from .exterior import Chart
from .mongeampere import BASE_COORDINATES
from .symcore import Expression

__all__ = [
    "Grid",
    "GridField",
    "SeedSolution",
    "PropagationResult",
    "PropagationError",
    "propagate",
    "reverse_propagate",
    "pde_residual",
    "mixed_residual",
    "fit_constants",
    "start_grid",
    "write_csv",
    "lambdify",
]

SPLINE_DEGREE = 7
DEFAULT_SUBSTEPS = 4

_x, _y = sympy.symbols("x y")


class PropagationError(ArithmeticError):
    """Integration produced a non-finite value; ``node`` is the offending (x, y)."""

    def __init__(self, message: str, node: tuple[float, float]):
        super().__init__(f"{message} near (x, y) = ({node[0]:.6g}, {node[1]:.6g})")
        self.node = node


@dataclass(frozen=True)
class Grid:
    """Uniform nodes on [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("a grid needs at least 3 nodes per direction")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("grid spacing must be positive")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of shape (ny, nx)."""
        return np.meshgrid(self.xs, self.ys)

    def refine(self, factor: int = 2) -> Grid:
        return Grid(
            self.x0, self.x1, self.y0, self.y1,
            (self.nx - 1) * factor + 1, (self.ny - 1) * factor + 1,
        )


@dataclass
class GridField:
    """Nodal values; ``values[j, i]`` sits at (xs[i], ys[j])."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(f"values shape {self.values.shape} does not match the grid")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> GridField:
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape).copy())

    def row_spline(self):
        """Splines in x for every row at once; evaluating gives shape (ny,)."""
        return make_interp_spline(self.grid.xs, self.values, k=SPLINE_DEGREE, axis=1)

    def column_spline(self):
        """Splines in y for every column at once; evaluating gives shape (nx,)."""
        return make_interp_spline(self.grid.ys, self.values, k=SPLINE_DEGREE, axis=0)


def lambdify(
    expr: Expression,
    args: Sequence[str],
    functions: Mapping[str, Callable] | None = None,
) -> Callable:
    """Vectorised numpy callable; ``functions`` supplies numeric FunctionSymbols."""
    modules = [dict(functions or {}), "numpy"]
    fn = sympy.lambdify(sympy.symbols(list(args)), expr, modules=modules)

    def wrapped(*vals):
        out = fn(*vals)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), np.broadcast(*vals).shape)

    return wrapped


class SeedSolution:
    """A wave-equation solution Z = phi(x) + psi(y)."""

    def __init__(self, phi: Expression | str = "0", psi: Expression | str = "0",
                 constants: Mapping[str, float] | None = None):
        consts = dict(constants or {})
        phi = Chart(("x",), tuple(consts)).parse(phi) if isinstance(phi, str) else sympy.sympify(phi)
        psi = Chart(("y",), tuple(consts)).parse(psi) if isinstance(psi, str) else sympy.sympify(psi)
        table = {sympy.Symbol(k): sympy.Float(v, 17) for k, v in consts.items()}
        self.phi, self.psi = phi.xreplace(table), psi.xreplace(table)
        self._phi = lambdify(self.phi, ["x"])
        self._dphi = lambdify(sympy.diff(self.phi, _x), ["x"])
        self._psi = lambdify(self.psi, ["y"])
        self._dpsi = lambdify(sympy.diff(self.psi, _y), ["y"])

    @classmethod
    def from_grid(cls, z: GridField) -> SeedSolution:
        """Split a gridded wave solution along its bottom and left edges."""
        seed = cls.__new__(cls)
        g = z.grid
        phi_vals = z.values[0, :] - z.values[0, 0]
        psi_vals = z.values[:, 0]
        sx = make_interp_spline(g.xs, phi_vals, k=SPLINE_DEGREE)
        sy = make_interp_spline(g.ys, psi_vals, k=SPLINE_DEGREE)
        dsx, dsy = sx.derivative(), sy.derivative()
        seed.phi = seed.psi = None
        seed._phi = lambda x: sx(x)
        seed._dphi = lambda x: dsx(x)
        seed._psi = lambda y: sy(y)
        seed._dpsi = lambda y: dsy(y)
        return seed

    def Z(self, x, y):
        return self._phi(x) + self._psi(y)

    def P(self, x, y):
        return self._dphi(x) + 0.0 * np.asarray(y)

    def Q(self, x, y):
        return self._dpsi(y) + 0.0 * np.asarray(x)

    def field(self, grid: Grid) -> GridField:
        return GridField.from_function(grid, self.Z)


@dataclass
class PropagationResult:
    u: GridField
    path_consistency: float
    pde_residual: float
    transposed: GridField
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "path_consistency": self.path_consistency,
            "pde_residual": self.pde_residual,
            **self.meta,
        }


# ---------------------------------------------------------------------------
# integration core


def _rk4_line(rhs, nodes: np.ndarray, start: np.ndarray, substeps: int, where) -> np.ndarray:
    """Classical RK4 through ``nodes`` with ``substeps`` equal steps per interval.

    ``rhs(s, state)`` returns the derivative; ``where(k)`` names the node for
    error messages.  Returns an array of shape (len(nodes),) + start.shape.
    """
    out = np.empty((len(nodes),) + start.shape)
    out[0] = start
    state = start.astype(np.float64)
    with np.errstate(all="ignore"):
        for k in range(len(nodes) - 1):
            h = (nodes[k + 1] - nodes[k]) / substeps
            s = nodes[k]
            for _ in range(substeps):
                k1 = rhs(s, state)
                k2 = rhs(s + h / 2, state + h / 2 * k1)
                k3 = rhs(s + h / 2, state + h / 2 * k2)
                k4 = rhs(s + h, state + h * k3)
                state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                s = s + h
            if not np.all(np.isfinite(state)):
                bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(state)))[0])
                raise PropagationError("non-finite value (blow-up or domain exit)", where(k + 1, bad))
            out[k + 1] = state
    return out


def _sweeps(rhs_x, rhs_y, grid: Grid, start: float, substeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical (bottom edge, columns) and transposed (left edge, rows) fields.

    ``rhs_x(x, rows, u)`` is du/dx on the given row indices, ``rhs_y(y, cols, u)``
    is du/dy on the given column indices.
    """
    xs, ys = grid.xs, grid.ys
    all_cols = np.arange(grid.nx)
    all_rows = np.arange(grid.ny)
    row0, col0 = np.array([0]), np.array([0])

    edge = _rk4_line(lambda s, u: rhs_x(s, row0, u), xs, np.array([start]), substeps,
                     lambda k, _: (xs[k], ys[0]))[:, 0]
    canonical = _rk4_line(lambda s, u: rhs_y(s, all_cols, u), ys, edge, substeps,
                          lambda k, i: (xs[i], ys[k]))

    edge_t = _rk4_line(lambda s, u: rhs_y(s, col0, u), ys, np.array([start]), substeps,
                       lambda k, _: (xs[0], ys[k]))[:, 0]
    transposed = _rk4_line(lambda s, u: rhs_x(s, all_rows, u), xs, edge_t, substeps,
                           lambda k, j: (xs[k], ys[j])).T
    return canonical, transposed


def _bt_callables(bt: WaveBT, functions):
    f = lambdify(bt.f, ["x", "y", "u", "Z", "P"], functions)
    g = lambdify(bt.g, ["x", "y", "u", "Z", "Q"], functions)
    F = lambdify(bt.F, list(BASE_COORDINATES), functions)
    return f, g, F


def _bind_constants(bt: WaveBT, constants: Mapping[str, float] | None) -> WaveBT:
    if not constants:
        return bt
    table = {sympy.Symbol(k): sympy.Float(v, 17) for k, v in constants.items()}
    return WaveBT(bt.F.xreplace(table), bt.f.xreplace(table), bt.g.xreplace(table),
                  functions=bt.functions, name=bt.name)


def propagate(
    bt: WaveBT,
    seed: SeedSolution,
    u0: float,
    grid: Grid,
    substeps: int = DEFAULT_SUBSTEPS,
    constants: Mapping[str, float] | None = None,
    functions: Mapping[str, Callable] | None = None,
    perturb_g: float = 0.0,
) -> PropagationResult:
    """Integrate p = f, q = g from u(x0, y0) = u0 over the grid.

    ``perturb_g`` adds a constant to g (a deliberately broken transformation,
    used to exercise the consistency diagnostic).
    """
    if not np.isfinite(u0):
        raise ValueError("u0 must be finite")
    bt = _bind_constants(bt, constants)
    f, g, F = _bt_callables(bt, functions)
    xs, ys = grid.xs, grid.ys

    def rhs_x(x, rows, u):
        yv = ys[rows]
        return f(x, yv, u, seed.Z(x, yv), seed.P(x, yv))

    def rhs_y(y, cols, u):
        xv = xs[cols]
        return g(xv, y, u, seed.Z(xv, y), seed.Q(xv, y)) + perturb_g

    canonical, transposed = _sweeps(rhs_x, rhs_y, grid, float(u0), substeps)
    u = GridField(grid, canonical)
    return PropagationResult(
        u,
        float(np.max(np.abs(canonical - transposed))),
        pde_residual(u, F),
        GridField(grid, transposed),
        {"substeps": substeps, "nx": grid.nx, "ny": grid.ny, "method": "rk4"},
    )


def reverse_propagate(
    A: Expression | str,
    B: Expression | str,
    u: GridField,
    z0: float,
    substeps: int = DEFAULT_SUBSTEPS,
    constants: Mapping[str, float] | None = None,
) -> PropagationResult:
    """Integrate z_x = A(x, y, u, p, z), z_y = B(x, y, u, q, z) over u's grid.

    u and its line derivatives p, q between nodes come from degree-7
    interpolating splines along each grid line.  The residual is z_xy.
    """
    consts = dict(constants or {})
    chart_a = Chart(("x", "y", "u", "p", "z"), tuple(consts))
    chart_b = Chart(("x", "y", "u", "q", "z"), tuple(consts))
    A = chart_a.parse(A) if isinstance(A, str) else sympy.sympify(A)
    B = chart_b.parse(B) if isinstance(B, str) else sympy.sympify(B)
    table = {sympy.Symbol(k): sympy.Float(v, 17) for k, v in consts.items()}
    fa = lambdify(A.xreplace(table), ["x", "y", "u", "p", "z"])
    fb = lambdify(B.xreplace(table), ["x", "y", "u", "q", "z"])
    grid = u.grid
    xs, ys = grid.xs, grid.ys
    rows, cols = u.row_spline(), u.column_spline()
    drows, dcols = rows.derivative(), cols.derivative()

    def rhs_x(x, r, z):
        return fa(x, ys[r], rows(x)[r], drows(x)[r], z)

    def rhs_y(y, c, z):
        return fb(xs[c], y, cols(y)[c], dcols(y)[c], z)

    canonical, transposed = _sweeps(rhs_x, rhs_y, grid, float(z0), substeps)
    z = GridField(grid, canonical)
    return PropagationResult(
        z,
        float(np.max(np.abs(canonical - transposed))),
        mixed_residual(z),
        GridField(grid, transposed),
        {"substeps": substeps, "nx": grid.nx, "ny": grid.ny, "method": "rk4", "direction": "reverse"},
    )


# ---------------------------------------------------------------------------
# diagnostics


def _central(field: GridField) -> tuple[np.ndarray, ...]:
    v = field.values
    hx, hy = field.grid.hx, field.grid.hy
    p = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * hx)
    q = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * hy)
    s = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4 * hx * hy)
    return p, q, s


def mixed_residual(field: GridField) -> float:
    """Max |u_xy| over interior nodes, by central differences."""
    return float(np.max(np.abs(_central(field)[2])))


def pde_residual(
    u: GridField,
    F: Expression | str | Callable,
    constants: Mapping[str, float] | None = None,
    functions: Mapping[str, Callable] | None = None,
) -> float:
    """Max over interior nodes of |u_xy - F(x, y, u, p, q)| by central differences."""
    if not callable(F):
        consts = dict(constants or {})
        if isinstance(F, str):
            F = Chart(BASE_COORDINATES, tuple(consts)).parse(F)
        table = {sympy.Symbol(k): sympy.Float(v, 17) for k, v in consts.items()}
        F = lambdify(sympy.sympify(F).xreplace(table), list(BASE_COORDINATES), functions)
    p, q, s = _central(u)
    X, Y = u.grid.mesh()
    inner = (slice(1, -1), slice(1, -1))
    with np.errstate(all="ignore"):
        rhs = F(X[inner], Y[inner], u.values[inner], p, q)
    return float(np.max(np.abs(s - rhs)))


def fit_constants(
    model: Callable[..., np.ndarray],
    target: GridField,
    starts: Sequence[Sequence[float]],
) -> tuple[np.ndarray, float]:
    """Least-squares constants for ``model(X, Y, *c)`` by Nelder-Mead from several starts.

    Returns the best constants and the max nodal error they achieve; points
    where the model is undefined count as infinitely bad.
    """
    X, Y = target.grid.mesh()

    def max_err(c):
        with np.errstate(all="ignore"):
            diff = model(X, Y, *c) - target.values
        return float(np.max(np.abs(diff))) if np.all(np.isfinite(diff)) else np.inf

    def sse(c):
        with np.errstate(all="ignore"):
            diff = model(X, Y, *c) - target.values
        return float(np.sum(diff * diff)) if np.all(np.isfinite(diff)) else 1e300

    best_c, best_err = None, np.inf
    for c0 in starts:
        res = minimize(sse, np.asarray(c0, dtype=float), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-24, "maxfev": 4000})
        err = max_err(res.x)
        if err < best_err:
            best_c, best_err = res.x, err
    return np.asarray(best_c), best_err


def start_grid(ranges: Sequence[Sequence[float]]) -> list[tuple[float, ...]]:
    """Cartesian product of per-constant start values."""
    return list(itertools.product(*ranges))


def write_csv(field: GridField, out=None, name: str = "u") -> str:
    """CSV with header ``x,y,<name>``, rows ordered by y then x, 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", name])
    xs, ys = field.grid.xs, field.grid.ys
    for j, yv in enumerate(ys):
        for i, xv in enumerate(xs):
            w.writerow([format(xv, ".17g"), format(yv, ".17g"), format(field.values[j, i], ".17g")])
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text
