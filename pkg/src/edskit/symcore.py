"""Symbolic scalar expressions.

Expressions are plain :mod:`sympy` trees restricted to a small vocabulary:
rational constants, named variables and constant symbols, sums, products,
rational powers, ``exp``/``ln``/``sin``/``cos``/``sinh``/``cosh``/``sqrt`` and
unary :class:`FunctionSymbol` applications.  This module adds what sympy does
not give us directly: a strict text grammar with a printer that round-trips,
a layered zero test that is deterministic across processes, and a float
evaluator with a fixed traversal order and explicit domain errors.
"""
from __future__ import annotations

import contextlib
import contextvars
import functools
import hashlib
import math
import random
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

import sympy

Expression = sympy.Expr

__all__ = [
    "Expression",
    "FunctionSymbol",
    "ZeroTestConfig",
    "SymcoreError",
    "ParseError",
    "UnknownIdentifierError",
    "UnknownVariableError",
    "DomainError",
    "DomainExhaustedError",
    "parse_expression",
    "to_text",
    "normal_form",
    "differentiate",
    "substitute",
    "is_zero",
    "eval_at",
    "sample_points",
    "current_config",
    "zero_test_settings",
    "structural_hash",
]


class SymcoreError(Exception):
    """Base class for expression-engine errors."""


class ParseError(SymcoreError, ValueError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class UnknownVariableError(SymcoreError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown variable {self.name!r}"


class DomainError(SymcoreError, ArithmeticError):
    """Numeric evaluation left the domain; ``subexpression`` is the culprit."""

    def __init__(self, message: str, subexpression: sympy.Basic):
        super().__init__(f"{message}: {subexpression}")
        self.subexpression = subexpression


class DomainExhaustedError(SymcoreError):
    """No admissible sample point was found within the rejection budget."""


# ---------------------------------------------------------------------------
# function symbols


def _function_fdiff(self, argindex=1):
    return type(self)._edskit_symbol.derivative(self.args[0])


class FunctionSymbol:
    """A unary function symbol, optionally defined by an ODE for its derivative.

    ``rule`` expresses the derivative in terms of the formal argument and the
    symbol applied to it, e.g. ``K - s/alpha(s)``.  Without a rule the
    derivative is a fresh abstract symbol named ``name'``.

    >>> alpha = FunctionSymbol("alpha", "K - s/alpha(s)", constants=["K"])
    >>> to_text(differentiate(alpha(sympy.Symbol("p")), "p"))
    '(K*alpha(p) - p)/alpha(p)'
    """

    def __init__(
        self,
        name: str,
        rule: Expression | str | None = None,
        *,
        formal: str = "s",
        constants: Iterable[str] = (),
    ):
        self.name = name
        self.formal = sympy.Symbol(formal)
        self.constants = tuple(constants)
        self.func = type(
            name,
            (sympy.Function,),
            {"nargs": 1, "fdiff": _function_fdiff, "_edskit_symbol": self},
        )
        self._prime: FunctionSymbol | None = None
        if isinstance(rule, str):
            rule = parse_expression(rule, [formal], self.constants, [self])
        if rule is not None:
            rule = sympy.sympify(rule)
            self._check_rule(rule)
        self.rule = rule

    def _check_rule(self, rule: Expression) -> None:
        allowed = {self.formal} | {sympy.Symbol(c) for c in self.constants}
        stray = rule.free_symbols - allowed
        if stray:
            names = ", ".join(sorted(str(s) for s in stray))
            raise ValueError(f"derivative rule for {self.name} references {names}")
        for app in rule.atoms(sympy.Function):
            if _function_symbol_of(app) is None:
                continue
            if type(app) is not self.func or app.args[0] != self.formal:
                raise ValueError(
                    f"derivative rule for {self.name} may only apply {self.name} "
                    f"to its formal argument, found {app}"
                )

    def __call__(self, arg) -> Expression:
        return self.func(sympy.sympify(arg))

    def __repr__(self) -> str:
        rule = "abstract" if self.rule is None else to_text(self.rule)
        return f"FunctionSymbol({self.name!r}, {rule})"

    def prime(self) -> FunctionSymbol:
        """The abstract derivative symbol, created on first use."""
        if self._prime is None:
            self._prime = FunctionSymbol(self.name + "'", formal=str(self.formal))
        return self._prime

    def derivative(self, arg: Expression) -> Expression:
        if self.rule is None:
            return self.prime()(arg)
        return self.rule.xreplace({self.formal: arg})


def _function_symbol_of(node) -> FunctionSymbol | None:
    return getattr(type(node), "_edskit_symbol", None)


# ---------------------------------------------------------------------------
# parsing

_BUILTINS: dict[str, Callable[[Expression], Expression]] = {
    "exp": sympy.exp,
    "ln": sympy.log,
    "log": sympy.log,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "sqrt": sympy.sqrt,
}

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<num>\d+(?:\.\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*'*)|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", byte)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("end", "", byte))
    return tokens


class _Parser:
    def __init__(self, text, chart_vars, constants, symbols):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names: dict[str, sympy.Symbol] = {}
        for n in list(chart_vars) + list(constants):
            self.names[n] = sympy.Symbol(n)
        self.functions = {s.name: s for s in symbols}

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def take(self, text=None) -> _Token:
        tok = self.tok
        if text is not None and tok.text != text:
            want = repr(text)
            got = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ParseError(f"expected {want}, found {got}", tok.offset)
        self.i += 1
        return tok

    def parse(self) -> Expression:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return e

    def expr(self):
        e = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            rhs = self.factor()
            e = e * rhs if op == "*" else e / rhs
        return e

    def factor(self):
        if self.tok.text in ("+", "-"):
            sign = self.take().text
            f = self.factor()
            return -f if sign == "-" else f
        base = self.base()
        if self.tok.text == "^":
            self.take()
            return base ** self.exponent()
        return base

    def exponent(self):
        if self.tok.text == "(":
            self.take()
            r = self.signed_integer()
            if self.tok.text == "/":
                self.take()
                den = self.integer()
                if den == 0:
                    raise ParseError("zero denominator in exponent", self.tok.offset)
                r = sympy.Rational(r, den)
            self.take(")")
            return sympy.Integer(r) if isinstance(r, int) else r
        return sympy.Integer(self.signed_integer())

    def signed_integer(self) -> int:
        sign = 1
        if self.tok.text == "-":
            self.take()
            sign = -1
        return sign * self.integer()

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "num" or "." in tok.text:
            raise ParseError("exponent must be a rational number", tok.offset)
        self.take()
        return int(tok.text)

    def base(self):
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return sympy.Rational(tok.text)
        if tok.text == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if tok.kind == "id":
            self.take()
            if self.tok.text == "(":
                fn = self.lookup_function(tok)
                self.take("(")
                arg = self.expr()
                self.take(")")
                return fn(arg)
            if tok.text in self.names:
                return self.names[tok.text]
            if tok.text in _BUILTINS or self._resolve_symbol(tok.text):
                raise ParseError(f"function {tok.text!r} needs an argument", tok.offset)
            raise UnknownIdentifierError(tok.text, tok.offset)
        got = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ParseError(f"unexpected {got}", tok.offset)

    def _resolve_symbol(self, name: str) -> FunctionSymbol | None:
        stem = name.rstrip("'")
        fs = self.functions.get(stem)
        if fs is None:
            return None
        for _ in range(len(name) - len(stem)):
            fs = fs.prime()
        return fs

    def lookup_function(self, tok: _Token):
        if tok.text in _BUILTINS:
            return _BUILTINS[tok.text]
        fs = self._resolve_symbol(tok.text)
        if fs is None:
            raise UnknownIdentifierError(tok.text, tok.offset)
        return fs


def parse_expression(
    text: str,
    chart_vars: Sequence[str] = (),
    constants: Sequence[str] = (),
    symbols: Sequence[FunctionSymbol] = (),
) -> Expression:
    """Parse ``text`` in the expression grammar.

    Identifiers must be chart variables, declared constants, builtins, or
    declared function symbols (a trailing ``'`` names an abstract derivative).
    Exponents are rational literals: ``x^2``, ``x^-1``, ``x^(1/2)``.
    """
    return sympy.sympify(_Parser(text, chart_vars, constants, symbols).parse())


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4
_PRINT_NAMES = {
    sympy.exp: "exp",
    sympy.log: "ln",
    sympy.sin: "sin",
    sympy.cos: "cos",
    sympy.sinh: "sinh",
    sympy.cosh: "cosh",
}


def to_text(e: Expression) -> str:
    """Render ``e`` in the parser's grammar (parse(to_text(e)) == e)."""
    return _print(sympy.sympify(e))[0]


def _wrap(part: tuple[str, int], prec: int) -> str:
    text, p = part
    return f"({text})" if p < prec else text


def _print_rational_exponent(r: sympy.Rational) -> str:
    if r.q == 1:
        return str(r.p) if r.p >= 0 else f"({r.p})"
    return f"({r.p}/{r.q})"


def _print(e) -> tuple[str, int]:
    if e.is_Integer:
        return (str(e), _PREC_ATOM) if e >= 0 else (str(e), _PREC_ADD)
    if e.is_Rational:
        return f"{e.p}/{e.q}", _PREC_MUL if e > 0 else _PREC_ADD
    if e is sympy.E:
        return "exp(1)", _PREC_ATOM
    if e.is_Symbol:
        return e.name, _PREC_ATOM
    if e.is_Add:
        parts = []
        for k, term in enumerate(e.as_ordered_terms()):
            neg = term.could_extract_minus_sign()
            body = _wrap(_print(-term if neg else term), _PREC_MUL)
            if k == 0:
                parts.append(f"-{body}" if neg else body)
            else:
                parts.append(f" - {body}" if neg else f" + {body}")
        return "".join(parts), _PREC_ADD
    if e.is_Mul:
        return _print_mul(e)
    if e.is_Pow:
        base, ex = e.as_base_exp()
        if not ex.is_Rational:
            raise ValueError(f"non-rational exponent cannot be printed: {e}")
        if ex == sympy.Rational(1, 2):
            return f"sqrt({_print(base)[0]})", _PREC_ATOM
        if ex.is_negative:
            return _print_mul(e)
        return f"{_wrap(_print(base), _PREC_ATOM)}^{_print_rational_exponent(ex)}", _PREC_POW
    if e.func in _PRINT_NAMES:
        return f"{_PRINT_NAMES[e.func]}({_print(e.args[0])[0]})", _PREC_ATOM
    fs = _function_symbol_of(e)
    if fs is not None:
        return f"{fs.name}({_print(e.args[0])[0]})", _PREC_ATOM
    raise ValueError(f"expression outside the grammar: {e}")


def _print_mul(e) -> tuple[str, int]:
    coeff, rest = e.as_coeff_Mul()
    negative = coeff < 0
    coeff = abs(coeff)
    num: list[tuple[str, int]] = []
    den: list[str] = []
    if coeff != 1:
        if coeff.p != 1:
            num.append((str(coeff.p), _PREC_ATOM))
        if coeff.q != 1:
            den.append(str(coeff.q))
    for f in sympy.Mul.make_args(rest):
        if f == 1:
            continue
        base, ex = f.as_base_exp()
        if f.is_Pow and ex.is_Rational and ex.is_negative:
            den.append(_wrap(_print(base ** (-ex)), _PREC_POW))
        else:
            num.append((_wrap(_print(f), _PREC_POW), _PREC_POW))
    if len(num) == 1 and not den and not negative:
        return _print(rest) if coeff == 1 else num[0]
    if not num and not den and negative:
        return "-1", _PREC_ADD
    text = "*".join(t for t, _ in num) if num else "1"
    if den:
        text += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
    if negative:
        return f"-{text}", _PREC_ADD
    return text, _PREC_MUL


# ---------------------------------------------------------------------------
# normalization, calculus


def normal_form(e: Expression) -> Expression:
    """Canonical representative as a quotient of expanded polynomials.

    Transcendental applications are kept as opaque generators; no up-front
    ``expand`` (it swells nested radicals badly and the zero test does not need it).
    """
    e = sympy.sympify(e)
    if e.is_Number or e.is_Symbol:
        return e
    return sympy.cancel(e)


def differentiate(
    e: Expression, v: str | sympy.Symbol, chart_vars: Sequence[str] | None = None
) -> Expression:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    name = v.name if isinstance(v, sympy.Symbol) else v
    if chart_vars is not None and name not in chart_vars:
        raise UnknownVariableError(name)
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise UnknownVariableError(name)
    return normal_form(sympy.diff(sympy.sympify(e), sympy.Symbol(name)))


def substitute(e: Expression, bindings: Mapping[str | sympy.Symbol, Expression]) -> Expression:
    """Simultaneous substitution of variables, followed by normalization."""
    if not bindings:
        return sympy.sympify(e)
    table = {
        (sympy.Symbol(k) if isinstance(k, str) else k): sympy.sympify(v)
        for k, v in bindings.items()
    }
    return normal_form(sympy.sympify(e).xreplace(table))


def structural_hash(*exprs: Expression) -> int:
    """Process-independent hash of expression structure (sympy's own hash is salted)."""
    h = hashlib.blake2b(digest_size=8)
    for e in exprs:
        h.update(sympy.srepr(e).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "big")


# ---------------------------------------------------------------------------
# zero testing


@dataclass(frozen=True)
class ZeroTestConfig:
    """Knobs of the probabilistic stage of :func:`is_zero`.

    Sample coordinates are drawn uniformly from ``[low, high]``; points where
    any radicand or logarithm argument is not strictly positive are rejected.
    ``guards`` are extra expressions that must be positive at accepted points
    (those mentioning atoms the point does not bind are ignored); they
    describe the open set on which an identity is claimed.
    """

    samples: int = 12
    seed: int = 0xED5
    rtol: float = 1e-9
    atol: float = 1e-12
    max_rejections: int = 1000
    low: float = 0.1
    high: float = 2.0
    guards: tuple = ()


_CONFIG: contextvars.ContextVar[ZeroTestConfig] = contextvars.ContextVar(
    "edskit_zero_test_config", default=ZeroTestConfig()
)


def current_config() -> ZeroTestConfig:
    return _CONFIG.get()


@contextlib.contextmanager
def zero_test_settings(config: ZeroTestConfig | None = None, **changes):
    """Temporarily replace the zero-test configuration."""
    new = replace(config or current_config(), **changes)
    token = _CONFIG.set(new)
    try:
        yield new
    finally:
        _CONFIG.reset(token)


def is_zero(e: Expression, config: ZeroTestConfig | None = None) -> bool:
    """Decide whether ``e`` vanishes identically on the positive sample domain.

    Layers: exact normal form of the rational skeleton, then structural
    exp/ln and Pythagorean rewrites, then seeded numeric sampling.  A single
    clearly nonzero sample short-circuits the exact layers, which can only
    ever answer "zero".
    """
    e = sympy.sympify(e)
    if e.is_Number:
        return bool(e == 0)
    return _is_zero_cached(e, config or current_config())


@functools.lru_cache(maxsize=1 << 16)
def _is_zero_cached(e: Expression, config: ZeroTestConfig) -> bool:
    points = sample_points([e], config, count=config.samples)
    first, scale = _evaluate(e, points[0], strict=True)
    if abs(first) > 1e3 * (config.atol + config.rtol * scale):
        return False
    if _exact_zero(e) or _rule_zero(e):
        return True
    return _sampled_zero(e, points, config)


def _exact_zero(e: Expression) -> bool:
    return normal_form(e) == 0


def _pythagorean(e: Expression) -> Expression:
    def is_sq(n, fn):
        return n.is_Pow and n.base.func is fn and n.exp.is_Integer and n.exp >= 2

    def rw_sin(n):
        a = n.base.args[0]
        return (1 - sympy.cos(a) ** 2) ** (n.exp // 2) * sympy.sin(a) ** (n.exp % 2)

    def rw_sinh(n):
        a = n.base.args[0]
        return (sympy.cosh(a) ** 2 - 1) ** (n.exp // 2) * sympy.sinh(a) ** (n.exp % 2)

    e = e.replace(lambda n: is_sq(n, sympy.sin), rw_sin)
    return e.replace(lambda n: is_sq(n, sympy.sinh), rw_sinh)


def _rule_zero(e: Expression) -> bool:
    if not e.has(sympy.exp, sympy.log, sympy.sin, sympy.sinh):
        return False
    e = sympy.powsimp(sympy.expand(e), combine="exp")
    e = e.replace(
        lambda n: n.func is sympy.log and n.args[0].func is sympy.exp,
        lambda n: n.args[0].args[0],
    )
    return normal_form(_pythagorean(e)) == 0


def _sampled_zero(e: Expression, points: list[dict], config: ZeroTestConfig) -> bool:
    for pt in points:
        value, scale = _evaluate(e, pt, strict=True)
        if abs(value) > config.atol + config.rtol * scale:
            return False
    return True


def _sample_atoms(exprs: Sequence[Expression]) -> list:
    atoms = set()
    for e in exprs:
        atoms |= e.free_symbols
        atoms |= {a for a in e.atoms(sympy.Function) if _is_opaque_application(a)}
        atoms |= e.atoms(sympy.Derivative)
    return sorted(atoms, key=sympy.default_sort_key)


def _is_opaque_application(node) -> bool:
    return _function_symbol_of(node) is not None or isinstance(node, sympy.core.function.AppliedUndef)


def sample_points(
    exprs: Sequence[Expression],
    config: ZeroTestConfig | None = None,
    count: int | None = None,
    salt: int = 0,
) -> list[dict]:
    """Seeded sample points at which every expression evaluates in-domain.

    Keys are sympy atoms: free symbols and opaque function applications such
    as ``alpha(p)`` (whose values are drawn independently).
    """
    config = config or current_config()
    count = config.samples if count is None else count
    exprs = [sympy.sympify(e) for e in exprs]
    atoms = _sample_atoms(exprs)
    rng = random.Random(config.seed ^ structural_hash(*exprs) ^ salt)
    points: list[dict] = []
    rejections = 0
    while len(points) < count:
        pt = {a: rng.uniform(config.low, config.high) for a in atoms}
        try:
            for e in exprs:
                _evaluate(e, pt, strict=True)
            for guard in config.guards:
                if _sample_atoms([guard]) and set(_sample_atoms([guard])) <= pt.keys():
                    if not _evaluate(guard, pt, strict=True)[0] > 0:
                        raise DomainError("guard not satisfied", guard)
        except DomainError:
            rejections += 1
            if rejections > config.max_rejections:
                raise DomainExhaustedError(
                    f"no admissible sample point after {config.max_rejections} rejections"
                ) from None
            continue
        points.append(pt)
    return points


# ---------------------------------------------------------------------------
# float evaluation

_UNARY = {
    sympy.exp: math.exp,
    sympy.sin: math.sin,
    sympy.cos: math.cos,
    sympy.sinh: math.sinh,
    sympy.cosh: math.cosh,
}


def _evaluate(
    e: Expression,
    values: Mapping,
    strict: bool = False,
    functions: Mapping[str, Callable[[float], float]] | None = None,
) -> tuple[float, float]:
    """Evaluate left to right over sympy's stored argument order.

    Returns the value and the largest intermediate magnitude.  ``strict``
    requires radicands and logarithm arguments to be strictly positive.
    """
    memo: dict = {}
    biggest = 0.0

    def ev(node) -> float:
        nonlocal biggest
        if node in values:
            v = float(values[node])
        elif node in memo:
            return memo[node]
        else:
            v = compute(node)
        if not math.isfinite(v):
            raise DomainError("non-finite value", node)
        biggest = max(biggest, abs(v))
        memo[node] = v
        return v

    def compute(node) -> float:
        if node.is_Number or node.is_NumberSymbol:
            if node.is_Rational:
                return node.p / node.q
            return float(node)
        if node.is_Symbol:
            raise UnknownVariableError(node.name)
        if node.is_Add:
            s = 0.0
            for a in node.args:
                s += ev(a)
            return s
        if node.is_Mul:
            prod = 1.0
            for a in node.args:
                prod *= ev(a)
            return prod
        if node.is_Pow:
            b = ev(node.base)
            ex = node.exp
            if not ex.is_Rational:
                raise DomainError("non-rational exponent", node)
            if ex.is_Integer:
                n = int(ex)
                if b == 0.0 and n < 0:
                    raise DomainError("division by zero", node)
                return b**n
            if b < 0.0 or (b == 0.0 and (strict or ex < 0)):
                raise DomainError("radicand not positive", node)
            if ex == sympy.Rational(1, 2):
                return math.sqrt(b)
            if ex == sympy.Rational(-1, 2):
                return 1.0 / math.sqrt(b)
            return b ** (ex.p / ex.q)
        if node.func in _UNARY:
            a = ev(node.args[0])
            try:
                return _UNARY[node.func](a)
            except OverflowError:
                raise DomainError("overflow", node) from None
        if node.func is sympy.log:
            a = ev(node.args[0])
            if a <= 0.0:
                raise DomainError("logarithm argument not positive", node)
            return math.log(a)
        fs = _function_symbol_of(node)
        if fs is not None and functions and fs.name in functions:
            return float(functions[fs.name](ev(node.args[0])))
        raise DomainError("no numeric value for", node)

    value = ev(sympy.sympify(e))
    return value, biggest


def eval_at(
    e: Expression,
    point: Mapping[str, float],
    constants: Mapping[str, float] | None = None,
    functions: Mapping[str, Callable[[float], float]] | None = None,
) -> float:
    """IEEE-754 double evaluation of ``e``.

    Sums and products accumulate left to right in sympy's canonical argument
    order, so results are bit-reproducible.  ``functions`` supplies numeric
    implementations for function symbols by name.
    """
    values = {sympy.Symbol(k): v for k, v in point.items()}
    for k, v in (constants or {}).items():
        values[sympy.Symbol(k)] = v
    return _evaluate(sympy.sympify(e), values, functions=functions)[0]
