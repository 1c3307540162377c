"""Immutable expression trees.

Nodes are built through the simplifying constructors (:func:`add`, :func:`mul`,
:func:`div`, :func:`power`, :func:`call`) which flatten nested sums and
products, fold numeric constants and drop neutral elements. No other
rewriting is attempted; identities are checked by sampling instead.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

Number = int | float | complex


def _normalize(value) -> Number:
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        v = float(value)
        if v.is_integer() and abs(v) < 2**53:
            return int(v)
        return v
    if isinstance(value, numbers.Complex):
        c = complex(value)
        if c.imag == 0.0:
            return _normalize(c.real)
        return c
    raise TypeError(f"not a numeric constant: {value!r}")


class SymExpr:
    """Base class of all expression nodes."""

    __slots__ = ()

    @property
    def free_vars(self) -> frozenset:
        return self._vars  # type: ignore[attr-defined]

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        from .printer import to_string

        return to_string(self)

    def __call__(self, **env):
        return evaluate(self, env)


def _set_vars(node, vars_):
    object.__setattr__(node, "_vars", frozenset(vars_))


@dataclass(frozen=True)
class Const(SymExpr):
    value: Number
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "value", _normalize(self.value))


@dataclass(frozen=True)
class Var(SymExpr):
    name: str
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, (self.name,))


@dataclass(frozen=True)
class Sum(SymExpr):
    terms: tuple
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, frozenset().union(*(t.free_vars for t in self.terms)))


@dataclass(frozen=True)
class Product(SymExpr):
    factors: tuple
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, frozenset().union(*(f.free_vars for f in self.factors)))


@dataclass(frozen=True)
class Quotient(SymExpr):
    num: SymExpr
    den: SymExpr
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, self.num.free_vars | self.den.free_vars)


@dataclass(frozen=True)
class Power(SymExpr):
    base: SymExpr
    exponent: SymExpr
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, self.base.free_vars | self.exponent.free_vars)


@dataclass(frozen=True, eq=False)
class FunctionDef:
    """A named scalar function usable as an opaque node.

    Args:
        name: identifier used by the printer and the parser.
        numeric: vectorized evaluator.
        derivative: maps the argument expression ``u`` to the expression for
            ``f'(u)``; the chain-rule factor is applied by the differentiator.
            ``None`` means the function cannot be differentiated symbolically.
        real: whether the function maps reals to reals (used by conjugation).
    """

    name: str
    numeric: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[SymExpr], SymExpr] | None = None
    real: bool = True

    def __call__(self, arg) -> SymExpr:
        return call(self, as_expr(arg))

    def __repr__(self):
        return f"FunctionDef({self.name!r})"


@dataclass(frozen=True)
class Call(SymExpr):
    fn: FunctionDef
    arg: SymExpr
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, self.arg.free_vars)


@dataclass(frozen=True)
class ImplicitRoot(SymExpr):
    """The solution ``v`` of ``equation(..., v) = 0`` near ``guess``.

    The bound variable ``var`` is local to the node; the free variables are
    those of the equation other than ``var`` plus those of the guess.
    Evaluation runs a safeguarded Newton iteration; differentiation uses the
    implicit function theorem.
    """

    equation: SymExpr
    var: str
    guess: SymExpr
    _vars: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        _set_vars(self, (self.equation.free_vars - {self.var}) | self.guess.free_vars)


ZERO = Const(0)
ONE = Const(1)
IMAG = Const(1j)


def as_expr(value) -> SymExpr:
    if isinstance(value, SymExpr):
        return value
    if isinstance(value, str):
        return Var(value)
    return Const(value)


def const_value(e: SymExpr):
    return e.value if isinstance(e, Const) else None


def is_zero(e: SymExpr) -> bool:
    return isinstance(e, Const) and e.value == 0


def is_one(e: SymExpr) -> bool:
    return isinstance(e, Const) and e.value == 1


def _fold_div(a: Number, b: Number) -> Number:
    if isinstance(a, int) and isinstance(b, int) and a % b == 0:
        return a // b
    return a / b


def add(*terms) -> SymExpr:
    flat = []
    total: Number = 0
    for t in map(as_expr, terms):
        parts = t.terms if isinstance(t, Sum) else (t,)
        for s in parts:
            if isinstance(s, Const):
                total = total + s.value
            else:
                flat.append(s)
    total = _normalize(total)
    if total != 0:
        flat.insert(0, Const(total))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def mul(*factors) -> SymExpr:
    flat = []
    coeff: Number = 1
    for f in map(as_expr, factors):
        parts = f.factors if isinstance(f, Product) else (f,)
        for s in parts:
            if isinstance(s, Const):
                coeff = coeff * s.value
            else:
                flat.append(s)
    coeff = _normalize(coeff)
    if coeff == 0:
        return ZERO
    if not flat:
        return Const(coeff)
    if coeff != 1:
        flat.insert(0, Const(coeff))
    if len(flat) == 1:
        return flat[0]
    return Product(tuple(flat))


def neg(a) -> SymExpr:
    return mul(-1, a)


def sub(a, b) -> SymExpr:
    return add(a, neg(as_expr(b)))


def div(a, b) -> SymExpr:
    a, b = as_expr(a), as_expr(b)
    if is_zero(b):
        raise ZeroDivisionError("symbolic division by zero constant")
    if is_zero(a):
        return ZERO
    if is_one(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(_fold_div(a.value, b.value))
    return Quotient(a, b)


def power(b, e) -> SymExpr:
    b, e = as_expr(b), as_expr(e)
    if is_zero(e):
        return ONE
    if is_one(e):
        return b
    if is_one(b):
        return ONE
    if isinstance(b, Const) and isinstance(e, Const):
        bv, ev = b.value, e.value
        if isinstance(ev, int) and ev >= 0:
            return Const(bv**ev)
        if isinstance(ev, int) and bv != 0:
            return Const(_fold_div(1, bv ** (-ev)))
        if isinstance(bv, (int, float)) and bv > 0 and isinstance(ev, (int, float)):
            return Const(float(bv) ** ev)
    if is_zero(b) and isinstance(e, Const) and isinstance(e.value, (int, float)) and e.value > 0:
        return ZERO
    return Power(b, e)


def sqrt(a) -> SymExpr:
    return power(a, Const(0.5))


def call(fn: FunctionDef, arg) -> SymExpr:
    return Call(fn, as_expr(arg))


def implicit_root(equation: SymExpr, var: str, guess=0) -> SymExpr:
    return ImplicitRoot(equation, var, as_expr(guess))


def children(e: SymExpr) -> tuple:
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Product):
        return e.factors
    if isinstance(e, Quotient):
        return (e.num, e.den)
    if isinstance(e, Power):
        return (e.base, e.exponent)
    if isinstance(e, Call):
        return (e.arg,)
    if isinstance(e, ImplicitRoot):
        return (e.equation, e.guess)
    return ()


def node_count(e: SymExpr) -> int:
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.extend(children(node))
    return len(seen)


class EvaluationError(ArithmeticError):
    """Raised when an expression cannot be evaluated at the requested points."""


# Newton solves for ImplicitRoot nodes
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 60


def evaluate(e: SymExpr, env: Mapping[str, object]) -> np.ndarray:
    """Evaluate ``e`` with numpy broadcasting over the arrays in ``env``."""
    arrays = {}
    for k, v in env.items():
        a = np.asarray(v)
        if a.dtype.kind in "biu":
            a = a.astype(float)
        arrays[k] = a
    missing = e.free_vars - arrays.keys()
    if missing:
        raise EvaluationError(f"no value supplied for {sorted(missing)}")
    with np.errstate(all="ignore"):
        return np.asarray(_Evaluator(arrays).run(e))


class _Evaluator:
    def __init__(self, env):
        self.env = env
        self.memo: dict[int, tuple[SymExpr, object]] = {}

    def run(self, e):
        hit = self.memo.get(id(e))
        if hit is not None:
            return hit[1]
        val = self._eval(e)
        self.memo[id(e)] = (e, val)
        return val

    def _eval(self, e):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return self.env[e.name]
        if isinstance(e, Sum):
            acc = self.run(e.terms[0])
            for t in e.terms[1:]:
                acc = acc + self.run(t)
            return acc
        if isinstance(e, Product):
            acc = self.run(e.factors[0])
            for f in e.factors[1:]:
                acc = acc * self.run(f)
            return acc
        if isinstance(e, Quotient):
            return np.true_divide(self.run(e.num), self.run(e.den))
        if isinstance(e, Power):
            b = self.run(e.base)
            x = self.run(e.exponent)
            if isinstance(x, int) and x == 2:
                return b * b
            if isinstance(x, int) and isinstance(b, int) and x < 0:
                b = float(b)
            return np.power(b, x)
        if isinstance(e, Call):
            return e.fn.numeric(np.asarray(self.run(e.arg)))
        if isinstance(e, ImplicitRoot):
            return _solve_root(e, self)
        raise TypeError(f"unknown node {type(e).__name__}")


def _solve_root(node: ImplicitRoot, outer: _Evaluator):
    from .calculus import differentiate

    deriv = differentiate(node.equation, node.var)
    env = dict(outer.env)
    shapes = [np.shape(env[v]) for v in node.free_vars]
    shape = np.broadcast_shapes(*shapes) if shapes else ()
    z = np.broadcast_to(np.asarray(outer.run(node.guess), dtype=float), shape).copy()

    def residual(zz):
        env[node.var] = zz
        return np.asarray(_Evaluator(env).run(node.equation)), env

    F, _ = residual(z)
    for _ in range(NEWTON_MAXITER):
        env[node.var] = z
        dF = np.asarray(_Evaluator(env).run(deriv))
        step = np.broadcast_to(F / dF, shape)
        # backtrack elementwise when the residual grows
        lam = np.ones(shape)
        trial = z - step
        Ft, _ = residual(trial)
        for _ in range(30):
            bad = np.abs(Ft) > np.abs(F) * (1 - 1e-4 * lam) + 1e-300
            bad &= np.isfinite(step)
            if not np.any(bad):
                break
            lam = np.where(bad, lam / 2, lam)
            trial = z - lam * step
            Ft, _ = residual(trial)
        done = np.all(np.abs(z - trial) <= NEWTON_TOL * np.maximum(1.0, np.abs(trial)))
        z, F = trial, np.broadcast_to(Ft, shape)
        if done:
            # one more step for full double precision
            env[node.var] = z
            dF = np.asarray(_Evaluator(env).run(deriv))
            z = z - F / dF
            break
    else:
        raise EvaluationError(f"Newton iteration for implicit root in {node.var!r} did not converge")
    if not np.all(np.isfinite(z)):
        raise EvaluationError(f"implicit root in {node.var!r} is not finite at some points")
    return z
