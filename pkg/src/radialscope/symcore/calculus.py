"""Differentiation, substitution and the canonical-chart calculus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    ZERO,
    Call,
    Const,
    ImplicitRoot,
    Power,
    Product,
    Quotient,
    Sum,
    SymExpr,
    Var,
    add,
    as_expr,
    call,
    div,
    evaluate,
    mul,
    neg,
    power,
    sub,
)
from .functions import log

_DIFF_CACHE: dict = {}


def differentiate(e: SymExpr, v: str) -> SymExpr:
    """Partial derivative of ``e`` with respect to the variable named ``v``."""
    if v not in e.free_vars:
        return ZERO
    key = (e, v)
    hit = _DIFF_CACHE.get(key)
    if hit is not None:
        return hit
    out = _diff(e, v)
    if len(_DIFF_CACHE) > 200_000:
        _DIFF_CACHE.clear()
    _DIFF_CACHE[key] = out
    return out


def _diff(e: SymExpr, v: str) -> SymExpr:
    if isinstance(e, Var):
        return Const(1)
    if isinstance(e, Sum):
        return add(*(differentiate(t, v) for t in e.terms))
    if isinstance(e, Product):
        fs = e.factors
        terms = []
        for i, f in enumerate(fs):
            d = differentiate(f, v)
            if isinstance(d, Const) and d.value == 0:
                continue
            terms.append(mul(*fs[:i], d, *fs[i + 1 :]))
        return add(*terms)
    if isinstance(e, Quotient):
        dn = differentiate(e.num, v)
        dd = differentiate(e.den, v)
        if v not in e.den.free_vars:
            return div(dn, e.den)
        return div(sub(mul(dn, e.den), mul(e.num, dd)), power(e.den, 2))
    if isinstance(e, Power):
        b, x = e.base, e.exponent
        if v not in x.free_vars:
            db = differentiate(b, v)
            xv = x.value if isinstance(x, Const) else None
            lower = power(b, sub(x, 1)) if xv is None else power(b, Const(xv - 1))
            return mul(x, lower, db)
        # general case b^x = exp(x log b)
        return mul(e, add(mul(differentiate(x, v), call(log, b)), mul(x, div(differentiate(b, v), b))))
    if isinstance(e, Call):
        if e.fn.derivative is None:
            raise NotImplementedError(f"no derivative rule registered for {e.fn.name}")
        return mul(e.fn.derivative(e.arg), differentiate(e.arg, v))
    if isinstance(e, ImplicitRoot):
        F = e.equation
        num = differentiate(F, v)
        den = differentiate(F, e.var)
        ratio = neg(div(num, den))
        guess_part = ZERO
        return add(substitute(ratio, {e.var: e}), guess_part)
    raise TypeError(type(e).__name__)


def substitute(e: SymExpr, mapping: Mapping[str, object]) -> SymExpr:
    """Replace free variables by expressions (simultaneously)."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    memo: dict[int, SymExpr] = {}

    def go(node):
        if not (node.free_vars & mapping.keys()):
            return node
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Var):
            out = mapping[node.name]
        elif isinstance(node, Sum):
            out = add(*(go(t) for t in node.terms))
        elif isinstance(node, Product):
            out = mul(*(go(f) for f in node.factors))
        elif isinstance(node, Quotient):
            out = div(go(node.num), go(node.den))
        elif isinstance(node, Power):
            out = power(go(node.base), go(node.exponent))
        elif isinstance(node, Call):
            out = call(node.fn, go(node.arg))
        elif isinstance(node, ImplicitRoot):
            inner = {k: v for k, v in mapping.items() if k != node.var}
            if any(node.var in v.free_vars for v in inner.values()):
                raise ValueError(f"substitution would capture bound variable {node.var!r}")
            out = ImplicitRoot(substitute(node.equation, inner), node.var, substitute(node.guess, inner))
        else:
            raise TypeError(type(node).__name__)
        memo[id(node)] = out
        return out

    return go(e)


def conjugate(e: SymExpr) -> SymExpr:
    """Complex conjugate, treating every variable as real."""
    if isinstance(e, Const):
        return Const(np.conj(e.value)) if isinstance(e.value, complex) else e
    if isinstance(e, Var):
        return e
    if isinstance(e, Sum):
        return add(*(conjugate(t) for t in e.terms))
    if isinstance(e, Product):
        return mul(*(conjugate(f) for f in e.factors))
    if isinstance(e, Quotient):
        return div(conjugate(e.num), conjugate(e.den))
    if isinstance(e, Power):
        return power(conjugate(e.base), conjugate(e.exponent))
    if isinstance(e, Call):
        if not e.fn.real:
            raise NotImplementedError(f"conjugate of non-real function {e.fn.name}")
        return call(e.fn, conjugate(e.arg))
    if isinstance(e, ImplicitRoot):
        return e
    raise TypeError(type(e).__name__)


def real_part(e: SymExpr) -> SymExpr:
    return mul(0.5, add(e, conjugate(e)))


def imag_part(e: SymExpr) -> SymExpr:
    return mul(-0.5j, sub(e, conjugate(e)))


@dataclass(frozen=True)
class ChartSpec:
    """Ordered coordinate names of a chart.

    A canonical chart pairs ``base[i]`` with ``fiber[i]``. Non-canonical
    charts (the conic chart) set ``canonical=False``.

    Args:
        base: base variable names.
        fiber: fiber variable names.
        positive: names constrained to be positive (e.g. a fiber scale).
        canonical: whether base and fiber are symplectically paired.
    """

    base: tuple
    fiber: tuple
    positive: tuple = ()
    canonical: bool = True

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "fiber", tuple(self.fiber))
        object.__setattr__(self, "positive", tuple(self.positive))
        names = self.base + self.fiber
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        if self.canonical and len(self.base) != len(self.fiber):
            raise ValueError("canonical chart needs equally many base and fiber names")

    @property
    def n(self) -> int:
        return len(self.base)

    @property
    def coords(self) -> tuple:
        return self.base + self.fiber

    @classmethod
    def standard(cls, n: int) -> "ChartSpec":
        """``x, xi`` for ``n = 1``; ``x1..xn, xi1..xin`` otherwise."""
        if n == 1:
            return cls(("x",), ("xi",))
        return cls(tuple(f"x{i}" for i in range(1, n + 1)), tuple(f"xi{i}" for i in range(1, n + 1)))


class ChartError(ValueError):
    """Raised when an operation needs a canonical chart."""


@dataclass(frozen=True)
class VectorFieldSym:
    """A vector field given by one coefficient per coordinate."""

    coords: tuple
    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "coeffs", tuple(as_expr(c) for c in self.coeffs))
        if len(self.coords) != len(self.coeffs):
            raise ValueError("one coefficient per coordinate required")

    def apply(self, f: SymExpr) -> SymExpr:
        """The derivative of ``f`` along the field."""
        return add(*(mul(c, differentiate(f, v)) for v, c in zip(self.coords, self.coeffs)))

    def component(self, name: str) -> SymExpr:
        return self.coeffs[self.coords.index(name)]

    def scaled(self, factor) -> "VectorFieldSym":
        return VectorFieldSym(self.coords, tuple(mul(factor, c) for c in self.coeffs))

    def substitute(self, mapping) -> "VectorFieldSym":
        return VectorFieldSym(self.coords, tuple(substitute(c, mapping) for c in self.coeffs))

    def evaluate(self, env) -> np.ndarray:
        return np.array([np.broadcast_to(evaluate(c, env), _shape(env)) for c in self.coeffs])


def _shape(env):
    shapes = [np.shape(v) for v in env.values()]
    return np.broadcast_shapes(*shapes) if shapes else ()


def _require_canonical(chart: ChartSpec):
    if not chart.canonical:
        raise ChartError("operation requires a canonical chart with paired base/fiber names")


def hamilton_field(p: SymExpr, chart: ChartSpec) -> VectorFieldSym:
    """``H_p = sum dp/dxi_i d/dx_i - dp/dx_i d/dxi_i``."""
    _require_canonical(chart)
    base = [differentiate(p, xi) for xi in chart.fiber]
    fiber = [neg(differentiate(p, x)) for x in chart.base]
    return VectorFieldSym(chart.coords, tuple(base + fiber))


def poisson_bracket(a: SymExpr, b: SymExpr, chart: ChartSpec) -> SymExpr:
    """``{a, b} = sum da/dxi_i db/dx_i - da/dx_i db/dxi_i`` so ``H_a b = {a, b}``."""
    _require_canonical(chart)
    terms = []
    for x, xi in zip(chart.base, chart.fiber):
        terms.append(mul(differentiate(a, xi), differentiate(b, x)))
        terms.append(neg(mul(differentiate(a, x), differentiate(b, xi))))
    return add(*terms)


def homogeneity_degree(
    e: SymExpr,
    chart: ChartSpec,
    fiber: Sequence[str] | None = None,
    n: int = 40,
    seed: int = 0,
    tol: float = 1e-9,
    box: tuple = (0.5, 2.0),
):
    """Degree ``k`` with ``sum xi_i d e/dxi_i = k e`` on samples, else ``None``.

    Samples put base coordinates in ``[-1, 1]`` and fiber coordinates in
    ``box`` (positive, so rational symbols stay finite). A symbol identically
    zero has no well defined degree and returns ``None``.

    Args:
        e: expression to test.
        chart: chart supplying the variable names.
        fiber: names scaled by the dilation; defaults to ``chart.fiber``.
        n: number of sample points.
        seed: sampling seed.
        tol: relative tolerance for the Euler identity and integrality.
    """
    fib = tuple(fiber if fiber is not None else chart.fiber)
    euler = add(*(mul(Var(v), differentiate(e, v)) for v in fib))
    rng = np.random.default_rng(seed)
    env = {}
    for v in chart.coords:
        lo, hi = box if v in fib else (-1.0, 1.0)
        env[v] = rng.uniform(lo, hi, n)
    for v in e.free_vars - env.keys():
        env[v] = rng.uniform(-1.0, 1.0, n)
    ev = np.broadcast_to(evaluate(e, env), (n,))
    eu = np.broadcast_to(evaluate(euler, env), (n,))
    if not (np.all(np.isfinite(ev)) and np.all(np.isfinite(eu))):
        return None
    scale = np.max(np.abs(ev))
    if scale == 0:
        return None
    mask = np.abs(ev) > 1e-3 * scale
    k = np.median(np.real(eu[mask] / ev[mask]))
    kr = round(k * 2) / 2
    if abs(k - kr) > 1e-6:
        kr = k
    resid = np.max(np.abs(eu - kr * ev)) / max(1.0, scale)
    if resid > tol:
        return None
    if float(kr).is_integer():
        return int(kr)
    return float(kr)
