"""Subprincipal quantities and the regularity thresholds ``s0`` and ``s1``.

Symbols use left quantization with ``D = -i d/dx``: the symbol ``a(x, xi)``
acts by ``sum_alpha a_alpha(x) D^alpha`` when ``a = sum a_alpha(x) xi^alpha``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    DegeneracyError,
    LagrangianSpec,
    RadialChart,
    _branch_homogeneity,
    classify_symbol,
    to_conic_chart,
)
from .symcore import (
    Const,
    ChartSpec,
    SymExpr,
    Var,
    add,
    as_expr,
    conjugate,
    differentiate,
    div,
    evaluate,
    exp,
    hamilton_field,
    imag_part,
    mul,
    neg,
    parse,
    power,
    sin,
    sub,
    substitute,
    to_string,
)

# derivative order at which the adjoint expansion is cut for non-polynomial symbols
MAX_EXPANSION = 6


@dataclass(frozen=True)
class OperatorSpec:
    """Full left symbol ``p_m + p_{m-1} + ...`` and a density.

    Args:
        m: order of the principal part.
        terms: pairs ``(order, symbol)``; the ``order == m`` entry is the
            principal symbol, which must be real and homogeneous of degree m.
        chart: canonical chart of the variables.
        density: positive function of the base variables defining the
            inner product ``<u, v> = int u conj(v) density dx``.
    """

    m: float
    terms: tuple
    chart: ChartSpec
    density: SymExpr = Const(1)

    def __post_init__(self):
        terms = tuple(sorted(((o, as_expr(s)) for o, s in self.terms), key=lambda t: -t[0]))
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "density", as_expr(self.density))
        orders = [o for o, _ in terms]
        if len(set(orders)) != len(orders):
            raise ValueError("one symbol per order")
        if self.m not in orders:
            raise ValueError("principal symbol missing")
        if orders[0] != self.m:
            raise ValueError("terms above the principal order")
        if not self.density.free_vars <= set(self.chart.base):
            raise ValueError("density may only depend on base variables")

    @property
    def principal(self) -> SymExpr:
        return self.symbol(self.m)

    def symbol(self, order) -> SymExpr:
        for o, s in self.terms:
            if o == order:
                return s
        return Const(0)

    def with_density(self, density) -> "OperatorSpec":
        return OperatorSpec(self.m, self.terms, self.chart, density)

    @classmethod
    def from_strings(cls, n: int, m, principal: str, lower: Sequence[str] = (), density: str = "1"):
        """Build from expression strings; ``lower[j]`` has order ``m - 1 - j``."""
        chart = ChartSpec.standard(n)
        terms = [(m, parse(principal, chart))]
        terms += [(m - 1 - j, parse(t, chart)) for j, t in enumerate(lower)]
        return cls(m, tuple(terms), chart, parse(density, variables=chart.base))

    def validate(self, lag: LagrangianSpec | None = None, count: int = 30, seed: int = 0):
        """Check the principal symbol is real and homogeneous, the density positive."""
        lag = lag or LagrangianSpec(self.chart.n)
        k = _branch_homogeneity(self.principal, lag)
        if k is None or abs(k - self.m) > 1e-12:
            raise ValueError(f"principal symbol is not homogeneous of degree {self.m}")
        rng = np.random.default_rng(seed)
        env = {v: rng.uniform(-1, 1, count) for v in self.chart.coords}
        env[self.chart.fiber[-1]] = lag.branch * rng.uniform(0.5, 2, count)
        vals = np.broadcast_to(evaluate(self.principal, env), (count,))
        if np.max(np.abs(np.imag(vals))) > 1e-12:
            raise ValueError("principal symbol must be real")
        mu = np.broadcast_to(evaluate(self.density, env), (count,))
        if np.any(np.real(mu) <= 0) or np.any(np.imag(mu) != 0):
            raise ValueError("density must be positive")


def _multi_indices(n: int, k: int):
    for combo in itertools.combinations_with_replacement(range(n), k):
        alpha = [0] * n
        for i in combo:
            alpha[i] += 1
        yield tuple(alpha)


def _factorial(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def _d(e: SymExpr, names: Sequence[str], alpha) -> SymExpr:
    for v, a in zip(names, alpha):
        for _ in range(a):
            e = differentiate(e, v)
    return e


def _compose_expansion(a_terms: dict, b: SymExpr, chart: ChartSpec, depth: int) -> dict:
    """Graded symbol of ``Op(a) o (multiplication by b)``, ``b = b(x)``."""
    out: dict = {}
    for order, a in a_terms.items():
        for k in range(depth + 1):
            any_nonzero = False
            for alpha in _multi_indices(chart.n, k):
                da = _d(a, chart.fiber, alpha)
                if da == Const(0):
                    continue
                db = _d(b, chart.base, alpha)
                if db == Const(0):
                    any_nonzero = True
                    continue
                any_nonzero = True
                term = mul((-1j) ** k / _factorial(alpha), da, db)
                out[order - k] = add(out.get(order - k, Const(0)), term)
            if not any_nonzero:
                break
    return out


def formal_adjoint_symbol(op: OperatorSpec, depth: int = MAX_EXPANSION) -> dict:
    """Graded left symbol of the adjoint with respect to ``density dx``.

    For Lebesgue measure ``sigma(P*) = sum_alpha (1/alpha!) d_xi^alpha D_x^alpha conj(p)``,
    exact when the symbol is polynomial in ``xi``. With a density ``mu`` the
    adjoint is ``mu^{-1} P*_L mu``.

    Returns:
        dict mapping order to the symbol of that order.
    """
    chart = op.chart
    graded: dict = {}
    for order, a in op.terms:
        abar = conjugate(a)
        for k in range(depth + 1):
            any_nonzero = False
            for alpha in _multi_indices(chart.n, k):
                da = _d(abar, chart.fiber, alpha)
                if da == Const(0):
                    continue
                any_nonzero = True
                term = mul((-1j) ** k / _factorial(alpha), _d(da, chart.base, alpha))
                graded[order - k] = add(graded.get(order - k, Const(0)), term)
            if not any_nonzero:
                break
    mu = op.density
    if mu.free_vars:
        composed = _compose_expansion(graded, mu, chart, depth)
        graded = {o: div(s, mu) for o, s in composed.items()}
    return {o: s for o, s in sorted(graded.items(), key=lambda t: -t[0]) if s != Const(0)}


def subprincipal_difference(op: OperatorSpec) -> SymExpr:
    """Order ``m - 1`` part of ``(sigma(P) - sigma(P*)) / 2i``.

    For real ``p_m`` this is ``Im p_{m-1} + (1/2) sum d_x d_xi p_m`` plus
    ``(1/2) sum d_xi p_m d_x log(density)``.
    """
    chart = op.chart
    pm = op.principal
    terms = [imag_part(op.symbol(op.m - 1))]
    for x, xi in zip(chart.base, chart.fiber):
        terms.append(mul(0.5, differentiate(differentiate(pm, x), xi)))
        if op.density.free_vars:
            terms.append(mul(0.5, differentiate(pm, xi), div(differentiate(op.density, x), op.density)))
    return add(*terms)


def subprincipal_from_adjoint(op: OperatorSpec) -> SymExpr:
    """The same quantity read off directly from :func:`formal_adjoint_symbol`."""
    adj = formal_adjoint_symbol(op, depth=1)
    k = op.m - 1
    return mul(-0.5j, sub(op.symbol(k), adj.get(k, Const(0))))


# quadrature oracle


def _poly_coefficients(a: SymExpr, chart: ChartSpec, max_degree: int = 6) -> dict:
    """``a = sum a_alpha(x) xi^alpha``; raises when ``a`` is not polynomial in xi."""
    zero = {xi: 0.0 for xi in chart.fiber}
    coeffs = {}
    for k in range(max_degree + 2):
        found = False
        for alpha in _multi_indices(chart.n, k):
            da = _d(a, chart.fiber, alpha)
            if da == Const(0):
                continue
            if k == max_degree + 1:
                raise ValueError("symbol is not polynomial in the fiber variables")
            found = True
            coeffs[alpha] = mul(1.0 / _factorial(alpha), substitute(da, zero))
        if not found:
            break
    return coeffs


def quantize(a: SymExpr, u: SymExpr, chart: ChartSpec) -> SymExpr:
    """``Op(a) u`` for ``a`` polynomial in ``xi`` (left quantization)."""
    out = []
    for alpha, ca in _poly_coefficients(a, chart).items():
        k = sum(alpha)
        out.append(mul((-1j) ** k, ca, _d(u, chart.base, alpha)))
    return add(*out)


def random_test_function(chart: ChartSpec, rng: np.random.Generator, degree: int = 3) -> SymExpr:
    """Complex polynomial of the given degree times a unit Gaussian."""
    xs = [Var(v) for v in chart.base]
    terms = []
    for k in range(degree + 1):
        for alpha in _multi_indices(chart.n, k):
            c = complex(rng.normal(), rng.normal())
            terms.append(mul(c, *[power(x, a) for x, a in zip(xs, alpha)]))
    gauss = exp(mul(-0.5, add(*[power(x, 2) for x in xs])))
    return mul(add(*terms), gauss)


def adjoint_quadrature_residual(
    op: OperatorSpec,
    adjoint: dict | None = None,
    pairs: int = 20,
    seed: int = 0,
    nodes: int | None = None,
    half_width: float = 12.0,
) -> float:
    """Largest ``|<Pu, v> - <u, P* v>|`` over random Gaussian-windowed pairs.

    Integrals use tensor Gauss-Legendre rules on ``[-12, 12]^n``.
    """
    chart = op.chart
    adjoint = adjoint if adjoint is not None else formal_adjoint_symbol(op)
    full = add(*(s for _, s in op.terms))
    full_adj = add(*adjoint.values())
    nodes = nodes or (240 if chart.n == 1 else 90)
    t, w = np.polynomial.legendre.leggauss(nodes)
    t, w = t * half_width, w * half_width
    grids = np.meshgrid(*([t] * chart.n), indexing="ij")
    weights = np.ones_like(grids[0])
    for wg in np.meshgrid(*([w] * chart.n), indexing="ij"):
        weights = weights * wg
    env = {v: g for v, g in zip(chart.base, grids)}
    mu = np.broadcast_to(evaluate(op.density, env), weights.shape)
    rng = np.random.default_rng(seed)
    worst = 0.0

    def inner(f, g):
        return np.sum(f * np.conj(g) * mu * weights)

    for _ in range(pairs):
        u = random_test_function(chart, rng)
        v = random_test_function(chart, rng)
        Pu = np.broadcast_to(evaluate(quantize(full, u, chart), env), weights.shape)
        Pv = np.broadcast_to(evaluate(quantize(full_adj, v, chart), env), weights.shape)
        uu = np.broadcast_to(evaluate(u, env), weights.shape)
        vv = np.broadcast_to(evaluate(v, env), weights.shape)
        worst = max(worst, abs(inner(Pu, vv) - inner(uu, Pv)))
    return float(worst)


# thresholds


def _zeta_expr(lag: LagrangianSpec, zeta: SymExpr | None) -> SymExpr:
    if zeta is not None:
        return zeta
    return mul(lag.branch, Var(lag.canonical.fiber[-1]))


def threshold_f(
    op: OperatorSpec,
    chart: RadialChart,
    zeta: SymExpr | None = None,
    sub_expr: SymExpr | None = None,
    q: Sequence[float] = (),
    check: bool = True,
) -> SymExpr:
    """``f = (subprincipal difference) * zeta / lambda`` in canonical variables.

    Args:
        op: the operator.
        chart: normal coordinates (supplies the Lagrangian and branch).
        zeta: alternative fiber scale; ``lambda = -H_p zeta`` is recomputed.
        sub_expr: alternative representative of the subprincipal difference.
        q: base point used for the ellipticity check.
        check: verify ``lambda`` does not vanish near ``q``.
    """
    lag = chart.lag
    canon = lag.canonical
    z = _zeta_expr(lag, zeta)
    lam = neg(hamilton_field(op.principal, canon).apply(z))
    if check:
        env = _neighborhood_env(lag, q, 0.05, pts=3, zetas=np.array([0.5, 1.0, 2.0]))
        vals = np.abs(np.broadcast_to(evaluate(lam, env), np.shape(env[canon.base[0]])))
        if np.min(vals) <= 1e-12:
            raise DegeneracyError("lambda vanishes near q; the threshold quantity is undefined")
    s = sub_expr if sub_expr is not None else subprincipal_difference(op)
    return div(mul(s, z), lam)


def _neighborhood_env(lag: LagrangianSpec, q, radius: float, pts: int, zetas: np.ndarray) -> dict:
    """Canonical sample points over a conic box around ``q``."""
    conic = lag.conic
    yq = list(q) if len(q) else [0.0] * (lag.n - 1)
    axes = [np.linspace(c - radius, c + radius, pts) for c in yq]
    axes += [np.linspace(-radius, radius, pts)]
    axes += [np.linspace(-radius, radius, pts) for _ in conic.theta]
    axes += [np.asarray(zetas, dtype=float)]
    mesh = np.meshgrid(*axes, indexing="ij")
    names = conic.y + (conic.z,) + conic.theta + (conic.zeta,)
    pt = {k: v.ravel() for k, v in zip(names, mesh)}
    return conic.canonical_env(pt)


def _is_homogeneous(e: SymExpr, lag: LagrangianSpec, degree: float, q=(), seed: int = 0) -> bool:
    env = _neighborhood_env(lag, q, 0.2, pts=3, zetas=np.array([0.7, 1.3]))
    rng = np.random.default_rng(seed)
    env = {k: v + rng.uniform(-0.01, 0.01, v.shape) if k in lag.canonical.base else v for k, v in env.items()}
    shape = np.shape(next(iter(env.values())))
    v1 = np.broadcast_to(evaluate(e, env), shape)
    scaled = {k: (2 * v if k in lag.canonical.fiber else v) for k, v in env.items()}
    v2 = np.broadcast_to(evaluate(e, scaled), shape)
    if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
        return False
    scale = max(1.0, float(np.max(np.abs(v1))))
    return bool(np.max(np.abs(v2 - 2.0**degree * v1)) <= 1e-10 * scale)


@dataclass
class SweepConfig:
    """Ladders for the sup-inf forms.

    Args:
        r0: base neighborhood radius in conic coordinates.
        radius_exponents: radii are ``r0 * 2**-k`` for these k.
        zeta0_exponents: ``zeta_0 = 2**k`` for these k.
        points_per_dim: grid points per conic coordinate in a neighborhood.
        zeta_samples: geometric samples of ``zeta`` above ``zeta_0``.
        zeta_span: samples reach ``zeta_0 * zeta_span``.
    """

    r0: float = 0.5
    radius_exponents: tuple = (1, 2, 3, 4, 5, 6)
    zeta0_exponents: tuple = (3, 4, 5, 6, 7, 8, 9, 10)
    points_per_dim: int = 5
    zeta_samples: int = 8
    zeta_span: float = 64.0


@dataclass
class ThresholdEntry:
    value: float
    homogeneous: bool
    ladder: list = field(default_factory=list)
    diagonal: list = field(default_factory=list)

    def to_dict(self):
        return {"value": self.value, "homogeneous": self.homogeneous, "ladder": self.ladder, "diagonal": self.diagonal}


def _sweep(f: SymExpr, lag, q, sweep: SweepConfig, zeta: SymExpr, reducer, m) -> tuple[list, list]:
    ladder = []
    canon = lag.canonical
    radii = [sweep.r0 * 2.0**-k for k in sweep.radius_exponents]
    zeta0s = [2.0**k for k in sweep.zeta0_exponents]
    table = {}
    for r in radii:
        for z0 in zeta0s:
            # chart zeta is sampled on a wider range and filtered by the chosen zeta
            zs = np.geomspace(z0 / 4, 4 * z0 * sweep.zeta_span, 4 * sweep.zeta_samples)
            env = _neighborhood_env(lag, q, r, sweep.points_per_dim, zs)
            shape = np.shape(env[canon.base[0]])
            zv = np.real(np.broadcast_to(evaluate(zeta, env), shape))
            mask = (zv > z0) & (zv <= z0 * sweep.zeta_span)
            if not np.any(mask):
                raise ValueError(f"empty sweep at radius {r}, zeta0 {z0}")
            fv = np.real(np.broadcast_to(evaluate(f, env), shape))[mask]
            if not np.all(np.isfinite(fv)):
                raise FloatingPointError("threshold quantity is not finite on the sweep neighborhood")
            val = float(reducer(fv)) + (m - 1) / 2
            table[(r, z0)] = val
            ladder.append({"radius": r, "zeta0": z0, "value": val})
    diag = [{"radius": r, "zeta0": z0, "value": table[(r, z0)]} for r, z0 in zip(radii, zeta0s)]
    return ladder, diag


def _richardson(diag: list) -> float:
    if len(diag) < 2:
        return diag[-1]["value"]
    return 2 * diag[-1]["value"] - diag[-2]["value"]


def _threshold(op, chart, q, sweep, zeta, sub_expr, which, force_sweep=False) -> ThresholdEntry:
    lag = chart.lag
    z = _zeta_expr(lag, zeta)
    f = threshold_f(op, chart, z, sub_expr, q)
    homog = _is_homogeneous(f, lag, 0, q)
    if homog and not force_sweep:
        x, xi = lag.representative(q)
        env = dict(zip(lag.canonical.base, x))
        env.update(zip(lag.canonical.fiber, xi))
        val = float(np.real(evaluate(f, env))) + (op.m - 1) / 2
        return ThresholdEntry(val, True)
    sweep = sweep or SweepConfig()
    ladder, diag = _sweep(f, lag, q, sweep, z, np.min if which == "s0" else np.max, op.m)
    val = _richardson(diag)
    if homog:
        x, xi = lag.representative(q)
        env = dict(zip(lag.canonical.base, x))
        env.update(zip(lag.canonical.fiber, xi))
        val = float(np.real(evaluate(f, env))) + (op.m - 1) / 2
    return ThresholdEntry(val, homog, ladder, diag)


def s0(op, chart, q=(), sweep: SweepConfig | None = None, zeta=None, sub_expr=None, force_sweep=False) -> ThresholdEntry:
    """Lower threshold: pointwise when ``f`` is homogeneous, else the sup-inf ladder."""
    return _threshold(op, chart, q, sweep, zeta, sub_expr, "s0", force_sweep)


def s1_bound(op, chart, q=(), sweep: SweepConfig | None = None, zeta=None, sub_expr=None, force_sweep=False) -> ThresholdEntry:
    """Lower bound for the upper threshold (inf-sup form)."""
    return _threshold(op, chart, q, sweep, zeta, sub_expr, "s1", force_sweep)


@dataclass
class ThresholdReport:
    f_expr: str
    s0: float
    s1_lower_bound: float
    homogeneous: bool
    lambda0: float
    kind: str
    sweep: list = field(default_factory=list)

    def to_dict(self):
        return {
            "f_expr": self.f_expr,
            "s0": self.s0,
            "s1_lower_bound": self.s1_lower_bound,
            "homogeneous": self.homogeneous,
            "lambda0": self.lambda0,
            "kind": self.kind,
            "sweep": self.sweep,
        }


def threshold_report(op, chart, q=(), sweep: SweepConfig | None = None, with_sweep: bool = True) -> ThresholdReport:
    e0 = s0(op, chart, q, sweep, force_sweep=with_sweep)
    e1 = s1_bound(op, chart, q, sweep, force_sweep=with_sweep)
    cls = classify_symbol(op.principal, chart.lag, q, m=op.m)
    f = threshold_f(op, chart, q=q)
    rows = []
    for a, b in zip(e0.ladder, e1.ladder):
        rows.append({"radius": a["radius"], "zeta0": a["zeta0"], "inf_value": a["value"], "sup_value": b["value"]})
    return ThresholdReport(to_string(f), e0.value, e1.value, e0.homogeneous, cls.lambda0, cls.kind, rows)


# invariance


def random_degree_zero_factor(lag: LagrangianSpec, rng: np.random.Generator) -> SymExpr:
    """A positive function of base variables and fiber ratios."""
    canon = lag.canonical
    xin = Var(canon.fiber[-1])
    inputs = [Var(v) for v in canon.base] + [div(Var(v), xin) for v in canon.fiber[:-1]]
    terms = [Const(float(rng.uniform(-0.5, 0.5)))]
    for u in inputs:
        a, b, c = rng.uniform(0.2, 0.8), rng.uniform(0.5, 2.0), rng.uniform(-np.pi, np.pi)
        terms.append(mul(float(a), sin(add(mul(float(b), u), float(c)))))
    return exp(add(*terms))


def random_density(chart: ChartSpec, rng: np.random.Generator) -> SymExpr:
    terms = []
    for v in chart.base:
        a, b, c = rng.uniform(0.2, 1.0), rng.uniform(0.5, 2.0), rng.uniform(-np.pi, np.pi)
        terms.append(mul(float(a), sin(add(mul(float(b), Var(v)), float(c)))))
        terms.append(mul(float(rng.uniform(-0.5, 0.5)), Var(v)))
    return exp(add(*terms))


@dataclass
class InvarianceReport:
    base_s0: float
    base_kind: str
    cases: list
    ok: bool

    def to_dict(self):
        return {"base_s0": self.base_s0, "base_kind": self.base_kind, "cases": self.cases, "ok": self.ok}


def invariance_check(
    op: OperatorSpec,
    chart: RadialChart,
    q=(),
    n_rescale: int = 10,
    n_density: int = 5,
    seed: int = 0,
    tol: float = 1e-9,
    perturbation_tol: float = 1e-3,
    sweep: SweepConfig | None = None,
) -> InvarianceReport:
    """Recompute ``s0`` under the three admissible changes of choices.

    (a) ``zeta -> g zeta`` with random positive degree-0 ``g``; (b) density
    multiplied by a random positive function; (c) an order ``m - 2`` term
    added to the subprincipal representative, compared against the ladder
    extrapolation.
    """
    rng = np.random.default_rng(seed)
    lag = chart.lag
    base = s0(op, chart, q).value
    base_cls = classify_symbol(op.principal, lag, q, m=op.m)
    cases = []
    z = _zeta_expr(lag, None)
    for i in range(n_rescale):
        g = Const(2) if i == 0 else random_degree_zero_factor(lag, rng)
        zp = mul(g, z)
        val = s0(op, chart, q, zeta=zp).value
        cls = classify_symbol(op.principal, lag, q, zeta=zp, m=op.m)
        d = abs(val - base)
        cases.append(
            {"kind": "rescale", "factor": to_string(g), "s0": val, "delta": d, "class": cls.kind,
             "ok": bool(d < tol and cls.kind == base_cls.kind)}
        )
    for _ in range(n_density):
        F = random_density(op.chart, rng)
        op2 = op.with_density(mul(F, op.density))
        val = s0(op2, chart, q).value
        d = abs(val - base)
        cases.append({"kind": "density", "factor": to_string(F), "s0": val, "delta": d, "class": base_cls.kind,
                      "ok": bool(d < tol)})
    zf = Var(lag.canonical.fiber[-1])
    pert = mul(0.3, power(mul(lag.branch, zf), op.m - 2))
    sub2 = add(subprincipal_difference(op), pert)
    val = s0(op, chart, q, sweep=sweep, sub_expr=sub2).value
    d = abs(val - base)
    cases.append({"kind": "lower_order", "factor": to_string(pert), "s0": val, "delta": d, "class": base_cls.kind,
                  "ok": bool(d < perturbation_tol)})
    return InvarianceReport(base, base_cls.kind, cases, all(c["ok"] for c in cases))


def model_operator(c: complex, n: int = 1) -> OperatorSpec:
    """``x_n D_{x_n} - c`` on ``R^n`` with Lebesgue density."""
    chart = ChartSpec.standard(n)
    p = mul(Var(chart.base[-1]), Var(chart.fiber[-1]))
    return OperatorSpec(1, ((1, p), (0, Const(-complex(c)))), chart)


def f_in_conic(f: SymExpr, chart: RadialChart) -> SymExpr:
    return to_conic_chart(f, chart.conic)
