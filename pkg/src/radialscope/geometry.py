"""Conic coordinates, normal coordinates near a radial Lagrangian, blow-up.

The Lagrangian is the conormal bundle of ``{x_n = 0}`` on the fiber branch
``branch * xi_n > 0``. The conic chart uses ``y_i = x_i`` (``i < n``),
``z = x_n``, ``theta_i = xi_i / xi_n`` and ``zeta = branch * xi_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .symcore import (
    ChartError,
    ChartSpec,
    Const,
    ImplicitRoot,
    SymExpr,
    Var,
    VectorFieldSym,
    add,
    differentiate,
    div,
    equal_on_samples,
    evaluate,
    hamilton_field,
    homogeneity_degree,
    mul,
    neg,
    power,
    sub,
    substitute,
)

ROOT_Z = "_zroot"
ROOT_Y = "_yroot"


class DegeneracyError(ValueError):
    """The Lagrangian or radial point violates a nondegeneracy assumption."""


class DegenerateRadialPoint(DegeneracyError):
    """``lambda_0`` vanishes (to tolerance) at the requested point."""


class BlowupStructureError(ValueError):
    """The lifted field keeps a pole after division by ``r``."""


@dataclass(frozen=True)
class ConicChart:
    """Conic coordinates ``(y, z, theta, zeta)`` over a canonical chart.

    Args:
        n: base dimension.
        branch: +1 for the ``xi_n > 0`` branch, -1 for ``xi_n < 0``.
    """

    n: int
    branch: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")

    @property
    def canonical(self) -> ChartSpec:
        return ChartSpec.standard(self.n)

    @property
    def y(self) -> tuple:
        return tuple(f"y{i}" for i in range(1, self.n))

    @property
    def theta(self) -> tuple:
        return tuple(f"th{i}" for i in range(1, self.n))

    z = "z"
    zeta = "zeta"

    @property
    def spec(self) -> ChartSpec:
        return ChartSpec(self.y + (self.z,), self.theta + (self.zeta,), positive=(self.zeta,), canonical=False)

    @property
    def coords(self) -> tuple:
        return self.spec.coords

    def to_conic_map(self) -> dict:
        """Canonical names expressed in conic variables."""
        c = self.canonical
        s = self.branch
        out = {}
        for i, yname in enumerate(self.y):
            out[c.base[i]] = Var(yname)
            out[c.fiber[i]] = mul(s, Var(self.theta[i]), Var(self.zeta))
        out[c.base[-1]] = Var(self.z)
        out[c.fiber[-1]] = mul(s, Var(self.zeta))
        return out

    def to_canonical_map(self) -> dict:
        """Conic names expressed in canonical variables."""
        c = self.canonical
        xin = Var(c.fiber[-1])
        out = {}
        for i, yname in enumerate(self.y):
            out[yname] = Var(c.base[i])
            out[self.theta[i]] = div(Var(c.fiber[i]), xin)
        out[self.z] = Var(c.base[-1])
        out[self.zeta] = mul(self.branch, xin)
        return out

    def point_to_conic(self, x: Sequence[float], xi: Sequence[float]) -> dict:
        """Conic coordinates of ``(x, xi)``; the first axis indexes coordinates."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        zeta = self.branch * xi[-1]
        if np.any(zeta <= 0):
            raise ChartError("point lies outside the conic chart (fiber branch sign)")
        out = {}
        for i, yname in enumerate(self.y):
            out[yname] = x[i]
            out[self.theta[i]] = xi[i] / xi[-1]
        out[self.z] = x[-1]
        out[self.zeta] = zeta
        return out

    def point_to_canonical(self, pt: dict) -> tuple[np.ndarray, np.ndarray]:
        zeta = np.asarray(pt[self.zeta], dtype=float)
        if np.any(zeta <= 0):
            raise ChartError("zeta must be positive")
        xin = self.branch * zeta
        xs = [np.asarray(pt[y], dtype=float) for y in self.y] + [np.asarray(pt[self.z], dtype=float)]
        xis = [np.asarray(pt[t], dtype=float) * xin for t in self.theta] + [xin]
        return np.array(np.broadcast_arrays(*xs)), np.array(np.broadcast_arrays(*xis))

    def canonical_env(self, pt: dict) -> dict:
        x, xi = self.point_to_canonical(pt)
        c = self.canonical
        env = {name: x[i] for i, name in enumerate(c.base)}
        env.update({name: xi[i] for i, name in enumerate(c.fiber)})
        return env


def to_conic_chart(obj, chart: ConicChart):
    """Express a function or a vector field in conic coordinates.

    Functions are composed with the inverse substitution. A vector field on
    the canonical chart is pushed forward by the chain rule: the coefficient
    of ``d/dc`` is the field applied to the coordinate function ``c``.
    """
    if isinstance(obj, VectorFieldSym):
        canon = chart.canonical
        if tuple(obj.coords) != canon.coords:
            raise ChartError(f"field coordinates {obj.coords} are not {canon.coords}")
        inv = chart.to_canonical_map()
        fwd = chart.to_conic_map()
        coeffs = [substitute(obj.apply(inv[c]), fwd) for c in chart.coords]
        return VectorFieldSym(chart.coords, coeffs)
    return substitute(obj, chart.to_conic_map())


def conic_hamilton_field(p_conic: SymExpr, chart: ConicChart) -> VectorFieldSym:
    """Hamilton field of ``p`` written directly in conic coordinates.

    Closed form of the pushforward for the ``xi_n > 0`` branch::

        y_i'   = (1/zeta) dp/dtheta_i
        z'     = dp/dzeta - (1/zeta) sum theta_i dp/dtheta_i
        theta' = (1/zeta) (theta_i dp/dz - dp/dy_i)
        zeta'  = -dp/dz
    """
    if chart.branch != 1:
        raise ChartError("closed-form conic field is written for the positive branch")
    zeta = Var(chart.zeta)
    dz = differentiate(p_conic, chart.z)
    coeffs = {}
    for y, th in zip(chart.y, chart.theta):
        coeffs[y] = div(differentiate(p_conic, th), zeta)
        coeffs[th] = div(sub(mul(Var(th), dz), differentiate(p_conic, y)), zeta)
    coeffs[chart.z] = sub(
        differentiate(p_conic, chart.zeta),
        div(add(*(mul(Var(th), differentiate(p_conic, th)) for th in chart.theta)), zeta),
    )
    coeffs[chart.zeta] = neg(dz)
    return VectorFieldSym(chart.coords, [coeffs[c] for c in chart.coords])


@dataclass(frozen=True)
class LagrangianSpec:
    """The model Lagrangian: conormal bundle of ``{x_n = 0}``.

    Args:
        n: base dimension.
        branch: fiber branch sign, ``branch * xi_n > 0``.
    """

    n: int
    branch: int = 1

    @property
    def conic(self) -> ConicChart:
        return ConicChart(self.n, self.branch)

    @property
    def canonical(self) -> ChartSpec:
        return ChartSpec.standard(self.n)

    def sample(self, count: int, seed: int = 0, ybox: float = 0.5, zeta_box=(0.5, 2.0)) -> dict:
        """Random conic points on the Lagrangian (``z = 0``, ``theta = 0``)."""
        rng = np.random.default_rng(seed)
        pt = {y: rng.uniform(-ybox, ybox, count) for y in self.conic.y}
        pt.update({t: np.zeros(count) for t in self.conic.theta})
        pt[ConicChart.z] = np.zeros(count)
        pt[ConicChart.zeta] = np.exp(rng.uniform(np.log(zeta_box[0]), np.log(zeta_box[1]), count))
        return pt

    def representative(self, yq: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Canonical point ``x = (y_q, 0)``, ``xi = (0, ..., branch)`` over ``q``."""
        yq = tuple(yq) if len(yq) else (0.0,) * (self.n - 1)
        if len(yq) != self.n - 1:
            raise ValueError(f"q needs {self.n - 1} base coordinates")
        x = np.array(list(yq) + [0.0])
        xi = np.zeros(self.n)
        xi[-1] = self.branch
        return x, xi

    def check(self, p: SymExpr, count: int = 20, seed: int = 0, tol: float = 1e-9):
        """Confirm that ``p`` vanishes on the Lagrangian and ``dp`` does not."""
        env = self.conic.canonical_env(self.sample(count, seed))
        canon = self.canonical
        val = np.broadcast_to(evaluate(p, env), (count,))
        if np.max(np.abs(val)) > tol:
            raise DegeneracyError(f"symbol does not vanish on the Lagrangian (max |p| = {np.max(np.abs(val)):.3g})")
        grads = np.array([np.broadcast_to(evaluate(differentiate(p, v), env), (count,)) for v in canon.coords])
        if np.min(np.linalg.norm(grads, axis=0)) <= tol:
            raise DegeneracyError("dp vanishes at a point of the Lagrangian")


@dataclass(frozen=True)
class RadialChart:
    """Normal coordinates ``(eta0, alpha, beta, zeta)`` in conic variables."""

    lag: LagrangianSpec
    p: SymExpr
    m: float
    p_conic: SymExpr
    eta0: SymExpr
    alpha: tuple
    beta: tuple
    zeta: SymExpr
    lam: SymExpr
    field: VectorFieldSym
    sigma_root: SymExpr
    closed_form_root: bool = True

    @property
    def conic(self) -> ConicChart:
        return self.lag.conic

    @property
    def n(self) -> int:
        return self.lag.n

    def H(self, f: SymExpr) -> SymExpr:
        """``H_p f`` for ``f`` in conic variables."""
        return self.field.apply(f)

    def with_beta(self, beta: Sequence[SymExpr]) -> "RadialChart":
        return replace(self, beta=tuple(beta))

    def canonical(self, e: SymExpr) -> SymExpr:
        return substitute(e, self.conic.to_canonical_map())


def _is_affine_in(e: SymExpr, v: str, domain: dict) -> bool:
    d2 = differentiate(differentiate(e, v), v)
    if isinstance(d2, Const):
        return d2.value == 0
    return equal_on_samples(d2, 0, domain, n=40, seed=3, tol=1e-13).equal


def build_normal_coordinates(p: SymExpr, lag: LagrangianSpec, tol: float = 1e-10) -> RadialChart:
    """Normal coordinates adapted to ``p`` near the Lagrangian.

    ``eta0 = p / zeta^m`` and ``alpha = theta``; ``beta_i`` is ``y_i`` minus
    ``(dp/dtheta_i) / (dp/dz)`` evaluated on the characteristic set at
    ``zeta = 1``, where ``z = f(y, theta)`` solves ``p = 0``. When ``p`` is
    affine in ``z`` the root is written in closed form, otherwise it is an
    implicit-root node solved by Newton iteration from ``z = 0``.

    Raises:
        DegeneracyError: ``p`` is not homogeneous, does not vanish on the
            Lagrangian, or ``dp/dz`` vanishes there.
    """
    canon = lag.canonical
    conic = lag.conic
    m = homogeneity_degree(p, canon) if lag.branch > 0 else None
    if m is None:
        m = _branch_homogeneity(p, lag)
    if m is None:
        raise DegeneracyError("principal symbol is not homogeneous in the fiber variables")
    P = to_conic_chart(p, conic)
    zeta = Var(conic.zeta)
    field = to_conic_chart(hamilton_field(p, canon), conic)
    lam = neg(field.apply(zeta))
    P1 = substitute(P, {conic.zeta: 1})
    dz = differentiate(P1, conic.z)

    on_lag = lag.sample(25, seed=11)
    on_lag[conic.zeta] = np.ones(25)
    dz_vals = np.broadcast_to(evaluate(dz, on_lag), (25,))
    if np.min(np.abs(dz_vals)) <= tol:
        raise DegeneracyError("dp/dz vanishes on the Lagrangian; the characteristic set is not a graph over it")
    lag.check(p)

    box = {v: (-0.5, 0.5) for v in conic.y + conic.theta + (conic.z,)}
    if _is_affine_in(P1, conic.z, box):
        root = neg(div(substitute(P1, {conic.z: 0}), dz))
        closed = True
    else:
        root = ImplicitRoot(substitute(P1, {conic.z: Var(ROOT_Z)}), ROOT_Z, Const(0))
        closed = False
    beta = []
    for y, th in zip(conic.y, conic.theta):
        ratio = div(differentiate(P1, th), dz)
        beta.append(sub(Var(y), substitute(ratio, {conic.z: root})))
    return RadialChart(
        lag=lag,
        p=p,
        m=m,
        p_conic=P,
        eta0=div(P, power(zeta, m)),
        alpha=tuple(Var(th) for th in conic.theta),
        beta=tuple(beta),
        zeta=zeta,
        lam=lam,
        field=field,
        sigma_root=root,
        closed_form_root=closed,
    )


def _branch_homogeneity(p, lag: LagrangianSpec):
    """Homogeneity tested on the working branch only (fibers of sign ``branch``)."""
    canon = lag.canonical
    box = (0.5, 2.0) if lag.branch > 0 else (-2.0, -0.5)
    # the euler test only needs the branch sign on xi_n; other fibers may be any sign
    rng = np.random.default_rng(5)
    env = {v: rng.uniform(-1, 1, 40) for v in canon.base}
    env.update({v: rng.uniform(-1, 1, 40) for v in canon.fiber[:-1]})
    env[canon.fiber[-1]] = rng.uniform(*box, 40)
    val = np.broadcast_to(evaluate(p, env), (40,))
    scaled = {k: (v * 2.0 if k in canon.fiber else v) for k, v in env.items()}
    val2 = np.broadcast_to(evaluate(p, scaled), (40,))
    mask = np.abs(val) > 1e-6 * np.max(np.abs(val))
    if not np.any(mask):
        return None
    ratio = val2[mask] / val[mask]
    if np.max(np.abs(np.imag(ratio))) > 1e-9 or np.any(np.real(ratio) <= 0):
        return None
    k = float(np.log2(np.median(np.real(ratio))))
    kr = round(k)
    if abs(k - kr) < 1e-9 and np.allclose(val2, 2.0**kr * val, rtol=1e-10, atol=1e-12):
        return kr
    return None


@dataclass
class EigenReport:
    ok: bool
    max_residual: float
    residuals: dict
    first_violation: tuple | None = None

    def to_dict(self):
        return {
            "ok": self.ok,
            "max_residual": self.max_residual,
            "residuals": self.residuals,
            "first_violation": self.first_violation,
        }


def verify_eigen_relations(
    chart: RadialChart, p: SymExpr | None = None, tol: float = 1e-9, count: int = 50, seed: int = 0
) -> EigenReport:
    """Check ``H_p alpha_i - (lambda/zeta) alpha_i`` and ``H_p beta_i`` vanish to second order.

    Each relation is restricted to the characteristic set by ``z -> f(y, theta)``
    and its value together with its first derivatives in ``y``, ``theta`` and
    ``zeta`` is evaluated at random Lagrangian points.
    """
    if p is not None and p != chart.p:
        chart = replace(build_normal_coordinates(p, chart.lag), beta=chart.beta)
    conic = chart.conic
    pts = chart.lag.sample(count, seed)
    rel = {}
    for i, a in enumerate(chart.alpha):
        rel[f"alpha{i + 1}"] = sub(chart.H(a), mul(div(chart.lam, chart.zeta), a))
    for i, b in enumerate(chart.beta):
        rel[f"beta{i + 1}"] = chart.H(b)
    residuals = {}
    first = None
    worst = 0.0
    free = conic.y + conic.theta + (conic.zeta,)
    for name, expr in rel.items():
        restricted = substitute(expr, {conic.z: chart.sigma_root})
        vals = [restricted] + [differentiate(restricted, v) for v in free]
        labels = ["value"] + [f"d/d{v}" for v in free]
        rmax = 0.0
        for lab, e in zip(labels, vals):
            v = np.abs(np.broadcast_to(evaluate(e, pts), (count,)))
            if not np.all(np.isfinite(v)):
                v = np.where(np.isfinite(v), v, np.inf)
            j = int(np.argmax(v))
            if v[j] > rmax:
                rmax = float(v[j])
            if v[j] > tol and first is None:
                first = (name, lab, {k: float(np.asarray(val)[j]) for k, val in pts.items()})
        residuals[name] = rmax
        worst = max(worst, rmax)
    return EigenReport(first is None, worst, residuals, first)


def radiality_residual(p: SymExpr, x: Sequence[float], xi: Sequence[float], chart: ChartSpec | None = None) -> float:
    """Distance of ``H_p`` from the radial direction at ``(x, xi)``.

    ``|dp/dxi| + |dp/dx - ((dp/dx . xi)/|xi|^2) xi|``; zero exactly when
    ``H_p`` is a multiple of ``xi . d/dxi``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    chart = chart or ChartSpec.standard(len(x))
    nrm2 = float(xi @ xi)
    if nrm2 == 0.0:
        raise ValueError("radiality is undefined on the zero section")
    env = dict(zip(chart.base, x))
    env.update(zip(chart.fiber, xi))
    dxi = np.array([complex(evaluate(differentiate(p, v), env)) for v in chart.fiber]).real
    dx = np.array([complex(evaluate(differentiate(p, v), env)) for v in chart.base]).real
    perp = dx - (dx @ xi) / nrm2 * xi
    return float(np.linalg.norm(dxi) + np.linalg.norm(perp))


@dataclass(frozen=True)
class Classification:
    kind: str
    lambda0: float

    def to_dict(self):
        return {"kind": self.kind, "lambda0": self.lambda0}


def lambda0_value(p: SymExpr, lag: LagrangianSpec, q: Sequence[float] = (), zeta: SymExpr | None = None, m=None) -> float:
    """``lambda / zeta^m`` at the representative of ``q``.

    Args:
        p: principal symbol in canonical variables.
        lag: Lagrangian description.
        q: base coordinates ``y_q`` of the radial point.
        zeta: optional fiber scale (canonical variables, homogeneous of
            degree 1); defaults to ``branch * xi_n``.
        m: order; computed when omitted.
    """
    canon = lag.canonical
    if zeta is None:
        zeta = mul(lag.branch, Var(canon.fiber[-1]))
    if m is None:
        m = homogeneity_degree(p, canon) or _branch_homogeneity(p, lag)
        if m is None:
            raise DegeneracyError("principal symbol is not homogeneous")
    lam = neg(hamilton_field(p, canon).apply(zeta))
    x, xi = lag.representative(q)
    env = dict(zip(canon.base, x))
    env.update(zip(canon.fiber, xi))
    return float(np.real(evaluate(div(lam, power(zeta, m)), env)))


def classify_symbol(p, lag, q=(), zeta=None, tol: float = 1e-10, m=None) -> Classification:
    lam0 = lambda0_value(p, lag, q, zeta, m)
    if abs(lam0) <= tol:
        raise DegenerateRadialPoint(f"lambda0 = {lam0:.3g} at q; the radial point is degenerate")
    return Classification("sink" if lam0 < 0 else "source", lam0)


def sink_source_classify(chart: RadialChart, q: Sequence[float] = (), zeta: SymExpr | None = None, tol: float = 1e-10) -> Classification:
    """Sink when ``lambda_0 < 0``, source when ``lambda_0 > 0``."""
    return classify_symbol(chart.p, chart.lag, q, zeta, tol, chart.m)


def _cosphere_pointmap(chart: RadialChart):
    """Conic coordinates on ``{p = 0, zeta = 1}`` as expressions in ``a1.., b1..``."""
    conic = chart.conic
    k = chart.n - 1
    if k == 0:
        raise ValueError("the cosphere picture near the Lagrangian needs n >= 2")
    a_names = tuple(f"a{i}" for i in range(1, k + 1))
    b_names = tuple(f"b{i}" for i in range(1, k + 1))
    th_sub = {th: Var(a) for th, a in zip(conic.theta, a_names)}
    if all(b == Var(y) for b, y in zip(chart.beta, conic.y)):
        y_of = {y: Var(b) for y, b in zip(conic.y, b_names)}
    elif k == 1:
        eq = sub(substitute(chart.beta[0], {**th_sub, conic.y[0]: Var(ROOT_Y)}), Var(b_names[0]))
        y_of = {conic.y[0]: ImplicitRoot(eq, ROOT_Y, Var(b_names[0]))}
    else:
        raise NotImplementedError("inverting beta for y is only implemented for n = 2")
    z_expr = substitute(chart.sigma_root, {**th_sub, **y_of})
    return a_names, b_names, {**th_sub, **y_of, conic.z: z_expr, conic.zeta: Const(1)}


def cosphere_field(chart: RadialChart) -> tuple[VectorFieldSym, tuple, tuple]:
    """``W_p`` on the characteristic set at ``zeta = 1`` in ``(alpha, beta)``.

    Returns the field over variables ``a1.., b1..`` together with those names.
    ``y`` is recovered from ``beta`` by an implicit-root node in dimension 2;
    in higher dimension only charts with ``beta = y`` are supported.
    """
    a_names, b_names, pointmap = _cosphere_pointmap(chart)
    coeffs = [substitute(chart.H(a), pointmap) for a in chart.alpha]
    coeffs += [substitute(chart.H(b), pointmap) for b in chart.beta]
    return VectorFieldSym(a_names + b_names, coeffs), a_names, b_names


def cosphere_point(chart: RadialChart, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """Canonical ``(x, xi)`` of the characteristic point with given ``(alpha, beta)`` at ``zeta = 1``."""
    a_names, b_names, pointmap = _cosphere_pointmap(chart)
    env = dict(zip(a_names, np.atleast_1d(np.asarray(alpha, dtype=float))))
    env.update(zip(b_names, np.atleast_1d(np.asarray(beta, dtype=float))))
    pt = {c: float(np.real(evaluate(e, env))) for c, e in pointmap.items()}
    return chart.conic.point_to_canonical(pt)


@dataclass(frozen=True)
class BlowupChart:
    """Polar coordinates ``alpha = r * omega`` around ``alpha = 0``.

    ``omega`` is a point of the unit sphere in ``R^k``. It is carried as ``k``
    ambient coordinates ``w1..wk``; samples on the sphere come from two
    stereographic patches (``k >= 2``) or the two points ``+-1`` (``k = 1``).
    """

    alpha: tuple
    beta: tuple

    @property
    def k(self) -> int:
        return len(self.alpha)

    @property
    def omega(self) -> tuple:
        return tuple(f"w{i}" for i in range(1, self.k + 1))

    r = "r"

    def blowdown(self, r, omega, beta):
        return np.asarray(r) * np.asarray(omega), np.asarray(beta)

    def sphere_samples(self, count: int, seed: int = 0) -> np.ndarray:
        """Points of the unit sphere, shape ``(k, N)``."""
        if self.k == 1:
            return np.array([[1.0, -1.0]])
        rng = np.random.default_rng(seed)
        half = max(count // 2, 1)
        u = rng.uniform(-1, 1, (self.k - 1, half))
        u /= np.maximum(1.0, np.linalg.norm(u, axis=0))
        s = np.sum(u * u, axis=0)
        north = np.vstack([2 * u, s - 1]) / (s + 1)
        south = north.copy()
        south[-1] *= -1
        return np.hstack([north, south])


@dataclass
class BlowupLift:
    chart: BlowupChart
    v_r: SymExpr
    v_omega: tuple
    v_beta: tuple
    front_r: SymExpr
    front_omega: tuple
    front_beta: tuple
    front_min_r: float
    front_max_r: float
    extra: dict = field(default_factory=dict)

    def r_component(self, r, omega, beta) -> np.ndarray:
        """``V_perp`` r-component; the front-face limit is used at ``r = 0``."""
        env = self._env(r, omega, beta)
        r = np.asarray(env[BlowupChart.r])
        with np.errstate(all="ignore"):
            inner = np.broadcast_to(evaluate(self.v_r, env), r.shape)
        front = np.broadcast_to(evaluate(self.front_r, env), r.shape)
        return np.real(np.where(r > 0, inner, front))

    def _env(self, r, omega, beta):
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        beta = np.atleast_2d(np.asarray(beta, dtype=float))
        env = {BlowupChart.r: np.asarray(r, dtype=float)}
        env.update({w: omega[i] for i, w in enumerate(self.chart.omega)})
        env.update({b: beta[i] for i, b in enumerate(self.chart.beta)})
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
        return {k: np.broadcast_to(v, shape) for k, v in env.items()}


def blowup_lift(
    field: VectorFieldSym,
    chart: BlowupChart,
    beta_box: float = 0.5,
    count: int = 64,
    seed: int = 0,
    tol: float = 1e-9,
) -> BlowupLift:
    """Lift a field on ``(alpha, beta)`` to ``(r, omega, beta)`` and divide by ``r``.

    With ``A`` the alpha components and ``B`` the beta components, the lift
    divided by ``r`` has components ``(A.omega)/r`` along ``r``,
    ``(A - (A.omega) omega)/r^2`` along the sphere and ``B/r`` along ``beta``.
    Their limits at ``r = 0`` are computed from ``r``-derivatives.

    Raises:
        BlowupStructureError: the field does not vanish on ``alpha = 0`` or its
            angular part does not vanish to second order, so a pole remains.
    """
    r = Var(BlowupChart.r)
    ws = [Var(w) for w in chart.omega]
    polar = {a: mul(r, w) for a, w in zip(chart.alpha, ws)}
    A = [substitute(field.component(a), polar) for a in chart.alpha]
    B = [substitute(field.component(b), polar) for b in chart.beta]
    Aw = add(*(mul(a, w) for a, w in zip(A, ws)))
    N = [sub(a, mul(Aw, w)) for a, w in zip(A, ws)]

    omegas = chart.sphere_samples(count, seed)
    rng = np.random.default_rng(seed + 1)
    nb = omegas.shape[1]
    reps = max(1, count // nb)
    om = np.repeat(omegas, reps, axis=1)
    npts = om.shape[1]
    env = {BlowupChart.r: np.zeros(npts)}
    env.update({w: om[i] for i, w in enumerate(chart.omega)})
    env.update({b: rng.uniform(-beta_box, beta_box, npts) for b in chart.beta})

    def at0(e):
        return np.abs(np.broadcast_to(evaluate(e, env), (npts,)))

    for name, e in list(zip(chart.alpha, A)) + list(zip(chart.beta, B)):
        if np.max(at0(e)) > tol:
            raise BlowupStructureError(f"component {name} does not vanish on alpha = 0; dividing by r leaves a pole")
    dN = [differentiate(x, BlowupChart.r) for x in N]
    for w, e in zip(chart.omega, dN):
        if np.max(at0(e)) > tol:
            raise BlowupStructureError(f"angular component {w} is not second order at r = 0")

    front_r = substitute(differentiate(Aw, BlowupChart.r), {BlowupChart.r: 0})
    front_w = tuple(substitute(mul(0.5, differentiate(d, BlowupChart.r)), {BlowupChart.r: 0}) for d in dN)
    front_b = tuple(substitute(differentiate(b, BlowupChart.r), {BlowupChart.r: 0}) for b in B)
    fr = np.real(np.broadcast_to(evaluate(front_r, env), (npts,)))
    return BlowupLift(
        chart=chart,
        v_r=div(Aw, r),
        v_omega=tuple(div(x, power(r, 2)) for x in N),
        v_beta=tuple(div(b, r) for b in B),
        front_r=front_r,
        front_omega=front_w,
        front_beta=front_b,
        front_min_r=float(np.min(fr)),
        front_max_r=float(np.max(fr)),
    )
