"""Commutant symbol families and their verification.

Two constructions are provided. ``below`` proves regularity for ``s`` below
the lower threshold and ``above`` for ``s`` above the upper one. Each one
builds ``b_t``, ``g1_t``, ``g2_t``, ``e_t`` and ``h_t`` from

* the regularizer ``rho_t(zeta)`` (a family in the variable ``t``),
* ``rho_hat(zeta) = 1 - chi(zeta)`` switching on above ``zeta_0``,
* ``chi0 = chi(eta0^2)``, ``chi1 = chi(eta1)``, ``chi2 = chi(eta2)`` with
  ``eta1 = |beta|^2 + C |alpha|^2`` and ``eta2 = |alpha|^2``.

Square roots are split analytically so nothing is formed as ``0/0``. The
relation ``H rho = -lambda rho'`` gives
``rho H rho + a rho^2 = rho^2 (a - lambda rho'/rho)``, and the square root of
``-chi chi'`` has its own evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import RadialChart, sink_source_classify
from .symcore import (
    Const,
    SymExpr,
    Var,
    add,
    cutoff,
    div,
    evaluate,
    mul,
    power,
    rsqrtp,
    sqrtp,
    sub,
    substitute,
)

T_VAR = "t"
BELOW = "below"
ABOVE = "above"
# inner and outer edges of the profile behind chi-hat(u) = chi(u^2)
HAT_EPS, HAT_T = 1.0, 4.0


class SignViolation(ValueError):
    """A radicand is negative at a point of the symbol support."""

    def __init__(self, radicand: str, point: dict, value: float, t: float):
        super().__init__(f"radicand {radicand} = {value:.3g} < 0 at t = {t} and {point}")
        self.radicand = radicand
        self.point = point
        self.value = value
        self.t = t


class SearchExhausted(ValueError):
    """No ``(C, T)`` pair in the configured ladders passes the grid tests."""

    def __init__(self, tried):
        super().__init__(f"no cutoff parameters passed after {len(tried)} candidates")
        self.tried = tried


@dataclass(frozen=True)
class RegularizerSpec:
    """Parameters of ``rho_t``.

    Args:
        case: ``"below"`` or ``"above"``.
        s: Sobolev order.
        m: operator order.
        s1: target order reached as ``t`` grows (``above`` only, ``s1 < s``).
        t: regularization parameter used by :func:`make_rho`.
    """

    case: str
    s: float
    m: float
    s1: float | None = None
    t: float = 0.0

    def __post_init__(self):
        if self.case not in (BELOW, ABOVE):
            raise ValueError(f"unknown case {self.case!r}")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if self.case == ABOVE:
            if self.s1 is None:
                raise ValueError("the above case needs s1")
            if not self.s > self.s1:
                raise ValueError("the above case needs s > s1")

    @property
    def k(self) -> float:
        return (2 * self.s - self.m + 1) / 2


def rho_family(spec: RegularizerSpec, zeta: SymExpr | None = None) -> tuple[SymExpr, SymExpr]:
    """``rho_t`` and its logarithmic ``zeta``-derivative, with ``t`` symbolic."""
    z = zeta if zeta is not None else Var("zeta")
    t = Var(T_VAR)
    k = spec.k
    if spec.case == BELOW:
        hat = cutoff(HAT_EPS, HAT_T)
        u2 = power(mul(t, z), 2)
        rho = mul(power(z, k), hat(u2))
        logd = add(div(k, z), mul(2, power(t, 2), z, hat.logderiv(u2)))
    else:
        d = spec.s1 - spec.s
        one_tz = add(1, mul(t, z))
        rho = mul(power(z, k), power(one_tz, d))
        logd = add(div(k, z), div(mul(d, t), one_tz))
    return rho, logd


def make_rho(spec: RegularizerSpec) -> SymExpr:
    """``rho_t(zeta)`` at ``t = spec.t``."""
    rho, _ = rho_family(spec)
    return substitute(rho, {T_VAR: spec.t})


@dataclass(frozen=True)
class CutoffSpec:
    """Cutoff parameters.

    Args:
        C: weight of ``|alpha|^2`` in ``eta1`` (negative below, positive above).
        T: outer edge of the profile used for ``chi1`` and ``chi2``.
        T0: outer edge for ``chi0``; defaults to ``T``.
        eps_ratio: inner edge as a fraction of the outer edge.
        zeta0: ``rho_hat`` rises from 0 at ``zeta0`` to 1 at ``zeta0 + 1``.
    """

    C: float
    T: float
    T0: float | None = None
    eps_ratio: float = 0.1
    zeta0: float = 1.0

    @property
    def t0(self) -> float:
        return self.T if self.T0 is None else self.T0

    def family(self, outer: float):
        return cutoff(self.eps_ratio * outer, outer)

    def to_dict(self):
        return {"C": self.C, "T": self.T, "T0": self.t0, "eps_ratio": self.eps_ratio, "zeta0": self.zeta0}


@dataclass
class Cutoffs:
    spec: CutoffSpec
    eta0: SymExpr
    eta1: SymExpr
    eta2: SymExpr
    chi0: SymExpr
    chi1: SymExpr
    chi2: SymExpr
    tried: list = field(default_factory=list)


def build_cutoffs(chart: RadialChart, spec: CutoffSpec) -> Cutoffs:
    eta2 = add(*(power(a, 2) for a in chart.alpha)) if chart.alpha else Const(0)
    bsq = add(*(power(b, 2) for b in chart.beta)) if chart.beta else Const(0)
    eta1 = add(bsq, mul(spec.C, eta2))
    f12 = spec.family(spec.T)
    f0 = spec.family(spec.t0)
    return Cutoffs(spec, chart.eta0, eta1, eta2, f0(power(chart.eta0, 2)), f12(eta1), f12(eta2))


@dataclass
class CommutantGrid:
    """Tensor grid in conic coordinates around ``q``.

    Args:
        half_width: half side of the box in ``y - y_q``, ``z`` and ``theta``.
        counts: points per coordinate for ``y``, ``z``, ``theta`` and ``zeta``.
        zeta_min: smallest ``zeta``; ``None`` means ``zeta0 + 1``.
        zeta_max: largest ``zeta`` (log spaced).
    """

    half_width: float = 0.6
    counts: tuple = (10, 10, 10, 10)
    zeta_min: float | None = None
    zeta_max: float = 1e3

    def points(self, chart: RadialChart, zeta0: float, q: Sequence[float] = ()) -> dict:
        conic = chart.conic
        yq = list(q) if len(q) else [0.0] * len(conic.y)
        ny, nz, nth, nzeta = self.counts
        h = self.half_width
        zmin = self.zeta_min if self.zeta_min is not None else zeta0 + 1
        axes = [np.linspace(c - h, c + h, ny) for c in yq]
        axes += [np.linspace(-h, h, nz)]
        axes += [np.linspace(-h, h, nth) for _ in conic.theta]
        axes += [np.geomspace(zmin, self.zeta_max, nzeta)]
        names = conic.y + (conic.z,) + conic.theta + (conic.zeta,)
        mesh = np.meshgrid(*axes, indexing="ij")
        return {k: v.ravel() for k, v in zip(names, mesh)}

    def shell_mask(self, chart: RadialChart, pts: dict, q=()) -> np.ndarray:
        conic = chart.conic
        yq = list(q) if len(q) else [0.0] * len(conic.y)
        h = self.half_width * (1 - 1e-9)
        mask = np.abs(pts[conic.z]) >= h
        for y, c in zip(conic.y, yq):
            mask |= np.abs(pts[y] - c) >= h
        for th in conic.theta:
            mask |= np.abs(pts[th]) >= h
        return mask


@dataclass
class SearchConfig:
    C_magnitudes: tuple = (1.0, 0.5, 2.0, 0.25, 4.0)
    T_values: tuple = (0.1, 0.05, 0.2, 0.025)
    eps_ratio: float = 0.1
    zeta0: float = 1.0
    margin: float = 1e-10


def _eval(e, env, n):
    return np.broadcast_to(evaluate(e, env), (n,))


def _sign_lambda(chart: RadialChart, q) -> int:
    return 1 if sink_source_classify(chart, q).lambda0 > 0 else -1


def _check_candidate(chart, cut: Cutoffs, case, sgn, pts, shell, margin) -> tuple[bool, str]:
    n = len(next(iter(pts.values())))
    support = np.abs(_eval(mul(cut.chi0, cut.chi1, cut.chi2) if case == BELOW else mul(cut.chi0, cut.chi1), pts, n))
    if np.any(support[shell] > 1e-12):
        return False, "support reaches the edge of the working box"
    inside = support > 0
    if not np.any(inside):
        return False, "empty support"
    h1 = np.real(_eval(chart.H(cut.eta1), pts, n))[inside]
    direction = -sgn if case == BELOW else sgn
    a2 = np.real(_eval(cut.eta2, pts, n))[inside]
    scale = max(1.0, float(np.max(np.abs(h1))))
    # strict where alpha != 0, weak on alpha = 0
    if np.any(direction * h1 < margin * scale * a2 - margin * scale * (a2 == 0)):
        return False, "sign condition on H_p eta1 fails"
    return True, "ok"


def make_cutoffs(
    chart: RadialChart,
    case: str,
    search: SearchConfig | None = None,
    grid: CommutantGrid | None = None,
    q: Sequence[float] = (),
) -> Cutoffs:
    """Search ``C`` and ``T`` so ``H_p eta1`` has the sign the case requires.

    Below: the sign opposite to ``lambda``; above: the sign of ``lambda``.
    Each candidate must also keep the cutoff support inside the grid box.

    Raises:
        SearchExhausted: no candidate passes.
    """
    search = search or SearchConfig()
    grid = grid or CommutantGrid()
    sgn = _sign_lambda(chart, q)
    pts = grid.points(chart, search.zeta0, q)
    shell = grid.shell_mask(chart, pts, q)
    tried = []
    csign = -1.0 if case == BELOW else 1.0
    for T in search.T_values:
        for mag in search.C_magnitudes:
            spec = CutoffSpec(csign * mag, T, eps_ratio=search.eps_ratio, zeta0=search.zeta0)
            cut = build_cutoffs(chart, spec)
            ok, why = _check_candidate(chart, cut, case, sgn, pts, shell, search.margin)
            tried.append({"C": spec.C, "T": T, "ok": ok, "reason": why})
            if ok:
                cut.tried = tried
                return cut
    raise SearchExhausted(tried)


@dataclass
class CommutantSymbols:
    case: str
    sign: int
    sign_lambda: int
    reg: RegularizerSpec
    cutoffs: Cutoffs
    chart: RadialChart
    subprincipal: SymExpr
    rho: SymExpr
    rho_hat: SymExpr
    b: SymExpr
    g1: SymExpr
    g2: SymExpr
    e: SymExpr
    h: SymExpr
    radicands: dict

    @property
    def eta0(self):
        return self.cutoffs.eta0

    @property
    def eta1(self):
        return self.cutoffs.eta1

    @property
    def eta2(self):
        return self.cutoffs.eta2

    def identity_sides(self) -> tuple[SymExpr, SymExpr]:
        """``(1/2) H_p b^2 + a b^2`` and ``sign (g1^2 + g2^2) + e``."""
        b2 = power(self.b, 2)
        lhs = add(mul(0.5, self.chart.H(b2)), mul(self.subprincipal, b2))
        rhs = add(mul(self.sign, add(power(self.g1, 2), power(self.g2, 2))), self.e)
        return lhs, rhs


def build_symbols(
    chart: RadialChart,
    spec: RegularizerSpec,
    cutoffs: Cutoffs,
    subprincipal: SymExpr,
    grid: CommutantGrid | None = None,
    t_values: Sequence[float] | None = None,
    q: Sequence[float] = (),
    sign_lambda: int | None = None,
    check: bool = True,
) -> CommutantSymbols:
    """Assemble ``b``, ``g1``, ``g2``, ``e`` and ``h`` for the chosen case.

    Args:
        chart: normal coordinates.
        spec: regularizer parameters.
        cutoffs: result of :func:`make_cutoffs` (or :func:`build_cutoffs`).
        subprincipal: subprincipal difference in conic variables.
        grid: grid on which radicand signs are checked.
        t_values: ``t`` ladder for the sign check; defaults to ``0, 0.1, ..., 1``.
        q: base point of the radial point.
        sign_lambda: override of the sign of ``lambda`` (negative controls).
        check: run the radicand sign check.

    Raises:
        SignViolation: a radicand is negative where its prefactor is nonzero.
    """
    sgn = sign_lambda if sign_lambda is not None else _sign_lambda(chart, q)
    cs = cutoffs.spec
    zeta = chart.zeta
    lam = chart.lam
    rho, logd = rho_family(spec, zeta)
    rho_hat = sub(1, cutoff(cs.zeta0, cs.zeta0 + 1)(zeta))
    chi0, chi1, chi2 = cutoffs.chi0, cutoffs.chi1, cutoffs.chi2
    f12 = cs.family(cs.T)
    sq1 = f12.sqrt_neg_product(cutoffs.eta1)
    h_eta1 = chart.H(cutoffs.eta1)
    a = subprincipal
    core = sub(a, mul(lam, logd))
    if spec.case == BELOW:
        omega = mul(sgn, core)
        r1 = mul(-sgn, h_eta1)
        pre2 = mul(rho_hat, chi1, chi2, chi0, rho)
        b = pre2
        g1 = mul(rho_hat, chi2, chi0, rho, sq1, sqrtp(r1))
        g2 = mul(pre2, sqrtp(omega))
        rho2 = power(rho, 2)
        e = add(
            mul(power(rho_hat, 2), power(chi1, 2), power(chi0, 2), rho2, chi2, chart.H(chi2)),
            mul(power(rho_hat, 2), power(chi1, 2), power(chi2, 2), rho2, chi0, chart.H(chi0)),
            mul(power(chi1, 2), power(chi2, 2), power(chi0, 2), rho2, rho_hat, chart.H(rho_hat)),
        )
        sign = sgn
        pre1 = mul(rho_hat, chi2, chi0, rho, sq1)
    else:
        omega = mul(-sgn, core)
        r1 = mul(sgn, h_eta1)
        pre2 = mul(rho_hat, chi1, chi0, rho)
        b = pre2
        g1 = mul(rho_hat, chi0, rho, sq1, sqrtp(r1))
        g2 = mul(pre2, sqrtp(omega))
        e = mul(power(rho_hat, 2), power(chi1, 2), power(rho, 2), chi0, chart.H(chi0))
        sign = -sgn
        pre1 = mul(rho_hat, chi0, rho, sq1)
    h = mul(pre2, rsqrtp(omega))
    sym = CommutantSymbols(
        case=spec.case,
        sign=sign,
        sign_lambda=sgn,
        reg=spec,
        cutoffs=cutoffs,
        chart=chart,
        subprincipal=a,
        rho=rho,
        rho_hat=rho_hat,
        b=b,
        g1=g1,
        g2=g2,
        e=e,
        h=h,
        radicands={"g1": (pre1, r1), "g2": (pre2, omega)},
    )
    if check:
        grid = grid or CommutantGrid()
        t_values = T_LADDER if t_values is None else t_values
        pts = grid.points(chart, cs.zeta0, q)
        check_radicands(sym, pts, t_values)
    return sym


T_LADDER = tuple(round(0.1 * i, 10) for i in range(11))


def check_radicands(sym: CommutantSymbols, pts: dict, t_values: Sequence[float], rel_margin: float = 1e-10):
    """Raise :class:`SignViolation` at the first negative radicand on the support."""
    n = len(next(iter(pts.values())))
    for t in t_values:
        env = dict(pts)
        env[T_VAR] = np.full(n, float(t))
        for name, (pre, rad) in sym.radicands.items():
            pv = np.abs(_eval(pre, env, n))
            rv = np.real(_eval(rad, env, n))
            on = pv > 0
            if not np.any(on):
                continue
            scale = max(1.0, float(np.max(np.abs(rv[on]))))
            bad = on & (rv < -rel_margin * scale)
            if np.any(bad):
                i = int(np.argmax(bad))
                point = {k: float(v[i]) for k, v in pts.items()}
                raise SignViolation(name, point, float(rv[i]), float(t))


@dataclass
class IdentityReport:
    per_t: list
    max_residual: float
    transition_residual: float | None
    ok: bool
    tol: float

    def to_dict(self):
        return {
            "per_t": self.per_t,
            "max_residual": self.max_residual,
            "transition_residual": self.transition_residual,
            "ok": self.ok,
            "tol": self.tol,
        }


def _relative_residual(sym: CommutantSymbols, env: dict, n: int) -> float:
    lhs, rhs = sym.identity_sides()
    L = _eval(lhs, env, n)
    R = _eval(rhs, env, n)
    parts = [
        _eval(mul(sym.sign, power(sym.g1, 2)), env, n),
        _eval(mul(sym.sign, power(sym.g2, 2)), env, n),
        _eval(sym.e, env, n),
        L,
    ]
    scale = max(float(np.max(np.abs(p))) for p in parts)
    if not np.all(np.isfinite(L)) or not np.all(np.isfinite(R)):
        return float("inf")
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(L - R)) / scale)


def verify_commutator_identity(
    sym: CommutantSymbols,
    grid: CommutantGrid | None = None,
    t_values: Sequence[float] = T_LADDER,
    tol: float = 1e-8,
    q: Sequence[float] = (),
) -> IdentityReport:
    """Relative residual of ``(1/2) H_p b^2 + a b^2 = +-(g1^2 + g2^2) + e`` per ``t``.

    The grid starts at ``zeta0 + 1`` where ``rho_hat`` is identically 1; the
    residual on the transition band ``[zeta0, zeta0 + 1]`` is reported
    separately for information.
    """
    grid = grid or CommutantGrid()
    zeta0 = sym.cutoffs.spec.zeta0
    pts = grid.points(sym.chart, zeta0, q)
    n = len(next(iter(pts.values())))
    per_t = []
    for t in t_values:
        env = dict(pts)
        env[T_VAR] = np.full(n, float(t))
        per_t.append({"t": float(t), "residual": _relative_residual(sym, env, n)})
    band = CommutantGrid(grid.half_width, grid.counts[:-1] + (5,), zeta0, zeta0 + 1)
    bpts = band.points(sym.chart, zeta0, q)
    nb = len(next(iter(bpts.values())))
    benv = dict(bpts)
    benv[T_VAR] = np.zeros(nb)
    trans = _relative_residual(sym, benv, nb)
    worst = max(r["residual"] for r in per_t)
    return IdentityReport(per_t, worst, trans, bool(worst < tol), tol)


@dataclass
class SupportReport:
    conditions: dict
    ok: bool

    def failed(self) -> list:
        return [k for k, v in self.conditions.items() if not v["ok"]]

    def to_dict(self):
        return {"conditions": self.conditions, "ok": self.ok}


def verify_support_conditions(
    sym: CommutantSymbols,
    grid: CommutantGrid | None = None,
    q: Sequence[float] = (),
    tol: float = 1e-12,
) -> SupportReport:
    """Grid checks of the disjointness and compactness requirements.

    * ``chi1 chi2 H_p chi0`` vanishes on the characteristic set (``chi2``
      dropped in the above case);
    * ``chi0 chi1 H_p chi2`` vanishes on the Lagrangian (below case);
    * the cutoff product vanishes on the boundary shell of the working box;
    * ``g2`` at ``t = 0`` is nonzero over ``q``.
    """
    grid = grid or CommutantGrid()
    chart = sym.chart
    conic = chart.conic
    cut = sym.cutoffs
    zeta0 = cut.spec.zeta0
    pts = grid.points(chart, zeta0, q)
    n = len(next(iter(pts.values())))
    conds = {}

    sig = dict(pts)
    sig[conic.z] = np.broadcast_to(evaluate(chart.sigma_root, pts), (n,))
    first = mul(cut.chi1, cut.chi2, chart.H(cut.chi0)) if sym.case == BELOW else mul(cut.chi1, chart.H(cut.chi0))
    v = float(np.max(np.abs(_eval(first, sig, n))))
    name = "chi1_chi2_Hchi0_off_Sigma" if sym.case == BELOW else "chi1_Hchi0_off_Sigma"
    conds[name] = {"max": v, "ok": v < tol}

    if sym.case == BELOW:
        lam_pts = dict(pts)
        lam_pts[conic.z] = np.zeros(n)
        for th in conic.theta:
            lam_pts[th] = np.zeros(n)
        v = float(np.max(np.abs(_eval(mul(cut.chi0, cut.chi1, chart.H(cut.chi2)), lam_pts, n))))
        conds["chi0_chi1_Hchi2_off_Lambda"] = {"max": v, "ok": v < tol}

    prod = mul(cut.chi0, cut.chi1, cut.chi2) if sym.case == BELOW else mul(cut.chi0, cut.chi1)
    shell = grid.shell_mask(chart, pts, q)
    v = float(np.max(np.abs(_eval(prod, pts, n))[shell])) if np.any(shell) else 0.0
    conds["compact_in_box"] = {"max": v, "ok": v < tol}

    yq = list(q) if len(q) else [0.0] * len(conic.y)
    qpt = {y: np.array([c]) for y, c in zip(conic.y, yq)}
    qpt.update({th: np.zeros(1) for th in conic.theta})
    qpt[conic.z] = np.zeros(1)
    qpt[conic.zeta] = np.array([zeta0 + 2.0])
    qpt[T_VAR] = np.zeros(1)
    g2q = float(np.abs(_eval(sym.g2, qpt, 1))[0])
    conds["g2_nonzero_at_q"] = {"max": g2q, "ok": g2q > 0}
    return SupportReport(conds, all(c["ok"] for c in conds.values()))


def factorization_residual(sym: CommutantSymbols, grid: CommutantGrid | None = None, t: float = 0.0, q=()) -> float:
    """Largest ``|b^2 - g2 h|`` relative to ``b^2`` on ``{g2 != 0}``."""
    grid = grid or CommutantGrid()
    pts = grid.points(sym.chart, sym.cutoffs.spec.zeta0, q)
    n = len(next(iter(pts.values())))
    env = dict(pts)
    env[T_VAR] = np.full(n, float(t))
    b2 = _eval(power(sym.b, 2), env, n)
    g2 = _eval(sym.g2, env, n)
    h = _eval(sym.h, env, n)
    on = g2 != 0
    if not np.any(on):
        return 0.0
    scale = max(1e-300, float(np.max(np.abs(b2[on]))))
    return float(np.max(np.abs(b2[on] - g2[on] * h[on])) / scale)


def radicand_sign_report(sym: CommutantSymbols, grid=None, t_values=T_LADDER, q=()) -> dict:
    """Non-raising form of :func:`check_radicands`."""
    grid = grid or CommutantGrid()
    pts = grid.points(sym.chart, sym.cutoffs.spec.zeta0, q)
    try:
        check_radicands(sym, pts, t_values)
    except SignViolation as err:
        return {"ok": False, "radicand": err.radicand, "point": err.point, "value": err.value, "t": err.t}
    return {"ok": True}
