"""Hamilton flow, the rescaled flow ``W_p = zeta^{1-m} H_p`` and ``Gamma_q`` tests.

All integrations run in canonical coordinates ``(x, xi)`` with scipy's
adaptive Runge-Kutta solvers; cosphere quantities (``alpha``, ``beta``,
``eta0`` and ``x = 1/zeta``) are read off along the computed path.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .geometry import RadialChart, cosphere_point, sink_source_classify
from .symcore import (
    ChartSpec,
    SymExpr,
    div,
    evaluate,
    hamilton_field,
    mul,
    power,
)


class FlowError(RuntimeError):
    """Integration could not produce a usable trajectory."""


@dataclass
class FlowConfig:
    """Integrator settings.

    Args:
        rtol: relative tolerance.
        atol: absolute tolerance.
        method: scipy ``solve_ivp`` method name.
        max_time: integration budget for open-ended runs.
        max_step: largest step.
        samples: number of dense-output samples stored per trajectory.
        radius: entry radius for convergence to the radial point.
        confirm_radius: the tail must reach this smaller radius.
        overflow: state magnitude treated as blow-up.
        region: ``|alpha|`` beyond which a path has left the working region.
        settle_speed: cosphere speed below which a path counts as settled.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "DOP853"
    max_time: float = 60.0
    max_step: float = np.inf
    samples: int = 400
    radius: float = 1e-2
    confirm_radius: float = 1e-3
    overflow: float = 1e12
    region: float = 2.0
    settle_speed: float = 1e-10

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if not np.isfinite(self.max_time):
            raise ValueError("max_time must be finite")
        if not self.confirm_radius < self.radius:
            raise ValueError("confirm_radius must be smaller than radius")


@dataclass
class Trajectory:
    """Sampled integral curve.

    ``states`` has shape ``(len(coords), len(t))``. ``extra`` holds derived
    series such as ``alpha``, ``beta`` or the conserved symbol.
    """

    t: np.ndarray
    states: np.ndarray
    coords: tuple
    status: str
    exit_time: float | None = None
    p_values: np.ndarray | None = None
    extra: dict = field(default_factory=dict)
    sol: object = None

    def column(self, name: str) -> np.ndarray:
        if name in self.coords:
            return self.states[self.coords.index(name)]
        return self.extra[name]

    @property
    def conservation_error(self) -> float:
        if self.p_values is None:
            return 0.0
        p0 = self.p_values[0]
        return float(np.max(np.abs(self.p_values - p0)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["t", *self.coords] + (["p"] if self.p_values is not None else [])
        buf.write(",".join(cols) + "\n")
        for j in range(len(self.t)):
            row = [self.t[j], *self.states[:, j]]
            if self.p_values is not None:
                row.append(np.real(self.p_values[j]))
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "status": self.status,
            "exit_time": self.exit_time,
            "t_start": float(self.t[0]),
            "t_end": float(self.t[-1]),
            "samples": int(len(self.t)),
            "conservation_error": self.conservation_error,
            **{k: v for k, v in self.extra.items() if np.isscalar(v)},
        }


def _compile(coeffs: Sequence[SymExpr], names: Sequence[str]):
    names = tuple(names)

    def f(state):
        env = dict(zip(names, state))
        return np.array([np.real(complex(evaluate(c, env))) for c in coeffs])

    return f


def _run(rhs, y0, tspan, cfg: FlowConfig, events=()):
    sol = solve_ivp(
        lambda t, y: rhs(y),
        tspan,
        np.asarray(y0, dtype=float),
        method=cfg.method,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
        dense_output=True,
        events=list(events) or None,
    )
    if sol.status == -1:
        raise FlowError(sol.message)
    t_end = float(sol.t[-1])
    ts = np.linspace(tspan[0], t_end, cfg.samples)
    states = sol.sol(ts)
    return sol, ts, states


def _overflow_event(cfg):
    def ev(t, y):
        return cfg.overflow - np.max(np.abs(y))

    ev.terminal = True
    ev.direction = -1
    return ev


def integrate_hamilton(p: SymExpr, start, tspan, cfg: FlowConfig | None = None, chart: ChartSpec | None = None) -> Trajectory:
    """Integrate ``H_p`` from ``start = (x, xi)``.

    Args:
        p: symbol in canonical variables.
        start: pair of base and fiber coordinates.
        tspan: ``(t0, t1)``; may run backwards.
        cfg: integrator settings.
        chart: canonical chart, inferred from the dimension when omitted.

    Returns:
        the trajectory; ``status`` is ``"overflow"`` with ``exit_time`` set when
        the state exceeds ``cfg.overflow``.
    """
    cfg = cfg or FlowConfig()
    x0, xi0 = (np.atleast_1d(np.asarray(s, dtype=float)) for s in start)
    chart = chart or ChartSpec.standard(len(x0))
    H = hamilton_field(p, chart)
    rhs = _compile(H.coeffs, chart.coords)
    sol, ts, states = _run(rhs, np.concatenate([x0, xi0]), tspan, cfg, [_overflow_event(cfg)])
    status, exit_time = "ok", None
    if sol.status == 1:
        status, exit_time = "overflow", float(sol.t_events[0][0])
    env = {c: states[i] for i, c in enumerate(chart.coords)}
    pv = np.broadcast_to(evaluate(p, env), ts.shape)
    return Trajectory(ts, states, chart.coords, status, exit_time, np.asarray(pv), sol=sol)


def _rescaled_field(chart: RadialChart, zeta: SymExpr | None):
    canon = chart.lag.canonical
    zc = zeta if zeta is not None else chart.canonical(chart.zeta)
    H = hamilton_field(chart.p, canon)
    W = H.scaled(power(zc, 1 - chart.m))
    return W, zc


def _cosphere_exprs(chart: RadialChart):
    """``alpha``, ``beta``, ``eta0`` and ``1/zeta`` in canonical variables."""
    alpha = [chart.canonical(a) for a in chart.alpha]
    beta = [chart.canonical(b) for b in chart.beta]
    return alpha, beta, chart.canonical(chart.eta0), chart.canonical(div(1, chart.zeta))


def integrate_rescaled(
    chart: RadialChart,
    start,
    tspan,
    cfg: FlowConfig | None = None,
    zeta: SymExpr | None = None,
    q: Sequence[float] = (),
) -> Trajectory:
    """Integrate ``W_p = zeta^{1-m} H_p`` and record cosphere coordinates.

    Args:
        chart: normal coordinates of ``p``.
        start: canonical ``(x, xi)`` or a cosphere point ``{"alpha": .., "beta": ..}``
            (placed on the characteristic set at ``zeta = 1``).
        tspan: time interval.
        cfg: integrator settings.
        zeta: fiber scale defining ``W_p``; defaults to the chart scale.
        q: radial point used for ``lambda_0`` in the ``W_p x = lambda_0 x`` check.

    The extra series are ``alpha1..``, ``beta1..``, ``eta0``, ``xb`` (the
    boundary defining function ``1/zeta``), ``wx_residual`` and the scalar
    ``max_wx_residual``.
    """
    cfg = cfg or FlowConfig()
    canon = chart.lag.canonical
    if isinstance(start, dict):
        x0, xi0 = cosphere_point(chart, start["alpha"], start["beta"])
    else:
        x0, xi0 = (np.atleast_1d(np.asarray(s, dtype=float)) for s in start)
    W, zc = _rescaled_field(chart, zeta)
    rhs = _compile(W.coeffs, canon.coords)
    zeta_fn = _compile([zc], canon.coords)

    def zeta_event(t, y):
        return zeta_fn(y)[0] - 1e-12

    zeta_event.terminal = True
    zeta_event.direction = -1
    sol, ts, states = _run(rhs, np.concatenate([x0, xi0]), tspan, cfg, [_overflow_event(cfg), zeta_event])
    status, exit_time = "ok", None
    if sol.status == 1:
        if len(sol.t_events[0]):
            status, exit_time = "overflow", float(sol.t_events[0][0])
        else:
            status, exit_time = "zeta_exit", float(sol.t_events[1][0])
    env = {c: states[i] for i, c in enumerate(canon.coords)}
    alpha, beta, eta0, xb = _cosphere_exprs(chart)
    extra = {}
    for i, a in enumerate(alpha):
        extra[f"alpha{i + 1}"] = np.real(np.broadcast_to(evaluate(a, env), ts.shape))
    for i, b in enumerate(beta):
        extra[f"beta{i + 1}"] = np.real(np.broadcast_to(evaluate(b, env), ts.shape))
    extra["eta0"] = np.real(np.broadcast_to(evaluate(eta0, env), ts.shape))
    # boundary defining function of the chosen zeta and its W_p derivative
    xbz = div(1, zc)
    extra["xb"] = np.real(np.broadcast_to(evaluate(xbz, env), ts.shape))
    lam = mul(-1, hamilton_field(chart.p, canon).apply(zc))
    lam0 = div(lam, power(zc, chart.m))
    wx = np.real(np.broadcast_to(evaluate(W.apply(xbz), env), ts.shape))
    lx = np.real(np.broadcast_to(evaluate(mul(lam0, xbz), env), ts.shape))
    extra["wx_residual"] = np.abs(wx - lx)
    extra["max_wx_residual"] = float(np.max(extra["wx_residual"]))
    # same relation with lambda_0 frozen at q, which holds near the radial set
    extra["lambda0_q"] = sink_source_classify(chart, q, zeta=zeta).lambda0
    pv = np.broadcast_to(evaluate(chart.p, env), ts.shape)
    return Trajectory(ts, states, canon.coords, status, exit_time, np.asarray(pv), extra, sol)


@dataclass
class GammaResult:
    status: str
    direction: str | None
    details: dict

    def to_dict(self):
        return {"status": self.status, "direction": self.direction, "details": self.details}


def _direction_outcome(chart, x0, xi0, sign, q_beta, cfg, zeta):
    """Follow the flow in one time direction and classify the outcome."""
    canon = chart.lag.canonical
    W, _ = _rescaled_field(chart, zeta)
    alpha, beta, _, _ = _cosphere_exprs(chart)
    rates_a = [W.apply(a) for a in alpha]
    rates_b = [W.apply(b) for b in beta]
    cos_fn = _compile(alpha + beta, canon.coords)
    rate_fn = _compile(rates_a + rates_b, canon.coords)
    rhs0 = _compile(W.coeffs, canon.coords)
    k = len(alpha)
    qv = np.concatenate([np.zeros(k), q_beta])

    def rhs(y):
        return sign * rhs0(y)

    def dist(y):
        return float(np.linalg.norm(cos_fn(y) - qv))

    def ev_confirm(t, y):
        return dist(y) - cfg.confirm_radius

    def ev_region(t, y):
        return cfg.region - float(np.linalg.norm(cos_fn(y)[:k]))

    def ev_settle(t, y):
        return float(np.linalg.norm(rate_fn(y))) - cfg.settle_speed

    for ev in (ev_confirm, ev_region, ev_settle):
        ev.terminal = True
        ev.direction = -1
    sol, ts, states = _run(
        rhs, np.concatenate([x0, xi0]), (0.0, cfg.max_time), cfg, [ev_confirm, ev_region, ev_settle, _overflow_event(cfg)]
    )
    d = np.array([dist(states[:, j]) for j in range(states.shape[1])])
    end = {"t_end": float(sol.t[-1]), "final_distance": float(d[-1])}
    if sol.status == 1 and len(sol.t_events[0]):
        entered = np.nonzero(d < cfg.radius)[0]
        tail = d[entered[0]:] if len(entered) else d[-1:]
        monotone = bool(np.all(np.diff(tail) <= 1e-12 * cfg.radius))
        end["monotone_tail"] = monotone
        return ("member" if monotone else "inconclusive"), end
    if sol.status == 1 and len(sol.t_events[1]):
        end["reason"] = "left working region"
        return "non-member", end
    if sol.status == 1 and len(sol.t_events[2]):
        end["reason"] = "settled away from q"
        return ("non-member" if d[-1] > cfg.radius else "inconclusive"), end
    if sol.status == 1:
        end["reason"] = "overflow"
        return "non-member", end
    end["reason"] = "budget exhausted"
    return "inconclusive", end


def gamma_membership(
    chart: RadialChart,
    q: Sequence[float],
    x0: dict,
    cfg: FlowConfig | None = None,
    zeta: SymExpr | None = None,
) -> GammaResult:
    """Decide whether the cosphere point ``x0`` flows into ``q``.

    Args:
        chart: normal coordinates.
        q: base coordinates ``y_q`` of the radial point; its cosphere
            coordinates are ``alpha = 0`` and ``beta = beta(q)``.
        x0: ``{"alpha": [...], "beta": [...]}``.
        cfg: integrator settings; ``radius`` and ``confirm_radius`` give the
            two-radius test.

    Raises:
        ValueError: ``x0`` lies on the radial set (``alpha = 0``).
    """
    cfg = cfg or FlowConfig()
    a0 = np.atleast_1d(np.asarray(x0["alpha"], dtype=float))
    if np.linalg.norm(a0) == 0:
        raise ValueError("starting point lies on the radial set")
    xq, xiq = chart.lag.representative(q)
    env = dict(zip(chart.lag.canonical.coords, np.concatenate([xq, xiq])))
    q_beta = np.array([float(np.real(evaluate(chart.canonical(b), env))) for b in chart.beta])
    x, xi = cosphere_point(chart, a0, x0["beta"])
    outcomes = {}
    for name, sign in (("forward", 1.0), ("backward", -1.0)):
        outcomes[name] = _direction_outcome(chart, x, xi, sign, q_beta, cfg, zeta)
    for name in ("forward", "backward"):
        if outcomes[name][0] == "member":
            return GammaResult("member", name, {k: v[1] for k, v in outcomes.items()})
    if all(o[0] == "non-member" for o in outcomes.values()):
        return GammaResult("non-member", None, {k: v[1] for k, v in outcomes.items()})
    return GammaResult("inconclusive", None, {k: v[1] for k, v in outcomes.items()})


@dataclass
class RateEstimate:
    rate: float
    residual: float
    n_points: int
    lambda0: float | None = None

    @property
    def relative_error(self) -> float | None:
        if self.lambda0 is None:
            return None
        return abs(self.rate - self.lambda0) / abs(self.lambda0)

    def to_dict(self):
        return {
            "rate": self.rate,
            "residual": self.residual,
            "n_points": self.n_points,
            "lambda0": self.lambda0,
            "relative_error": self.relative_error,
        }


def linearization_rate(traj: Trajectory, radius: float = 1e-2, lambda0: float | None = None, min_points: int = 10) -> RateEstimate:
    """Least-squares slope of ``log |alpha|`` against signed time on the near tail.

    Raises:
        FlowError: fewer than ``min_points`` samples lie within ``radius``.
    """
    names = sorted(k for k in traj.extra if k.startswith("alpha"))
    if not names:
        raise FlowError("trajectory carries no alpha coordinates")
    amp = np.sqrt(sum(traj.extra[k] ** 2 for k in names))
    mask = (amp < radius) & (amp > 0)
    if np.count_nonzero(mask) < min_points:
        raise FlowError("trajectory tail inside the linearization radius is too short")
    t = traj.t[mask]
    y = np.log(amp[mask])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(res[0] / len(t))) if len(res) else 0.0
    return RateEstimate(float(coef[0]), resid, int(len(t)), lambda0)


def path_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two sampled paths (points as columns)."""
    ta, tb = cKDTree(a.T), cKDTree(b.T)
    return float(max(tb.query(a.T)[0].max(), ta.query(b.T)[0].max()))


def dense_path(traj: Trajectory, count: int = 4000, names: Sequence[str] | None = None) -> np.ndarray:
    """Canonical states resampled densely from the solver's interpolant."""
    ts = np.linspace(traj.t[0], traj.t[-1], count)
    states = traj.sol.sol(ts)
    if names is None:
        return states
    idx = [traj.coords.index(n) for n in names]
    return states[idx]


def lambda0_along(traj: Trajectory, chart: RadialChart) -> np.ndarray:
    canon = chart.lag.canonical
    env = {c: traj.states[i] for i, c in enumerate(canon.coords)}
    lam0 = chart.canonical(div(chart.lam, power(chart.zeta, chart.m)))
    return np.real(np.broadcast_to(evaluate(lam0, env), traj.t.shape))


__all__ = [
    "FlowConfig",
    "FlowError",
    "GammaResult",
    "RateEstimate",
    "Trajectory",
    "dense_path",
    "gamma_membership",
    "integrate_hamilton",
    "integrate_rescaled",
    "lambda0_along",
    "linearization_rate",
    "path_distance",
]
