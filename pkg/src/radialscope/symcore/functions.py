"""Registered special functions and the cutoff family.

Every function carries a vectorized evaluator and a derivative rule. The
cutoff ``chit`` equals 1 for ``t <= eps``, 0 for ``t >= T`` and on
``(eps, T)`` is the logistic profile ``expit(1/(t-eps) - 1/(T-t))``; it is
C-infinity with every derivative vanishing at both ends. Its derivative is
expressed as ``chit_r(t) * chit(t)`` where ``chit_r`` is the logarithmic
derivative (set to 0 outside ``(eps, T)``).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import expit

from .expr import FunctionDef, SymExpr, add, call, div, mul, neg, power


def _sin(u):
    return np.sin(u)


def _cos(u):
    return np.cos(u)


sin = FunctionDef("sin", _sin, lambda u: call(cos, u))
cos = FunctionDef("cos", _cos, lambda u: neg(call(sin, u)))
exp = FunctionDef("exp", np.exp, lambda u: call(exp, u))
log = FunctionDef("log", np.log, lambda u: div(1, u))
tanh = FunctionDef("tanh", np.tanh, lambda u: add(1, neg(power(call(tanh, u), 2))))


def _sqrtp(u):
    return np.sqrt(np.maximum(np.real(u), 0.0))


def _rsqrtp(u):
    u = np.real(u)
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, 1.0 / np.sqrt(safe), 0.0)


# sqrt(max(u, 0)); derivative only meaningful where u > 0
sqrtp = FunctionDef("sqrtp", _sqrtp, lambda u: mul(0.5, call(rsqrtp, u)))
rsqrtp = FunctionDef(
    "rsqrtp", _rsqrtp, lambda u: mul(-0.5, power(call(rsqrtp, u), 3))
)

BUILTINS: dict[str, FunctionDef] = {
    f.name: f for f in (sin, cos, exp, log, tanh, sqrtp, rsqrtp)
}


def _interior(t, eps, T):
    t = np.real(np.asarray(t))
    inside = (t > eps) & (t < T)
    ts = np.where(inside, t, 0.5 * (eps + T))
    a = 1.0 / (T - ts)
    b = 1.0 / (ts - eps)
    return t, inside, a, b


def chit_value(t, eps: float, T: float):
    t, inside, a, b = _interior(t, eps, T)
    val = expit(b - a)
    return np.where(inside, val, np.where(t <= eps, 1.0, 0.0))


def chit_logderiv(t, eps: float, T: float):
    _, inside, a, b = _interior(t, eps, T)
    r = -expit(a - b) * (a * a + b * b)
    return np.where(inside, r, 0.0)


def chit_logderiv_prime(t, eps: float, T: float):
    _, inside, a, b = _interior(t, eps, T)
    d = a - b
    s = a * a + b * b
    rp = -expit(d) * expit(-d) * s * s - expit(d) * (2 * a**3 - 2 * b**3)
    return np.where(inside, rp, 0.0)


def chit_sqrt_neg_product(t, eps: float, T: float):
    """sqrt(-chit * chit') evaluated without forming the product."""
    _, inside, a, b = _interior(t, eps, T)
    d = a - b
    val = expit(-d) * np.sqrt(expit(d) * (a * a + b * b))
    return np.where(inside, val, 0.0)


@lru_cache(maxsize=None)
def cutoff(eps: float, T: float) -> "CutoffFamily":
    return CutoffFamily(float(eps), float(T))


class CutoffFamily:
    """The four related function nodes for one ``(eps, T)`` pair."""

    def __init__(self, eps: float, T: float):
        if not T > eps:
            raise ValueError(f"cutoff needs T > eps, got eps={eps}, T={T}")
        self.eps, self.T = eps, T
        tag = f"[{eps:g},{T:g}]"
        self.rprime = FunctionDef("chit_dr" + tag, lambda u: chit_logderiv_prime(u, eps, T))
        self.r = FunctionDef(
            "chit_r" + tag, lambda u: chit_logderiv(u, eps, T), lambda u: call(self.rprime, u)
        )
        self.chi = FunctionDef(
            "chit" + tag,
            lambda u: chit_value(u, eps, T),
            lambda u: mul(call(self.r, u), call(self.chi, u)),
        )
        self.sqrt_neg = FunctionDef("chit_sq" + tag, lambda u: chit_sqrt_neg_product(u, eps, T))

    def __call__(self, u) -> SymExpr:
        return call(self.chi, u)

    def logderiv(self, u) -> SymExpr:
        return call(self.r, u)

    def sqrt_neg_product(self, u) -> SymExpr:
        return call(self.sqrt_neg, u)
