"""Randomized identity testing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expr import EvaluationError, as_expr, evaluate


@dataclass
class SampleComparison:
    equal: bool
    residual: float
    worst_point: dict

    def __bool__(self):
        return self.equal

    def __iter__(self):
        return iter((self.equal, self.residual, self.worst_point))


def sample_box(domain: Mapping[str, tuple], n: int, seed: int) -> dict:
    """Uniform samples; a domain entry may be ``(lo, hi)`` or ``(lo, hi, 'log')``."""
    rng = np.random.default_rng(seed)
    env = {}
    for name in sorted(domain):
        spec = domain[name]
        lo, hi = spec[0], spec[1]
        if len(spec) > 2 and spec[2] == "log":
            env[name] = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
        else:
            env[name] = rng.uniform(lo, hi, n)
    return env


def equal_on_samples(
    a,
    b,
    domain: Mapping[str, tuple],
    n: int = 100,
    seed: int = 0,
    tol: float = 1e-9,
) -> SampleComparison:
    """Compare two expressions on random points of a box.

    The residual is ``max |a - b| / max(1, |a|, |b|)`` over the samples.

    Args:
        a, b: expressions (or numbers).
        domain: variable name to ``(lo, hi)`` interval.
        n: number of points.
        seed: RNG seed; the result is deterministic given it.
        tol: equality threshold on the residual.

    Raises:
        EvaluationError: a value is not finite; the message names the point.
    """
    a, b = as_expr(a), as_expr(b)
    missing = (a.free_vars | b.free_vars) - set(domain)
    if missing:
        raise EvaluationError(f"domain does not cover {sorted(missing)}")
    env = sample_box(domain, n, seed)
    va = np.broadcast_to(evaluate(a, env), (n,))
    vb = np.broadcast_to(evaluate(b, env), (n,))
    for vals in (va, vb):
        bad = ~np.isfinite(vals)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise EvaluationError(f"non-finite value at {_point(env, i)}")
    scale = np.maximum(1.0, np.maximum(np.abs(va), np.abs(vb)))
    rel = np.abs(va - vb) / scale
    i = int(np.argmax(rel))
    res = float(rel[i])
    return SampleComparison(res <= tol, res, _point(env, i))


def _point(env, i):
    return {k: float(v[i]) for k, v in env.items()}
