"""Dyadic Sobolev regularity probe for one-dimensional model solutions.

A sampled distribution is multiplied by a smooth bump, transformed with an
FFT and its energy is summed over smooth dyadic frequency shells. A straight
line through ``log2 E_j`` against ``j`` gives the critical exponent
``s* = -slope / 2``: ``u`` lies in ``H^s`` near the base point exactly when
``sum 2^{2js} E_j`` converges.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft

MODELS = ("heaviside", "xplus_power", "delta", "gaussian")
S_MAX = 6.0
NYQUIST_MARGIN = 4.0
LOW_EXCLUDE = 3
HIGH_EXCLUDE = 2
# a drop steeper than 2^-20 per shell only happens for smooth data
SMOOTH_DROP = -20.0
NOISE_FLOOR = 1e-26


class ProbeError(ValueError):
    """Invalid model, grid or band."""


def fft_workers() -> int:
    """Thread count for transforms, read from ``RADIALSCOPE_THREADS``."""
    raw = os.environ.get("RADIALSCOPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ProbeError(f"RADIALSCOPE_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[center - half_width, center + half_width]``.

    Args:
        points: number of samples.
        half_width: half the interval length.
        window: bump radius as a fraction of ``half_width``.
        mid_cell: shift nodes by half a cell so no node sits on the base point.
        center: base point of interest.
    """

    points: int = 2**20
    half_width: float = 1.0
    window: float = 0.5
    mid_cell: bool = True
    center: float = 0.0

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.points

    def nodes(self) -> np.ndarray:
        k = np.arange(self.points, dtype=float) + (0.5 if self.mid_cell else 0.0)
        return self.center - self.half_width + k * self.spacing

    def replace(self, **kw) -> "GridSpec":
        return GridSpec(**{**asdict(self), **kw})


def bump(x: np.ndarray, radius: float) -> np.ndarray:
    """``exp(1 - 1/(1 - (x/R)^2))`` on ``|x| < R``, zero outside."""
    u = np.asarray(x, dtype=float) / radius
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass
class SampledDistribution:
    """Samples with their grid and the localizing window."""

    x: np.ndarray
    values: np.ndarray
    spacing: float
    window: np.ndarray
    window_radius: float
    model: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.x[0], self.x[-1]
        center = 0.5 * (lo + hi)
        if not (center - self.window_radius > lo + self.spacing and center + self.window_radius < hi - self.spacing):
            raise ProbeError("window must be supported strictly inside the grid")

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    @property
    def resolution(self) -> float:
        """Frequency spacing of the discrete transform."""
        return 2 * np.pi / (len(self.x) * self.spacing)

    def available_shells(self) -> tuple[int, int]:
        """Shells whose smooth support stays resolved and Nyquist safe."""
        hi = int(np.floor(np.log2(self.nyquist / NYQUIST_MARGIN) - 1.5))
        lo = int(np.ceil(np.log2(2 * self.resolution) + 0.5))
        return lo, hi


def sample_model_solution(model: str, params: dict | None = None, grid: GridSpec | None = None) -> SampledDistribution:
    """Exact samples of a model distribution near ``grid.center``.

    Args:
        model: ``heaviside``, ``xplus_power`` (needs ``a``, complex allowed),
            ``delta`` or ``gaussian`` (optional ``sigma``).
        params: model parameters.
        grid: sampling grid.

    Raises:
        ProbeError: unknown model, or ``Re a <= -1`` for ``xplus_power``.
    """
    params = dict(params or {})
    grid = grid or GridSpec()
    if model not in MODELS:
        raise ProbeError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    x = grid.nodes()
    s = x - grid.center
    h = grid.spacing
    if model == "heaviside":
        vals = (s >= 0).astype(float)
    elif model == "xplus_power":
        if "a" not in params:
            raise ProbeError("xplus_power needs the exponent 'a'")
        a = complex(params["a"])
        if a.real <= -1:
            raise ProbeError(f"x_+^a with Re a = {a.real} <= -1 is not locally integrable")
        vals = np.zeros(len(x), dtype=complex)
        pos = s > 0
        vals[pos] = np.exp(a * np.log(s[pos]))
        if a.imag == 0:
            vals = vals.real
    elif model == "delta":
        vals = np.zeros(len(x))
        vals[np.argmin(np.abs(s))] = 1.0 / h
    else:
        sigma = float(params.get("sigma", 0.05))
        vals = np.exp(-0.5 * (s / sigma) ** 2)
    R = grid.window * grid.half_width
    w = bump(s, R)
    return SampledDistribution(x, vals, h, w, R, model, params)


@dataclass
class ShellSpectrum:
    j: np.ndarray
    energies: np.ndarray
    model: str = "custom"

    def __post_init__(self):
        if np.any(self.energies < 0):
            raise ProbeError("negative shell energy")

    @property
    def log2_energies(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(self.energies)

    def to_columns(self) -> str:
        buf = io.StringIO()
        buf.write("# j log2E\n")
        for j, le in zip(self.j, self.log2_energies):
            buf.write(f"{int(j)} {le:.12g}\n")
        return buf.getvalue()


def shell_weights(log2_freq: np.ndarray, j: int) -> np.ndarray:
    """Smooth partition of unity in ``log2 |xi|``; shell ``j`` is centred at ``j + 1/2``."""
    u = log2_freq - (j + 0.5)
    w = np.cos(0.5 * np.pi * u) ** 2
    return np.where(np.abs(u) < 1, w, 0.0)


def dyadic_shell_energies(u: SampledDistribution, band: tuple[int, int] | None = None) -> ShellSpectrum:
    """Windowed shell energies ``E_j`` for ``j`` in ``band`` (inclusive).

    Raises:
        ProbeError: the band reaches past the Nyquist-safe range.
    """
    lo, hi = u.available_shells()
    if band is None:
        band = (lo, hi)
    if band[0] < lo or band[1] > hi or band[0] > band[1]:
        raise ProbeError(f"band {band} outside the Nyquist-safe range [{lo}, {hi}]")
    n = len(u.x)
    uhat = scipy.fft.fft(u.values * u.window, workers=fft_workers()) * u.spacing
    freq = np.abs(2 * np.pi * scipy.fft.fftfreq(n, u.spacing))
    power = np.abs(uhat) ** 2
    keep = freq > 0
    lf = np.log2(freq[keep])
    pw = power[keep]
    js = np.arange(band[0], band[1] + 1)
    E = np.array([np.sum(shell_weights(lf, j) * pw) for j in js])
    return ShellSpectrum(js, E, u.model)


@dataclass
class RegularityEstimate:
    s_star: float
    slope: float
    intercept: float
    residual: float
    band: tuple
    smooth: bool = False
    beyond_cap: bool = False

    def to_dict(self):
        d = asdict(self)
        d["band"] = list(self.band)
        return d


def estimate_critical_exponent(spec: ShellSpectrum, s_max: float = S_MAX, exclude: tuple[int, int] = (LOW_EXCLUDE, HIGH_EXCLUDE)) -> RegularityEstimate:
    """Least-squares ``s* = -slope/2`` over the shells left after trimming.

    Args:
        spec: shell spectrum.
        s_max: exponents beyond ``+-s_max`` are capped and flagged.
        exclude: shells dropped at the low and high ends.

    Raises:
        ProbeError: fewer than five shells remain, or an energy vanishes.
    """
    lo_cut, hi_cut = exclude
    j = spec.j[lo_cut: len(spec.j) - hi_cut]
    E = spec.energies[lo_cut: len(spec.j) - hi_cut]
    if len(j) < 5:
        raise ProbeError("need at least five shells in the regression band")
    if np.any(E <= 0):
        raise ProbeError("degenerate fit: zero shell energy")
    y = np.log2(E)
    A = np.vstack([j, np.ones_like(j, dtype=float)]).T
    (slope, icpt), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(res[0] / len(j))) if len(res) else 0.0
    band = (int(j[0]), int(j[-1]))
    drops = np.diff(np.log2(spec.energies[spec.energies > 0]))
    smooth = bool(np.any(drops < SMOOTH_DROP) or (slope < 0 and E.min() < NOISE_FLOOR * spec.energies.max()))
    s = -0.5 * float(slope)
    if smooth:
        return RegularityEstimate(s_max, float(slope), float(icpt), resid, band, True, True)
    if abs(s) > s_max:
        return RegularityEstimate(float(np.sign(s) * s_max), float(slope), float(icpt), resid, band, False, True)
    return RegularityEstimate(s, float(slope), float(icpt), resid, band)


def critical_exponent(model: str, params: dict | None = None, grid: GridSpec | None = None) -> RegularityEstimate:
    u = sample_model_solution(model, params, grid)
    return estimate_critical_exponent(dyadic_shell_energies(u))


@dataclass
class ExperimentTable:
    rows: list
    max_abs_diff: float
    grid: dict

    def to_dict(self):
        return {"rows": self.rows, "max_abs_diff": self.max_abs_diff, "grid": self.grid}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_columns(self) -> str:
        buf = io.StringIO()
        buf.write("# re_c im_c s_star s0\n")
        for r in self.rows:
            buf.write(f"{r['c'][0]:.6g} {r['c'][1]:.6g} {r['s_star']:.12g} {r['s0']:.12g}\n")
        return buf.getvalue()


def threshold_experiment(c_values: Sequence[complex], grid: GridSpec | None = None) -> ExperimentTable:
    """Measured ``s*`` of ``x_+^{ic}`` against ``s0`` for ``x D_x - c``.

    The exact solution of ``(x D_x - c) u = 0`` on ``x > 0`` is ``x^{ic}``.
    Each row also carries the estimate on a node-aligned grid so the
    sensitivity to the mid-cell placement is visible.

    Raises:
        ProbeError: ``|Im c| >= 1/2``.
    """
    from .geometry import LagrangianSpec, build_normal_coordinates
    from .threshold import model_operator, s0

    grid = grid or GridSpec()
    lag = LagrangianSpec(1)
    rows = []
    for c in c_values:
        c = complex(c)
        if abs(c.imag) >= 0.5:
            raise ProbeError(f"|Im c| must be below 1/2, got c = {c}")
        op = model_operator(c, 1)
        chart = build_normal_coordinates(op.principal, lag)
        pred = s0(op, chart).value
        a = 1j * c
        model, params = ("heaviside", {}) if a == 0 else ("xplus_power", {"a": a})
        est = critical_exponent(model, params, grid)
        aligned = critical_exponent(model, params, grid.replace(mid_cell=False))
        rows.append(
            {
                "c": [c.real + 0.0, c.imag + 0.0],
                "model": model,
                "s0": float(pred),
                "s_star": est.s_star,
                "abs_diff": abs(est.s_star - pred),
                "fit": est.to_dict(),
                "aligned_s_star": aligned.s_star,
                "placement_sensitivity": abs(aligned.s_star - est.s_star),
            }
        )
    return ExperimentTable(rows, max(r["abs_diff"] for r in rows), asdict(grid))
