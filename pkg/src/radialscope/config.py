"""TOML run configuration: loading, validation and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .symcore import ChartSpec, ParseError, parse

COMMANDS = ("analyze", "flow", "commutant", "probe", "full")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field or line."""


@dataclass
class OperatorBlock:
    n: int
    m: float
    principal: str
    lower: list = field(default_factory=list)
    density: str = "1"


@dataclass
class LagrangianBlock:
    branch: int = 1
    q: list = field(default_factory=list)


@dataclass
class ThresholdBlock:
    sweep: bool = True
    invariance_rescalings: int = 10
    invariance_densities: int = 5
    adjoint_pairs: int = 20
    adjoint_tol: float = 1e-6
    tol: float = 1e-9


@dataclass
class FlowBlock:
    starts: int = 20
    max_time: float = 60.0
    rtol: float = 1e-10
    radius: float = 1e-2
    confirm_radius: float = 1e-3
    start_alpha: float = 1e-3
    rate_tol: float = 0.05
    wx_tol: float = 1e-8


@dataclass
class CommutantBlock:
    case: str = "below"
    s: float = 0.0
    s1: float | None = None
    t_values: list = field(default_factory=lambda: [round(0.1 * i, 10) for i in range(11)])
    half_width: float = 0.6
    counts: list = field(default_factory=lambda: [10, 10, 10, 10])
    zeta_max: float = 1e3
    tol: float = 1e-8


@dataclass
class ProbeBlock:
    c: list = field(default_factory=lambda: [[0.0, 0.0], [0.0, 0.25], [0.0, -0.25]])
    points: int = 2**20
    half_width: float = 1.0
    window: float = 0.5
    tol: float = 0.1


@dataclass
class RunConfig:
    operator: OperatorBlock
    lagrangian: LagrangianBlock
    command: str
    seed: int
    threshold: ThresholdBlock
    flow: FlowBlock
    commutant: CommutantBlock
    probe: ProbeBlock
    out_dir: str = "radialscope-out"
    source: str = "<memory>"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d.pop("out_dir")
        return d

    def hash(self) -> str:
        """SHA-256 of the resolved settings (output location excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _block(raw: dict, name: str, cls, required=()):
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = set(cls.__dataclass_fields__)
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}: unknown field (allowed: {', '.join(sorted(allowed))})")
    for key in required:
        if key not in data:
            raise ConfigError(f"{name}.{key}: required field missing")
    try:
        return cls(**data)
    except TypeError as err:
        raise ConfigError(f"[{name}]: {err}") from None


def _check_type(path: str, value, types):
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{path}: expected {types[0].__name__}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {types[0].__name__}, got {type(value).__name__}")


def validate(cfg: RunConfig) -> None:
    """Field-level checks; symbol strings are parsed against the declared chart."""
    op = cfg.operator
    _check_type("operator.n", op.n, (int,))
    if op.n < 1:
        raise ConfigError("operator.n: must be at least 1")
    _check_type("operator.m", op.m, (int, float))
    chart = ChartSpec.standard(op.n)
    for path, text in [("operator.principal", op.principal), ("operator.density", op.density)] + [
        (f"operator.lower[{i}]", t) for i, t in enumerate(op.lower)
    ]:
        _check_type(path, text, (str,))
        try:
            parse(text, chart)
        except ParseError as err:
            raise ConfigError(f"{path}: {err}") from None
    lag = cfg.lagrangian
    if lag.branch not in (1, -1):
        raise ConfigError("lagrangian.branch: must be 1 or -1")
    if lag.q and len(lag.q) != op.n - 1:
        raise ConfigError(f"lagrangian.q: needs {op.n - 1} coordinates")
    if cfg.command not in COMMANDS:
        raise ConfigError(f"analysis.run: must be exactly one of {', '.join(COMMANDS)}")
    _check_type("seed", cfg.seed, (int,))
    cm = cfg.commutant
    if cm.case not in ("below", "above"):
        raise ConfigError("numeric.commutant.case: must be 'below' or 'above'")
    if cm.case == "above" and cm.s1 is None:
        raise ConfigError("numeric.commutant.s1: required for the above case")
    if cm.case == "above" and not cm.s > cm.s1:
        raise ConfigError("numeric.commutant.s1: must be smaller than s")
    if len(cm.counts) != 4 or any(not isinstance(c, int) or c < 2 for c in cm.counts):
        raise ConfigError("numeric.commutant.counts: four integers >= 2")
    if any(not 0 <= t <= 1 for t in cm.t_values):
        raise ConfigError("numeric.commutant.t_values: entries must lie in [0, 1]")
    pr = cfg.probe
    for i, c in enumerate(pr.c):
        if not (isinstance(c, list) and len(c) == 2):
            raise ConfigError(f"numeric.probe.c[{i}]: expected [re, im]")
        if abs(c[1]) >= 0.5:
            raise ConfigError(f"numeric.probe.c[{i}]: |Im c| must be below 1/2")
    if pr.points < 2**10:
        raise ConfigError("numeric.probe.points: at least 1024")
    fl = cfg.flow
    if not fl.confirm_radius < fl.radius:
        raise ConfigError("numeric.flow.confirm_radius: must be smaller than radius")


def from_dict(raw: dict, source: str = "<memory>") -> RunConfig:
    known = {"seed", "operator", "lagrangian", "analysis", "numeric", "output"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level key")
    if "seed" not in raw:
        raise ConfigError("seed: required (randomized checks need a fixed seed)")
    if "operator" not in raw:
        raise ConfigError("[operator]: required table missing")
    analysis = raw.get("analysis", {})
    run = analysis.get("run")
    if isinstance(run, list):
        raise ConfigError("analysis.run: exactly one analysis must be selected")
    numeric = raw.get("numeric", {})
    for key in numeric:
        if key not in ("threshold", "flow", "commutant", "probe"):
            raise ConfigError(f"numeric.{key}: unknown block")
    cfg = RunConfig(
        operator=_block(raw, "operator", OperatorBlock, ("n", "m", "principal")),
        lagrangian=_block(raw, "lagrangian", LagrangianBlock),
        command=run if run is not None else "full",
        seed=raw["seed"],
        threshold=_block(numeric, "threshold", ThresholdBlock),
        flow=_block(numeric, "flow", FlowBlock),
        commutant=_block(numeric, "commutant", CommutantBlock),
        probe=_block(numeric, "probe", ProbeBlock),
        out_dir=raw.get("output", {}).get("dir", "radialscope-out"),
        source=source,
    )
    validate(cfg)
    return cfg


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return from_dict(raw, str(path))


def bundled(name: str) -> Path:
    """Path of a configuration shipped with the package."""
    return Path(__file__).parent / "configs" / name
