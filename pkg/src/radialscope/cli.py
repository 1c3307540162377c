"""Command line front end: ``radialscope <command> --config FILE``.

Exit codes: 0 all enabled verifications pass, 1 invalid configuration,
2 a verification failed (reports are still written), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .commutant import (
    CommutantGrid,
    RegularizerSpec,
    SearchExhausted,
    SignViolation,
    build_symbols,
    factorization_residual,
    make_cutoffs,
    verify_commutator_identity,
    verify_support_conditions,
)
from .config import COMMANDS, ConfigError, RunConfig, load
from .dynamics import FlowConfig, FlowError, gamma_membership, integrate_rescaled, linearization_rate
from .geometry import (
    DegeneracyError,
    LagrangianSpec,
    build_normal_coordinates,
    sink_source_classify,
    verify_eigen_relations,
)
from .probe import GridSpec, ProbeError, dyadic_shell_energies, sample_model_solution, threshold_experiment
from .geometry import to_conic_chart
from .symcore import EvaluationError, evaluate
from .threshold import (
    OperatorSpec,
    adjoint_quadrature_residual,
    invariance_check,
    subprincipal_difference,
    threshold_report,
)

log = logging.getLogger("radialscope")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3


class _Context:
    """Objects shared between stages of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        o = cfg.operator
        try:
            self.op = OperatorSpec.from_strings(o.n, o.m, o.principal, o.lower, o.density)
            self.lag = LagrangianSpec(o.n, cfg.lagrangian.branch)
            self.op.validate(self.lag, seed=cfg.seed)
        except ValueError as err:
            raise ConfigError(f"operator: {err}") from None
        self.q = tuple(cfg.lagrangian.q)
        self._chart = None

    @property
    def chart(self):
        if self._chart is None:
            self._chart = build_normal_coordinates(self.op.principal, self.lag)
        return self._chart


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def stage_analyze(ctx: _Context) -> tuple[dict, bool]:
    cfg = ctx.cfg
    th = cfg.threshold
    chart = ctx.chart
    eig = verify_eigen_relations(chart, seed=cfg.seed)
    rep = threshold_report(ctx.op, chart, ctx.q, with_sweep=th.sweep)
    adj = adjoint_quadrature_residual(ctx.op, pairs=th.adjoint_pairs, seed=cfg.seed)
    inv = invariance_check(ctx.op, chart, ctx.q, th.invariance_rescalings, th.invariance_densities, seed=cfg.seed, tol=th.tol)
    checks = {
        "eigen_relations": eig.ok,
        "adjoint_quadrature": bool(adj < th.adjoint_tol),
        "invariance": inv.ok,
    }
    report = {
        "beta": [str(b) for b in chart.beta],
        "closed_form_root": chart.closed_form_root,
        "eigen_relations": eig.to_dict(),
        "threshold": rep.to_dict(),
        "adjoint_residual": adj,
        "invariance": inv.to_dict(),
        "checks": checks,
    }
    return report, all(checks.values())


def _flow_starts(ctx: _Context, q_beta: np.ndarray, rng: np.random.Generator) -> list:
    k = len(q_beta)
    starts = []
    for i in range(ctx.cfg.flow.starts):
        alpha = rng.uniform(0.05, 0.3, k) * rng.choice([-1.0, 1.0], k)
        if i % 2 == 0:
            beta = q_beta.copy()
        else:
            beta = q_beta + rng.uniform(0.2, 0.5, k) * rng.choice([-1.0, 1.0], k)
        starts.append({"alpha": alpha, "beta": beta, "on_beta_q": i % 2 == 0})
    return starts


def stage_flow(ctx: _Context, out: Path) -> tuple[dict, bool]:
    cfg = ctx.cfg
    fl = cfg.flow
    chart = ctx.chart
    if chart.n < 2:
        return {"skipped": "the cosphere flow needs n >= 2"}, True
    fcfg = FlowConfig(rtol=fl.rtol, max_time=fl.max_time, radius=fl.radius, confirm_radius=fl.confirm_radius)
    cls = sink_source_classify(chart, ctx.q)
    x, xi = ctx.lag.representative(ctx.q)
    env = dict(zip(ctx.lag.canonical.coords, np.concatenate([x, xi])))
    q_beta = np.array([float(np.real(evaluate(chart.canonical(b), env))) for b in chart.beta])

    # linearization rate from a start just off the radial set
    a0 = np.full(chart.n - 1, fl.start_alpha)
    span = (0.0, min(fl.max_time, 10.0 / abs(cls.lambda0)))
    traj = integrate_rescaled(chart, {"alpha": a0, "beta": q_beta}, span, fcfg, q=ctx.q)
    est = linearization_rate(traj, radius=fl.radius, lambda0=cls.lambda0)
    (out / "flow_trajectory.dat").write_text(_columns(traj))

    rng = np.random.default_rng(cfg.seed)
    decisions = []
    for st in _flow_starts(ctx, q_beta, rng):
        g = gamma_membership(chart, ctx.q, st, fcfg)
        decisions.append({"alpha": st["alpha"], "beta": st["beta"], "on_beta_q": st["on_beta_q"], **g.to_dict()})
    checks = {
        "linearization_rate": bool(est.relative_error <= fl.rate_tol),
        "wx_relation": bool(traj.extra["max_wx_residual"] < fl.wx_tol),
    }
    report = {
        "classification": cls.to_dict(),
        "rate": est.to_dict(),
        "trajectory": traj.summary(),
        "gamma_membership": decisions,
        "inconclusive": sum(d["status"] == "inconclusive" for d in decisions),
        "checks": checks,
    }
    return report, all(checks.values())


def _columns(traj) -> str:
    names = ["t"] + sorted(k for k in traj.extra if k.startswith(("alpha", "beta"))) + ["eta0", "xb"]
    cols = [traj.t] + [traj.extra[k] for k in names[1:]]
    lines = ["# " + " ".join(names)]
    for row in zip(*cols):
        lines.append(" ".join(f"{v:.12g}" for v in row))
    return "\n".join(lines) + "\n"


def stage_commutant(ctx: _Context) -> tuple[dict, bool]:
    cfg = ctx.cfg
    cm = cfg.commutant
    chart = ctx.chart
    grid = CommutantGrid(cm.half_width, tuple(cm.counts), zeta_max=cm.zeta_max)
    sub_c = to_conic_chart(subprincipal_difference(ctx.op), chart.conic)
    th = threshold_report(ctx.op, chart, ctx.q, with_sweep=False)
    report = {
        "case": cm.case,
        "s": cm.s,
        "s1": cm.s1,
        "s0": th.s0,
        "s1_lower_bound": th.s1_lower_bound,
    }
    try:
        cut = make_cutoffs(chart, cm.case, grid=grid, q=ctx.q)
    except SearchExhausted as err:
        report["search"] = {"ok": False, "tried": err.tried}
        return report, False
    report["cutoffs"] = cut.spec.to_dict()
    report["search"] = {"ok": True, "tried": cut.tried}
    reg = RegularizerSpec(cm.case, cm.s, ctx.op.m, cm.s1)
    try:
        sym = build_symbols(chart, reg, cut, sub_c, grid=grid, t_values=cm.t_values, q=ctx.q)
    except SignViolation as err:
        report["sign_violation"] = {"radicand": err.radicand, "point": err.point, "value": err.value, "t": err.t}
        return report, False
    ident = verify_commutator_identity(sym, grid, cm.t_values, cm.tol, ctx.q)
    supp = verify_support_conditions(sym, grid, ctx.q)
    fact = factorization_residual(sym, grid, q=ctx.q)
    report.update({"identity": ident.to_dict(), "support": supp.to_dict(), "factorization_residual": fact})
    ok = ident.ok and supp.ok and fact < 1e-10
    return report, ok


def stage_probe(ctx: _Context, out: Path) -> tuple[dict, bool]:
    pr = ctx.cfg.probe
    grid = GridSpec(pr.points, pr.half_width, pr.window)
    table = threshold_experiment([complex(*c) for c in pr.c], grid)
    spectra = []
    for model, params in [("heaviside", {}), ("delta", {}), ("gaussian", {})]:
        sp = dyadic_shell_energies(sample_model_solution(model, params, grid))
        spectra.append(f"# model {model}\n" + sp.to_columns())
    (out / "probe_spectra.dat").write_text("\n".join(spectra))
    (out / "probe_table.dat").write_text(table.to_columns())
    checks = {"threshold_match": bool(table.max_abs_diff <= pr.tol)}
    return {"table": table.to_dict(), "tol": pr.tol, "checks": checks}, all(checks.values())


STAGES = {
    "analyze": lambda ctx, out: stage_analyze(ctx),
    "flow": stage_flow,
    "commutant": lambda ctx, out: stage_commutant(ctx),
    "probe": stage_probe,
}


def _verdict(results: dict, cfg: RunConfig) -> dict:
    rows = []
    probe = results.get("probe", ({}, False))[0]
    for r in probe.get("table", {}).get("rows", []):
        rows.append(
            {
                "c": r["c"],
                "predicted_s0": r["s0"],
                "measured_s_star": r["s_star"],
                "abs_diff": r["abs_diff"],
                "pass": bool(r["abs_diff"] <= cfg.probe.tol),
            }
        )
    analyze = results.get("analyze", ({}, False))[0]
    return {
        "operator_s0": analyze.get("threshold", {}).get("s0"),
        "rows": rows,
        "stages": {k: v[1] for k, v in results.items()},
        "pass": all(v[1] for v in results.values()),
    }


def run(command: str, cfg: RunConfig, out: Path) -> int:
    """Execute ``command`` and write reports into ``out``; returns the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc)
    chash = cfg.hash()
    names = list(STAGES) if command == "full" else [command]
    results = {}
    code = EXIT_OK
    try:
        ctx = _Context(cfg)
        for name in names:
            log.info("running %s", name)
            try:
                report, ok = STAGES[name](ctx, out)
            except DegeneracyError as err:
                report, ok = {"error": f"{type(err).__name__}: {err}"}, False
            results[name] = (report, ok)
            (out / f"{name}.json").write_text(dumps({"config_hash": chash, "stage": name, "ok": ok, **report}))
            if not ok:
                code = EXIT_VERIFY
        if command == "full":
            (out / "verdict.json").write_text(dumps({"config_hash": chash, **_verdict(results, cfg)}))
    except ConfigError:
        raise
    except (FlowError, ProbeError, EvaluationError, FloatingPointError, ArithmeticError, ValueError, RuntimeError) as err:
        log.error("numerical failure: %s", err)
        (out / "error.json").write_text(dumps({"config_hash": chash, "error": f"{type(err).__name__}: {err}"}))
        code = EXIT_NUMERIC
    meta = {
        "config_hash": chash,
        "config_path": cfg.source,
        "command": command,
        "started": started.isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "exit_code": code,
    }
    (out / "metadata.json").write_text(dumps(meta))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radialscope", description="Radial point threshold analysis.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out or cfg.out_dir)
        return run(args.command, cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
