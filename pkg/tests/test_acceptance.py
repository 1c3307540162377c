"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; ``conftest.py`` prints them in the
terminal summary so they show without ``-s``.
"""

import time

import numpy as np
import pytest

from radialscope.commutant import (
    ABOVE,
    BELOW,
    CommutantGrid,
    RegularizerSpec,
    SignViolation,
    build_symbols,
    make_cutoffs,
    verify_commutator_identity,
)
from radialscope.dynamics import gamma_membership, integrate_rescaled, linearization_rate
from radialscope.geometry import (
    BlowupChart,
    LagrangianSpec,
    blowup_lift,
    build_normal_coordinates,
    conic_hamilton_field,
    cosphere_field,
    sink_source_classify,
    to_conic_chart,
    verify_eigen_relations,
)
from radialscope.probe import GridSpec, critical_exponent, threshold_experiment
from radialscope.symcore import equal_on_samples, hamilton_field, parse
from radialscope.threshold import (
    adjoint_quadrature_residual,
    invariance_check,
    model_operator,
    s0,
    s1_bound,
    subprincipal_difference,
)

RESULTS = {}
LAG2 = LagrangianSpec(2)


def record(num, title, ok, detail):
    line = f"criterion {num} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def chart2(text):
    return build_normal_coordinates(parse(text, LAG2.canonical), LAG2)


def test_criterion_1_threshold_formula():
    t0 = time.perf_counter()
    errs, adj = [], []
    lag = LagrangianSpec(1)
    for c in (0, 0.25j, -0.25j, 0.3 + 0.25j):
        op = model_operator(c)
        ch = build_normal_coordinates(op.principal, lag)
        errs.append(abs(s0(op, ch).value - (0.5 - complex(c).imag)))
        adj.append(adjoint_quadrature_residual(op, pairs=20, seed=0))
    dt = time.perf_counter() - t0
    ok = max(errs) < 1e-9 and max(adj) < 1e-6 and dt < 5
    record(1, "threshold on x D_x - c", ok, f"max |s0 - (1/2 - Im c)| = {max(errs):.1e}, adjoint residual {max(adj):.1e}, {dt:.2f} s")


def test_criterion_2_measured_threshold():
    t0 = time.perf_counter()
    tab = threshold_experiment([0, 0.25j, -0.25j], GridSpec(points=2**20))
    dt = time.perf_counter() - t0
    detail = ", ".join(f"s*={r['s_star']:.4f}/s0={r['s0']:.2f}" for r in tab.rows)
    record(2, "measured s* of x_+^{ic}", tab.max_abs_diff <= 0.1 and dt < 60, f"{detail}, {dt:.1f} s")


def test_criterion_3_commutator_identity():
    op = model_operator(0, n=2)
    ch = build_normal_coordinates(op.principal, LAG2)
    sub = to_conic_chart(subprincipal_difference(op), ch.conic)
    th0 = s0(op, ch).value
    th1 = s1_bound(op, ch).value
    grid = CommutantGrid()
    assert len(grid.points(ch, 1.0)["zeta"]) == 10**4
    res = {}
    for case, s, s1 in ((BELOW, th0 - 0.5, None), (ABOVE, th1 + 0.5, th1)):
        sym = build_symbols(ch, RegularizerSpec(case, s, 1, s1), make_cutoffs(ch, case), sub)
        res[case] = verify_commutator_identity(sym, grid).max_residual
    crossed = []
    for case, s, s1 in ((BELOW, th0 + 0.1, None), (ABOVE, th1 + 0.1, th1 - 0.1)):
        try:
            build_symbols(ch, RegularizerSpec(case, s, 1, s1), make_cutoffs(ch, case), sub)
            crossed.append(False)
        except SignViolation:
            crossed.append(True)
    ok = max(res.values()) < 1e-8 and all(crossed)
    record(3, "commutator identity", ok, f"below {res[BELOW]:.1e}, above {res[ABOVE]:.1e}, sign violation on crossing: {crossed}")


def test_criterion_4_normal_form():
    worst = 0.0
    for text in ("x2*xi2", "x2*xi2 + x2^2*xi2 + x1*x2*xi1 + xi1^2/xi2"):
        rep = verify_eigen_relations(chart2(text), count=50, seed=0)
        worst = max(worst, rep.max_residual)
    push = 0.0
    dom = {"y1": (-1, 1), "z": (-1, 1), "th1": (-1, 1), "zeta": (0.5, 2)}
    for text in ("x2*xi2", "x2*xi2 + x2^2*xi2 + x1*x2*xi1 + xi1^2/xi2"):
        p = parse(text, LAG2.canonical)
        a = to_conic_chart(hamilton_field(p, LAG2.canonical), LAG2.conic)
        b = conic_hamilton_field(to_conic_chart(p, LAG2.conic), LAG2.conic)
        for u, v in zip(a.coeffs, b.coeffs):
            push = max(push, equal_on_samples(u, v, dom, n=100, seed=0).residual)
    record(4, "normal coordinates", worst < 1e-9 and push < 1e-9, f"eigen residual {worst:.1e}, pushforward residual {push:.1e}")


def test_criterion_5_dynamics():
    rates = {}
    wx = 0.0
    for text in ("x2*xi2", "-x2*xi2"):
        ch = chart2(text)
        tr = integrate_rescaled(ch, {"alpha": [1e-3], "beta": [0.0]}, (0.0, 4.0))
        est = linearization_rate(tr, radius=1e-2, lambda0=tr.extra["lambda0_q"])
        rates[text] = est.relative_error
        wx = max(wx, tr.extra["max_wx_residual"])
    ch = chart2("x2*xi2")
    rng = np.random.default_rng(2024)
    agree = 0
    for i in range(20):
        a = rng.uniform(0.05, 0.3) * rng.choice([-1, 1])
        on = i % 2 == 0
        b = 0.0 if on else rng.uniform(0.2, 0.5) * rng.choice([-1, 1])
        g = gamma_membership(ch, [0.0], {"alpha": [a], "beta": [b]})
        agree += g.status == ("member" if on else "non-member")
    ok = max(rates.values()) < 0.05 and wx < 1e-8 and agree == 20
    record(5, "rescaled flow", ok, f"rate errors {max(rates.values()):.1e}, W x residual {wx:.1e}, Gamma_q {agree}/20")


def test_criterion_6_invariance():
    worst = 0.0
    stable = True
    for c in (0, 0.25j, 0.3 + 0.25j):
        op = model_operator(c)
        ch = build_normal_coordinates(op.principal, LagrangianSpec(1))
        rep = invariance_check(op, ch, n_rescale=10, n_density=5, seed=1)
        cases = [k for k in rep.cases if k["kind"] in ("rescale", "density")]
        assert len(cases) == 15
        worst = max(worst, max(k["delta"] for k in cases))
        stable &= all(k["class"] == rep.base_kind for k in cases)
    record(6, "threshold invariance", worst < 1e-9 and stable, f"max delta {worst:.1e}, classification stable: {stable}")


def test_criterion_7_blowup():
    worst = np.inf
    for text in ("x2*xi2", "-x2*xi2", "x2*xi2*(1 + x2)", "x2*xi2 + x2^2*xi2 + x1*x2*xi1 + xi1^2/xi2"):
        ch = chart2(text)
        lam0 = sink_source_classify(ch).lambda0
        W, a, b = cosphere_field(ch)
        lift = blowup_lift(W, BlowupChart(a, b))
        r = np.linspace(0.0, 1e-3, 11)
        rr, om, bb = np.meshgrid(r, [-1.0, 1.0], np.linspace(-0.2, 0.2, 5), indexing="ij")
        vr = lift.r_component(rr.ravel(), om.ravel()[None], bb.ravel()[None])
        assert np.all(np.isfinite(vr))
        worst = min(worst, float(np.min(np.sign(lam0) * vr / abs(lam0))))
    record(7, "blow-up r-component", worst >= 0.5, f"min sgn(lambda0) V_r / |lambda0| = {worst:.4f}")


def test_criterion_8_probe_calibration():
    h = critical_exponent("heaviside").s_star
    d = critical_exponent("delta").s_star
    g = critical_exponent("gaussian")
    win = abs(critical_exponent("heaviside", grid=GridSpec(window=0.25)).s_star - h)
    ref = abs(critical_exponent("heaviside", grid=GridSpec(points=2**19)).s_star - h)
    ok = abs(h - 0.5) <= 0.05 and abs(d + 0.5) <= 0.05 and g.smooth and win < 0.05 and ref < 0.03
    record(8, "probe calibration", ok, f"heaviside {h:.4f}, delta {d:.4f}, gaussian smooth {g.smooth}, window shift {win:.1e}, grid shift {ref:.1e}")


@pytest.fixture(scope="session", autouse=True)
def _expose_results(request):
    request.config._acceptance_results = RESULTS
    yield
