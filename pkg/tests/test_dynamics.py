import numpy as np
import pytest

from radialscope.dynamics import (
    FlowConfig,
    FlowError,
    dense_path,
    gamma_membership,
    integrate_hamilton,
    integrate_rescaled,
    lambda0_along,
    linearization_rate,
    path_distance,
)
from radialscope.geometry import LagrangianSpec, build_normal_coordinates
from radialscope.symcore import ChartSpec, Var, mul, parse

C1 = ChartSpec.standard(1)
LAG2 = LagrangianSpec(2)


def chart_for(text):
    return build_normal_coordinates(parse(text, LAG2.canonical), LAG2)


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(rtol=0)
    with pytest.raises(ValueError):
        FlowConfig(radius=1e-3, confirm_radius=1e-2)


def test_hamilton_flow_closed_form():
    tr = integrate_hamilton(parse("x*xi", C1), ([1.0], [2.0]), (0.0, 3.0))
    assert tr.status == "ok"
    assert np.allclose(tr.column("x"), np.exp(tr.t), rtol=1e-8)
    assert np.allclose(tr.column("xi"), 2 * np.exp(-tr.t), rtol=1e-8)
    assert tr.conservation_error < 1e-8


def test_hamilton_flow_overflow_event():
    tr = integrate_hamilton(parse("x*xi", C1), ([1.0], [1.0]), (0.0, 100.0))
    assert tr.status == "overflow"
    assert tr.exit_time == pytest.approx(np.log(1e12), abs=1e-6)


def test_hamilton_flow_backward():
    tr = integrate_hamilton(parse("xi^2/2", C1), ([0.0], [1.0]), (0.0, -2.0))
    assert tr.column("x")[-1] == pytest.approx(-2.0)


def test_trajectory_csv():
    tr = integrate_hamilton(parse("x*xi", C1), ([1.0], [1.0]), (0.0, 1.0), FlowConfig(samples=5))
    lines = tr.to_csv().strip().splitlines()
    assert lines[0] == "t,x,xi,p" and len(lines) == 6


def test_hamilton_homogeneity_rescaling():
    # fibers scaled by c: the curve is the same with time scaled by c^(m-1)
    p = parse("x2*xi2^2 + xi1^2/4", LAG2.canonical)
    c = 2.0
    a = integrate_hamilton(p, ([0.1, 0.2], [0.3, 1.0]), (0.0, 1.0))
    b = integrate_hamilton(p, ([0.1, 0.2], [c * 0.3, c * 1.0]), (0.0, 1.0 / c))
    xa = a.sol.sol(np.linspace(0, 1, 50))
    xb = b.sol.sol(np.linspace(0, 1, 50) / c)
    assert np.allclose(xa[:2], xb[:2], atol=1e-8)
    assert np.allclose(c * xa[2:], xb[2:], atol=1e-8)


@pytest.mark.parametrize("text, lam0", [("x2*xi2", 1.0), ("-x2*xi2", -1.0), ("x2*xi2*(1 + x2)", 1.0), ("x2*xi2^2", 1.0)])
def test_linearization_rate_matches_lambda0(text, lam0):
    ch = chart_for(text)
    tr = integrate_rescaled(ch, {"alpha": [1e-3], "beta": [0.0]}, (0.0, 4.0))
    est = linearization_rate(tr, radius=1e-2, lambda0=tr.extra["lambda0_q"])
    assert tr.extra["lambda0_q"] == pytest.approx(lam0)
    assert est.relative_error < 0.05
    assert tr.extra["max_wx_residual"] < 1e-8


def test_linearization_rate_nonlinear_model_converges():
    ch = chart_for("x2*xi2 + x2^2*xi2 + x1*x2*xi1 + xi1^2/xi2")
    errs = []
    for a0 in (1e-2, 1e-3, 1e-4):
        tr = integrate_rescaled(ch, {"alpha": [a0], "beta": [0.0]}, (0.0, 3.0))
        est = linearization_rate(tr, radius=10 * a0, lambda0=tr.extra["lambda0_q"])
        errs.append(est.relative_error)
    assert errs[-1] < 0.05
    assert errs[-1] <= errs[0] + 1e-12


def test_linearization_needs_tail():
    ch = chart_for("x2*xi2")
    tr = integrate_rescaled(ch, {"alpha": [0.5], "beta": [0.0]}, (0.0, 1.0))
    with pytest.raises(FlowError, match="too short"):
        linearization_rate(tr, radius=1e-2)


def test_rescaled_flow_reparametrization():
    ch = chart_for("x2*xi2^2")
    zc = Var("xi2")
    a = integrate_rescaled(ch, {"alpha": [0.01], "beta": [0.2]}, (0.0, 2.0), zeta=zc)
    b = integrate_rescaled(ch, {"alpha": [0.01], "beta": [0.2]}, (0.0, 4.0), zeta=mul(2, zc))
    # zeta -> 2 zeta halves W_p for m = 2: same curve, twice the time
    assert path_distance(dense_path(a), dense_path(b)) < 1e-6
    assert np.allclose(a.extra["alpha1"][-1], b.extra["alpha1"][-1], rtol=1e-8)


def test_lambda0_along_path():
    ch = chart_for("x2*xi2*(1 + x2)")
    tr = integrate_rescaled(ch, {"alpha": [0.01], "beta": [0.1]}, (0.0, 1.0))
    lam = lambda0_along(tr, ch)
    assert np.allclose(lam, 1 + 2 * tr.column("x2"))


@pytest.fixture(scope="module")
def source_chart():
    return chart_for("x2*xi2")


def _starts(seed=11, count=20):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        a = rng.uniform(0.05, 0.3) * rng.choice([-1, 1])
        b = 0.0 if i % 2 == 0 else rng.uniform(0.2, 0.5) * rng.choice([-1, 1])
        out.append(({"alpha": [a], "beta": [b]}, b == 0.0))
    return out


def test_gamma_membership_matches_closed_form(source_chart):
    # for x2*xi2 the flow keeps beta fixed and drives alpha to 0 backward in time
    for x0, expected in _starts():
        g = gamma_membership(source_chart, [0.0], x0)
        assert g.status == ("member" if expected else "non-member"), (x0, g.details)
        if expected:
            assert g.direction == "backward"


def test_gamma_membership_sink_direction():
    ch = chart_for("-x2*xi2")
    g = gamma_membership(ch, [0.0], {"alpha": [0.2], "beta": [0.0]})
    assert g.status == "member" and g.direction == "forward"


def test_gamma_membership_off_center_q(source_chart):
    g = gamma_membership(source_chart, [0.3], {"alpha": [0.1], "beta": [0.3]})
    assert g.status == "member"
    g = gamma_membership(source_chart, [0.3], {"alpha": [0.1], "beta": [0.0]})
    assert g.status == "non-member"


def test_gamma_membership_rejects_start_on_radial_set(source_chart):
    with pytest.raises(ValueError, match="radial set"):
        gamma_membership(source_chart, [0.0], {"alpha": [0.0], "beta": [0.1]})


def test_gamma_membership_inconclusive_on_tiny_budget(source_chart):
    cfg = FlowConfig(max_time=0.5)
    g = gamma_membership(source_chart, [0.0], {"alpha": [0.1], "beta": [0.0]}, cfg)
    assert g.status == "inconclusive"


def test_blowup_radius_monotone_near_front(source_chart):
    tr = integrate_rescaled(source_chart, {"alpha": [1e-4], "beta": [0.1]}, (0.0, 5.0))
    r = np.abs(tr.extra["alpha1"])
    near = r < 0.1
    assert np.all(np.diff(r[near]) > 0)
