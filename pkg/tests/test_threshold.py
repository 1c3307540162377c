import pytest

from radialscope.geometry import LagrangianSpec, build_normal_coordinates
from radialscope.symcore import ChartSpec, Var, equal_on_samples, evaluate, parse
from radialscope.threshold import (
    OperatorSpec,
    SweepConfig,
    adjoint_quadrature_residual,
    formal_adjoint_symbol,
    invariance_check,
    model_operator,
    s0,
    s1_bound,
    subprincipal_difference,
    subprincipal_from_adjoint,
    threshold_f,
    threshold_report,
)

C1 = ChartSpec.standard(1)
LAG1 = LagrangianSpec(1)


def model(c, n=1):
    op = model_operator(c, n)
    return op, build_normal_coordinates(op.principal, LagrangianSpec(n))


@pytest.mark.parametrize("c, expected", [(0, 0.5), (0.25j, 0.25), (-0.25j, 0.75), (0.3 + 0.25j, 0.25)])
def test_model_threshold(c, expected):
    op, ch = model(c)
    assert abs(s0(op, ch).value - expected) < 1e-9
    rep = threshold_report(op, ch, with_sweep=False)
    assert rep.kind == "source" and rep.homogeneous


def test_model_threshold_in_two_dimensions():
    op, ch = model(0.1j, 2)
    assert s0(op, ch, q=(0.3,)).value == pytest.approx(0.4, abs=1e-12)


def test_subprincipal_difference_matches_adjoint_expansion():
    op = OperatorSpec.from_strings(1, 1, "x*xi", ["-0.25*I + x"], density="exp(2*x)")
    a = subprincipal_difference(op)
    b = subprincipal_from_adjoint(op)
    assert equal_on_samples(a, b, {"x": (-1, 1), "xi": (0.5, 2)}).equal


def test_model_adjoint_symbol():
    op = model_operator(0.25j)
    adj = formal_adjoint_symbol(op)
    # (x D_x - c)^* = x D_x - conj(c) - i for Lebesgue density
    total = sum(adj.values(), parse("0"))
    assert equal_on_samples(total, parse("x*xi + 0.25*I - I"), {"x": (-1, 1), "xi": (-1, 1)}).equal


@pytest.mark.parametrize(
    "density, lower",
    [("1", "-0.25*I"), ("exp(2*x)", "0.3 + 0.1*I*x"), ("1 + x^2", "I*x^2")],
)
def test_adjoint_pinned_by_quadrature(density, lower):
    op = OperatorSpec.from_strings(1, 1, "x*xi + x^2*xi", [lower], density=density)
    assert adjoint_quadrature_residual(op, pairs=10, seed=3) < 1e-6


def test_quadrature_detects_wrong_adjoint():
    op = model_operator(0.25j)
    adj = formal_adjoint_symbol(op)
    wrong = {k: v for k, v in adj.items()}
    wrong[0] = parse("0.25*I")  # drops the -i from commuting D_x past x
    assert adjoint_quadrature_residual(op, adjoint=wrong, pairs=5, seed=0) > 1e-3


def test_threshold_f_is_degree_zero():
    op, ch = model(0.25j, 2)
    f = threshold_f(op, ch)
    env = {"x1": 0.1, "x2": 0.0, "xi1": 0.0, "xi2": 3.0}
    # 1/2 from the Weyl correction of x*xi, -Im c from the lower term
    assert evaluate(f, env) == pytest.approx(0.25)


def test_sweep_recovers_homogeneous_value():
    op, ch = model(0.25j)
    forced = s0(op, ch, sweep=SweepConfig(radius_exponents=(1, 2, 3), zeta0_exponents=(3, 4, 5)), force_sweep=True)
    assert forced.value == pytest.approx(0.25, abs=1e-12)
    assert len(forced.ladder) == 9 and len(forced.diagonal) == 3


def test_non_homogeneous_subprincipal_uses_ladder():
    op = OperatorSpec.from_strings(1, 1, "x*xi", ["-0.25*I - I/xi"])
    ch = build_normal_coordinates(op.principal, LAG1)
    e0 = s0(op, ch)
    e1 = s1_bound(op, ch)
    assert not e0.homogeneous
    # the correction decays like 1/zeta, so the extrapolated value is close to the limit
    assert e0.value == pytest.approx(0.25, abs=5e-3)
    assert e1.value == pytest.approx(0.25, abs=5e-3)
    assert e0.value <= e1.value + 1e-12


def test_sink_threshold_sign():
    op = OperatorSpec.from_strings(1, 1, "-x*xi", ["0.25*I"])
    ch = build_normal_coordinates(op.principal, LAG1)
    rep = threshold_report(op, ch, with_sweep=False)
    assert rep.kind == "sink"
    # -(x D_x - 0.25i) has the same threshold as x D_x - 0.25i
    assert rep.s0 == pytest.approx(0.25, abs=1e-12)


def test_invariance_under_rescaling_and_density():
    op, ch = model(0.3 + 0.25j)
    rep = invariance_check(op, ch, n_rescale=10, n_density=5, seed=5)
    assert rep.ok
    assert max(c["delta"] for c in rep.cases if c["kind"] != "lower_order") < 1e-9
    assert all(c["class"] == "source" for c in rep.cases)


def test_operator_spec_validation():
    with pytest.raises(ValueError, match="homogeneous"):
        OperatorSpec.from_strings(1, 1, "x*xi^2").validate()
    with pytest.raises(ValueError, match="real"):
        OperatorSpec.from_strings(1, 1, "I*x*xi").validate()
    with pytest.raises(ValueError, match="density"):
        OperatorSpec(1, ((1, Var("x")),), C1, density=Var("xi"))
