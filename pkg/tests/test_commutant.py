import numpy as np
import pytest

from radialscope.commutant import (
    ABOVE,
    BELOW,
    CommutantGrid,
    CutoffSpec,
    RegularizerSpec,
    SearchConfig,
    SearchExhausted,
    SignViolation,
    build_cutoffs,
    build_symbols,
    factorization_residual,
    make_cutoffs,
    make_rho,
    radicand_sign_report,
    rho_family,
    verify_commutator_identity,
    verify_support_conditions,
)
from radialscope.geometry import LagrangianSpec, build_normal_coordinates, to_conic_chart
from radialscope.symcore import evaluate
from radialscope.threshold import model_operator, subprincipal_difference


@pytest.fixture(scope="module")
def model():
    op = model_operator(0, n=2)
    ch = build_normal_coordinates(op.principal, LagrangianSpec(2))
    sub = to_conic_chart(subprincipal_difference(op), ch.conic)
    return ch, sub


def test_regularizer_spec_checks():
    with pytest.raises(ValueError, match="s1"):
        RegularizerSpec(ABOVE, 1.0, 1)
    with pytest.raises(ValueError, match="s > s1"):
        RegularizerSpec(ABOVE, 0.5, 1, 0.6)
    with pytest.raises(ValueError, match="t must"):
        RegularizerSpec(BELOW, 0.0, 1, t=2.0)


def test_rho_below_is_regularized():
    spec = RegularizerSpec(BELOW, 0.3, 1, t=0.5)
    rho = make_rho(spec)
    z = np.geomspace(1, 100, 30)
    v = evaluate(rho, {"zeta": z})
    # equals zeta^k until (t zeta)^2 reaches the inner edge, then vanishes for large zeta
    assert np.allclose(v[z < 1.9], z[z < 1.9] ** spec.k)
    assert np.all(v[z > 4.1] == 0)


def test_rho_above_reaches_target_order():
    spec = RegularizerSpec(ABOVE, 1.0, 1, 0.5)
    rho, _ = rho_family(spec)
    z = np.array([1e6, 2e6])
    v = evaluate(rho, {"zeta": z, "t": np.array([1.0, 1.0])})
    # order drops from s to s1 when t = 1
    assert np.log2(v[1] / v[0]) == pytest.approx(spec.k + spec.s1 - spec.s, abs=1e-5)


def test_rho_logderivative(model):
    for spec in (RegularizerSpec(BELOW, 0.2, 1), RegularizerSpec(ABOVE, 1.0, 1, 0.5)):
        rho, logd = rho_family(spec)
        z = np.linspace(1.5, 3.0, 9)
        t = np.full_like(z, 0.3)
        h = 1e-6
        fd = (evaluate(rho, {"zeta": z + h, "t": t}) - evaluate(rho, {"zeta": z - h, "t": t})) / (2 * h)
        assert np.allclose(fd, evaluate(logd, {"zeta": z, "t": t}) * evaluate(rho, {"zeta": z, "t": t}), rtol=1e-6)


@pytest.mark.parametrize("case, s, s1", [(BELOW, 0.0, None), (BELOW, 0.4, None), (ABOVE, 1.0, 0.5), (ABOVE, 0.7, 0.6)])
def test_identity_holds(model, case, s, s1):
    ch, sub = model
    cut = make_cutoffs(ch, case)
    sym = build_symbols(ch, RegularizerSpec(case, s, 1, s1), cut, sub)
    rep = verify_commutator_identity(sym)
    assert rep.ok and rep.max_residual < 1e-8
    assert [r["t"] for r in rep.per_t] == pytest.approx([0.1 * i for i in range(11)])


def test_grid_has_ten_thousand_points(model):
    ch, _ = model
    pts = CommutantGrid().points(ch, 1.0)
    assert len(pts["zeta"]) == 10**4


def test_support_conditions(model):
    ch, sub = model
    for case, s1 in ((BELOW, None), (ABOVE, 0.5)):
        sym = build_symbols(ch, RegularizerSpec(case, 1.0 if s1 else 0.0, 1, s1), make_cutoffs(ch, case), sub)
        rep = verify_support_conditions(sym)
        assert rep.ok, rep.failed()


def test_factorization(model):
    ch, sub = model
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.0, 1), make_cutoffs(ch, BELOW), sub)
    assert factorization_residual(sym) < 1e-12
    assert factorization_residual(sym, t=0.5) < 1e-12


def test_wrong_sign_breaks_identity(model):
    ch, sub = model
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.0, 1), make_cutoffs(ch, BELOW), sub, sign_lambda=-1, check=False)
    assert verify_commutator_identity(sym).max_residual > 0.1


def test_below_case_crossing_threshold(model):
    ch, sub = model
    cut = make_cutoffs(ch, BELOW)
    with pytest.raises(SignViolation) as err:
        build_symbols(ch, RegularizerSpec(BELOW, 0.6, 1), cut, sub)
    assert err.value.radicand == "g2"
    assert set(err.value.point) == {"y1", "z", "th1", "zeta"}


def test_above_case_crossing_threshold(model):
    ch, sub = model
    with pytest.raises(SignViolation):
        build_symbols(ch, RegularizerSpec(ABOVE, 0.4, 1, 0.3), make_cutoffs(ch, ABOVE), sub)


def test_sign_report_is_non_raising(model):
    ch, sub = model
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.6, 1), make_cutoffs(ch, BELOW), sub, check=False)
    rep = radicand_sign_report(sym)
    assert not rep["ok"] and rep["radicand"] == "g2"


def test_search_exhausted(model):
    ch, _ = model
    with pytest.raises(SearchExhausted) as err:
        make_cutoffs(ch, ABOVE, SearchConfig(C_magnitudes=(1e-6, 1e-7)))
    assert len(err.value.tried) == 8 and not any(t["ok"] for t in err.value.tried)


def test_large_cutoff_leaves_the_box(model):
    ch, sub = model
    cut = build_cutoffs(ch, CutoffSpec(-1.0, 0.1, T0=1.0))
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.0, 1), cut, sub, check=False)
    rep = verify_support_conditions(sym)
    assert "compact_in_box" in rep.failed()


def test_cutoff_search_picks_sign_by_case(model):
    ch, _ = model
    assert make_cutoffs(ch, BELOW).spec.C < 0
    assert make_cutoffs(ch, ABOVE).spec.C > 0


def test_sink_model_identity():
    from radialscope.threshold import OperatorSpec

    op = OperatorSpec.from_strings(2, 1, "-x2*xi2", ["0.1*I"])
    ch = build_normal_coordinates(op.principal, LagrangianSpec(2))
    sub = to_conic_chart(subprincipal_difference(op), ch.conic)
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.0, 1), make_cutoffs(ch, BELOW), sub)
    assert sym.sign == -1
    assert verify_commutator_identity(sym).ok


def test_t_is_symbolic(model):
    ch, sub = model
    sym = build_symbols(ch, RegularizerSpec(BELOW, 0.0, 1), make_cutoffs(ch, BELOW), sub)
    assert "t" in sym.b.free_vars
