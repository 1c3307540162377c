import json

import pytest

from radialscope.cli import main
from radialscope.config import ConfigError, bundled, from_dict, load

BASE = """seed = 3

[operator]
n = 2
m = 1
principal = "x2*xi2"
lower = ["-0.25*I"]

[lagrangian]
q = [0.0]

[numeric.probe]
points = 65536
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_bundled_configs_load():
    cfg = load(bundled("model_xdx.toml"))
    assert cfg.command == "full" and cfg.operator.principal == "x2*xi2"
    bad = load(bundled("model_xdx_bad_commutant.toml"))
    assert bad.commutant.s == 0.6


def test_hash_depends_on_seed_only_through_settings():
    a = from_dict({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}})
    b = from_dict({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}, "output": {"dir": "elsewhere"}})
    c = from_dict({"seed": 2, "operator": {"n": 1, "m": 1, "principal": "x*xi"}})
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"operator": {"n": 1, "m": 1, "principal": "x*xi"}}, "seed"),
        ({"seed": 1}, "[operator]"),
        ({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*eta"}}, "operator.principal"),
        ({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi", "colour": 1}}, "operator.colour"),
        ({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}, "analysis": {"run": ["flow", "probe"]}}, "analysis.run"),
        ({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}, "analysis": {"run": "plot"}}, "analysis.run"),
        ({"seed": 1, "operator": {"n": 2, "m": 1, "principal": "x2*xi2"}, "lagrangian": {"q": [0, 1]}}, "lagrangian.q"),
        (
            {"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}, "numeric": {"commutant": {"case": "above"}}},
            "numeric.commutant.s1",
        ),
        ({"seed": 1, "operator": {"n": 1, "m": 1, "principal": "x*xi"}, "numeric": {"probe": {"c": [[0, 0.7]]}}}, "numeric.probe.c[0]"),
    ],
)
def test_validation_names_field(raw, field):
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    assert field in str(err.value)


def test_malformed_toml_exit_1(tmp_path, capsys):
    path = write(tmp_path, "seed = 1\n[operator\nn = 2\n")
    assert main(["analyze", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_non_homogeneous_operator_exit_1(tmp_path, capsys):
    path = write(tmp_path, 'seed = 1\n[operator]\nn = 1\nm = 1\nprincipal = "x*xi^2"\n')
    assert main(["analyze", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "homogeneous" in capsys.readouterr().err


def test_analyze_reports(tmp_path):
    out = tmp_path / "o"
    assert main(["analyze", "--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    rep = json.loads((out / "analyze.json").read_text())
    assert rep["threshold"]["s0"] == pytest.approx(0.25)
    assert rep["threshold"]["kind"] == "source"
    assert rep["ok"] and len(rep["config_hash"]) == 64
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config_hash"] == rep["config_hash"] and "started" in meta


def test_flow_reports(tmp_path):
    out = tmp_path / "o"
    assert main(["flow", "--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    rep = json.loads((out / "flow.json").read_text())
    assert rep["rate"]["relative_error"] < 0.05
    statuses = [(d["on_beta_q"], d["status"]) for d in rep["gamma_membership"]]
    assert all(s == ("member" if on else "non-member") for on, s in statuses)
    header = (out / "flow_trajectory.dat").read_text().splitlines()[0]
    assert header.split()[1:3] == ["t", "alpha1"]


def test_probe_reports_plot_data(tmp_path):
    out = tmp_path / "o"
    assert main(["probe", "--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    rows = (out / "probe_table.dat").read_text().splitlines()
    assert rows[0].startswith("#") and len(rows) == 4
    assert "# model delta" in (out / "probe_spectra.dat").read_text()


def test_bad_commutant_exit_2(tmp_path):
    out = tmp_path / "o"
    code = main(["commutant", "--config", str(bundled("model_xdx_bad_commutant.toml")), "--out", str(out)])
    assert code == 2
    rep = json.loads((out / "commutant.json").read_text())
    assert rep["sign_violation"]["radicand"] == "g2"
    assert rep["s"] > rep["s0"]


def test_full_run_deterministic(tmp_path):
    path = write(tmp_path, BASE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["full", "--config", path, "--out", str(a)]) == 0
    assert main(["full", "--config", path, "--out", str(b)]) == 0
    for name in ("analyze.json", "flow.json", "commutant.json", "probe.json", "verdict.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    verdict = json.loads((a / "verdict.json").read_text())
    assert verdict["pass"] and all(r["abs_diff"] <= 0.1 for r in verdict["rows"])
    assert verdict["operator_s0"] == pytest.approx(0.25)


def test_seed_override_changes_hash(tmp_path):
    path = write(tmp_path, BASE)
    main(["analyze", "--config", path, "--out", str(tmp_path / "a")])
    main(["analyze", "--config", path, "--out", str(tmp_path / "b"), "--seed", "9"])
    ha = json.loads((tmp_path / "a" / "analyze.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b" / "analyze.json").read_text())["config_hash"]
    assert ha != hb


def test_degenerate_operator_exit_2(tmp_path):
    text = BASE.replace('principal = "x2*xi2"', 'principal = "x2^2*xi2"')
    out = tmp_path / "o"
    assert main(["analyze", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert "DegeneracyError" in json.loads((out / "analyze.json").read_text())["error"]
