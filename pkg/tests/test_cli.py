import json

import pytest

from twophase.cli_report import RunConfig, load_config, main, validate


def _run(tmp_path, *args):
    return main(["run", "--out-dir", str(tmp_path), *args])


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    assert "case_d_cutoff" in capsys.readouterr().out.split()


def test_validate_reports_every_problem(capsys):
    rc = main(["validate", "--scenario", "nope", "--t0", "1", "--t1", "0", "--set", "field.bogus=1"])
    out = capsys.readouterr().out
    assert rc == 1
    assert "unknown scenario" in out and "t1 must exceed t0" in out and "bogus" in out


def test_validate_accepts_defaults():
    assert validate(RunConfig()) == []


def test_dotted_overrides_and_types():
    cfg, diags = load_config({"scenario": "case_d", "field.alpha_plus": "2.5", "snap": "0,0.5", "particles": "300"})
    assert diags == []
    assert cfg.overrides == {"alpha_plus": 2.5} and cfg.snap == [0.0, 0.5] and cfg.particles == 300
    _, diags = load_config({"particles": "1.5", "colour": "red"})
    assert len(diags) == 2


def test_bad_config_exits_1(tmp_path):
    assert _run(tmp_path, "--scenario", "case_a", "--dt", "-1") == 1
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert main(["run", "--config", str(bad)]) == 1


def test_run_writes_outputs_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ("--scenario", "case_c", "--t1", "0.4", "--snap", "0,0.4", "--particles", "600")
    assert _run(a, *args) == 0
    assert _run(b, *args) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["figure_case_c.svg", "report.json", "sets_0.4.csv", "sets_0.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    header = (a / "sets_0.4.csv").read_text().splitlines()[0]
    assert header.startswith("t,branch_id,x1,x2,phase,on_interface")
    rep = json.loads((a / "report.json").read_text())
    assert rep["status"] == "ok"
    assert rep["snapshots"][-1]["measure"] == pytest.approx(4.0, abs=1e-6)
    assert "two_phase_psi_1" in rep["transport"]
    assert (a / "figure_case_c.svg").read_text().startswith("<svg")


def test_config_file_and_env_out_dir(tmp_path, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scenario": "case_a", "t1": 0.2, "particles": 200, "outputs": ["json"]}))
    monkeypatch.setenv("TWOPHASE_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg)]) == 0
    assert [p.name for p in (tmp_path / "env").iterdir()] == ["report.json"]


def test_tangential_contact_is_reported(tmp_path):
    # a body whose edge lies on the interface makes the transport check fail
    assert _run(tmp_path, "--scenario", "case_b", "--g0=-1,0,1,1", "--t1", "0.2", "--particles", "200",
                "--outputs", "json") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert "TransversalityError" in rep["transport"]["transport_error"]


def test_numerical_failure_exits_2(tmp_path, capsys):
    # the radial field is singular at the centre, which is a vertex of this body
    with pytest.warns(RuntimeWarning):
        rc = _run(tmp_path, "--scenario", "expanding_circle", "--g0=0,0,1,1", "--t1", "0.2", "--particles", "200",
                  "--outputs", "json")
    assert rc == 2
    assert "numerical failure" in capsys.readouterr().err
    assert json.loads((tmp_path / "report.json").read_text())["status"].startswith("numerical failure")


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--particles", "many"])
    assert exc.value.code == 1


def test_suite_subset(tmp_path, capsys):
    assert _run(tmp_path, "--suite", "acceptance", "--only", "11", "--outputs", "json") == 0
    assert capsys.readouterr().out.startswith("PASS [11]")
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["all_passed"] and rep["criteria"][0]["number"] == 11


def test_validate_flags_nonpositive_step(capsys):
    assert main(["validate", "--dt", "0"]) == 1
    assert "dt must be positive" in capsys.readouterr().out


def test_slip_case_corner_box(tmp_path):
    assert _run(tmp_path, "--scenario", "case_d", "--g0", "-1,0,0,0.5", "--snap", "0,0.25,0.5", "--particles", "800",
                "--dwell-grid", "64") == 0
    svg = (tmp_path / "figure_case_d.svg").read_text()
    # one polyline per history-class hull at each of the three times
    assert svg.count("<polyline") >= 5
    rows = (tmp_path / "sets_0.5.csv").read_text().splitlines()[1:]
    # the sample sitting at the origin splits into many dwell branches
    roots = [r.split(",")[6] for r in rows]
    assert max(roots.count(k) for k in set(roots)) > 1
