from pathlib import Path

from click.testing import CliRunner

from strongwork.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_list_experiments():
    res = CliRunner().invoke(main, ["list-experiments"])
    assert res.exit_code == 0
    assert "physical-vs-abstract" in res.output.split()


def test_run_writes_csv(tmp_path):
    out = tmp_path / "bound.csv"
    res = CliRunner().invoke(main, ["run", str(CONFIGS / "bound.yaml"), "--out", str(out), "--workers", "2"])
    assert res.exit_code == 0, res.output
    assert out.read_text().startswith("schema,experiment")


def test_seed_override_changes_output():
    runner = CliRunner()
    a = runner.invoke(main, ["run", str(CONFIGS / "optimal-sweep.yaml"), "--seed", "1"]).output
    b = runner.invoke(main, ["run", str(CONFIGS / "optimal-sweep.yaml"), "--seed", "2"]).output
    assert a != b


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: bound\nbeta: -1\n")
    res = CliRunner().invoke(main, ["run", str(bad)])
    assert res.exit_code == 2
    res = CliRunner().invoke(main, ["verify", str(tmp_path / "missing.yaml")])
    assert res.exit_code == 2


def test_verify_subset_passes_and_is_repeatable(tmp_path):
    cfg = tmp_path / "subset.yaml"
    cfg.write_text("seed: 0\ncriteria: [2, 4, 6]\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"v{k}.csv"
        res = CliRunner().invoke(main, ["verify", str(cfg), "--out", str(out)])
        assert res.exit_code == 0, res.output
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_verify_negative_control_fails():
    res = CliRunner().invoke(main, ["verify", str(CONFIGS / "negative-control.yaml")])
    assert res.exit_code == 1
    assert "criterion  1 [FAIL]" in res.output


def test_verify_empty_selection_is_vacuous_pass(tmp_path):
    cfg = tmp_path / "empty.yaml"
    cfg.write_text("criteria: []\n")
    res = CliRunner().invoke(main, ["verify", str(cfg)])
    assert res.exit_code == 0
    assert "vacuous" in res.output


def test_verify_unknown_criterion(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("criteria: [99]\n")
    assert CliRunner().invoke(main, ["verify", str(cfg)]).exit_code == 2
