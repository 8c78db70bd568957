import shutil
from pathlib import Path

import pytest

from mfglab.cli import main
from mfglab.harness import (
    KINDS,
    RunManifest,
    SchemaMismatchError,
    compare,
    load_spec,
    run,
)
from mfglab.model import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[grid]
n = 16

[model]
name = trivial
kind = constant
c0 = 0.7

[experiment]
dt = 0.02
horizons = 1, 2, 3
t = 3
burn_in = 1
window = -1, 1
particles = 1, 2
n_particle = 8
sample_times = 0, 1, 2
h = 0.4
criteria = 1
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def _with(small_config, line, replacement):
    text = small_config.read_text().replace(line, replacement)
    small_config.write_text(text)
    return small_config


def test_unknown_key_is_named(small_config, tmp_path):
    _with(small_config, "dt = 0.02", "dt = 0.02\nstep = 3")
    with pytest.raises(ConfigError, match="experiment.step"):
        load_spec(small_config, "energy", tmp_path / "out")


@pytest.mark.parametrize(
    "line, replacement, key",
    [
        ("horizons = 1, 2, 3", "horizons = 1, 2", "experiment.horizons"),
        ("dt = 0.02", "dt = fast", "experiment.dt"),
        ("burn_in = 1", "burn_in = 5", "experiment.burn_in"),
        ("window = -1, 1", "window = -4, 1", "experiment.window"),
        ("c0 = 0.7", "c0 = lots", "model.c0"),
    ],
)
def test_invalid_values_are_named(small_config, tmp_path, line, replacement, key):
    _with(small_config, line, replacement)
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_spec(small_config, "energy", tmp_path / "out")


def test_budget_is_checked_before_running(small_config, tmp_path):
    _with(small_config, "n_particle = 8", "n_particle = 8\nbudget = 20")
    with pytest.raises(ConfigError, match="experiment.particles"):
        load_spec(small_config, "cell-problem", tmp_path / "out")


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_runs_on_the_trivial_model(small_config, tmp_path, kind):
    man = run(load_spec(small_config, kind, tmp_path / kind))
    assert (tmp_path / kind / "manifest").exists()
    assert man.results
    assert man.passed, man.checks


def test_runs_are_deterministic(small_config, tmp_path):
    a = run(load_spec(small_config, "lambda-slope", tmp_path / "a", seed=3))
    b = run(load_spec(small_config, "lambda-slope", tmp_path / "b", seed=3))
    assert a.spec_hash == b.spec_hash
    assert compare(tmp_path / "a", tmp_path / "b").empty
    assert (tmp_path / "a" / "lambda.tsv").read_bytes() == (tmp_path / "b" / "lambda.tsv").read_bytes()
    c = load_spec(small_config, "lambda-slope", tmp_path / "c", seed=4)
    assert c.digest() != a.spec_hash


def test_manifest_round_trip():
    man = RunManifest("abc", "0.1.0", 2, "energy", "s", "f", {"x": 1.5, "y": float("nan")}, {"ok": True})
    back = RunManifest.loads(man.dumps())
    assert back.results["x"] == 1.5 and back.checks == {"ok": True}
    assert compare(man, back).empty


def test_compare_reports_differences_and_schema():
    a = RunManifest("h", "v", 0, "k", results={"x": 1.0}, checks={"ok": True})
    b = RunManifest("h", "v", 0, "k", results={"x": 1.1}, checks={"ok": False})
    rep = compare(a, b)
    assert [e.key for e in rep.entries] == ["x", "check.ok"]
    assert compare(a, RunManifest("h", "v", 0, "k", results={"x": 1.05}, checks={"ok": True}), default_tol=0.1).empty
    with pytest.raises(SchemaMismatchError):
        compare(a, RunManifest("h", "v", 0, "k", results={"z": 1.0}, checks={"ok": True}))


def test_cli_exit_codes(small_config, tmp_path, capsys):
    assert main(["energy", "--config", str(small_config), "--out", str(tmp_path / "e")]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["energy", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "x")]) == 2
    assert main(["energy", "--config", str(small_config)]) == 2
    run_dir = tmp_path / "e"
    shutil.copytree(run_dir, tmp_path / "e2")
    assert main(["compare", str(run_dir), str(tmp_path / "e2")]) == 0


def test_shipped_configs_parse(tmp_path):
    for name in ("kernel.ini", "trivial.ini"):
        spec = load_spec(CONFIGS / name, "full-report", tmp_path)
        assert spec.model.grid.n in (16, 32)
