import json

import numpy as np
import pytest

from bcslab.bcsnode import DiscreteBoundaryNode, save_node
from bcslab.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from bcslab.errors import ConfigError
from bcslab.experiments import (
    CRITERIA,
    EXPERIMENT_IDS,
    ExperimentConfig,
    config_from_dict,
    csv_digests,
    file_digest,
    load_config,
    output_root,
    pinned_configs,
    run_experiment,
    run_sweep,
    write_csv,
)
from bcslab.synthesis import GainSet, save_gains


def boundary_node():
    """Two-state node with one boundary row ``x1 = u``."""
    return DiscreteBoundaryNode(
        opA=np.array([[0.0, 1.0], [-1.0, -0.5]]),
        opB=np.array([[1.0, 0.0]]),
        opC=np.array([[0.0, 1.0]]),
        opQ=np.array([[1.0]]),
        opBi=np.zeros((2, 1)),
        gram=np.eye(2),
    )


@pytest.fixture
def custom_files(tmp_path):
    save_node(boundary_node(), tmp_path / "node.json")
    return tmp_path


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_every_criterion_maps_to_one_experiment():
    assert sorted(CRITERIA) == list(range(1, 9))
    assert set(CRITERIA.values()) - {"reproduce-all"} <= set(EXPERIMENT_IDS)
    assert {c.experiment for c in pinned_configs()} == set(EXPERIMENT_IDS) - {"custom"}


def test_config_validation():
    cfg = config_from_dict({"experiment": "wave1d", "seed": 3, "model": {"grid_points": 100}})
    assert cfg.model["grid_points"] == 100 and cfg.model["refined_points"] == 400
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "wave3d"})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "wave1d", "model": {"grid": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "scole", "extra": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "custom"})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "scole", "seed": "7"})


def test_config_hash_is_stable_and_sensitive():
    a = ExperimentConfig("scole", 3).resolved()
    b = config_from_dict({"experiment": "scole", "seed": 3, "output": "elsewhere"})
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig("scole", 4).resolved().digest()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_csv_number_format(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b", "c"], [[1, 0.1, True], [2, 1 / 3, False]])
    text = (tmp_path / "t.csv").read_text()
    assert text == "a,b,c\n1,0.10000000000000001,1\n2,0.33333333333333331,0\n"


def test_output_root_resolution(monkeypatch, tmp_path):
    monkeypatch.setenv("BCSLAB_OUTPUT", str(tmp_path / "env"))
    assert output_root() == tmp_path / "env"
    assert output_root(tmp_path / "x") == tmp_path / "x"
    monkeypatch.delenv("BCSLAB_OUTPUT")
    assert output_root().name == "bcslab-output"


def test_identity_experiment_manifest_and_determinism(tmp_path):
    cfg = ExperimentConfig("prop-2.9-identity", 7, model={"trials": 10})
    first = run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert first.passed
    for name, digest in first.artifacts.items():
        assert file_digest(tmp_path / "a" / name) == digest
    assert csv_digests(tmp_path / "a") == csv_digests(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.resolved().digest()
    assert {c["criterion"] for c in manifest["checks"]} == {1}
    assert set(manifest["versions"]) >= {"numpy", "scipy", "bcslab"}


def test_custom_experiment_and_sweep(custom_files):
    cfg = config_from_dict({"experiment": "custom", "model": {"node": str(custom_files / "node.json")}})
    man = run_experiment(cfg, custom_files / "out")
    assert man.passed and (custom_files / "out" / "sweep.csv").exists()
    summary = run_sweep({"model": {"kind": "scole", "elements": 30}, "generator": "K"}, custom_files / "sw")
    assert 0.4 <= summary["alpha_hat"] <= 0.6
    assert (custom_files / "sw" / "sweep.csv").read_text().startswith("s,resnorm\n")
    with pytest.raises(ConfigError):
        run_sweep({"model": {"kind": "scole"}, "generator": "Q"})
    with pytest.raises(ConfigError):
        run_sweep({"model": {"kind": "plate"}})
    with pytest.raises(ConfigError):
        run_sweep({"model": {"kind": "wave2d", "modes": 3}})


def test_cli_exit_codes(custom_files, monkeypatch, capsys):
    d = custom_files
    monkeypatch.setenv("BCSLAB_OUTPUT", str(d / "out"))
    node = str(d / "node.json")
    assert main(["validate", node]) == EXIT_OK
    # boundary feedback x1 = k x2 gives x2' = -(k + 0.5) x2; K = [1, 0] makes B - QK vanish
    save_gains(GainSet(np.array([[0.0, 0.0]]), np.array([[0.0]]), np.zeros((2, 1))), d / "ok.json")
    save_gains(GainSet(np.array([[0.0, -3.0]]), np.array([[0.0]]), np.zeros((2, 1))), d / "bad.json")
    save_gains(GainSet(np.array([[1.0, 0.0]]), np.array([[0.0]]), np.zeros((2, 1))), d / "singular.json")
    (d / "corrupt.json").write_text('{"opK": {"rows": 1}}')
    codes = {}
    for name in ("ok", "bad", "singular", "corrupt"):
        cfg = write_config(d / f"{name}_cfg.json", {"experiment": "custom", "model": {"node": node, "gains": str(d / f"{name}.json")}})
        codes[name] = main(["run", str(cfg)])
    assert codes == {"ok": EXIT_OK, "bad": EXIT_ACCEPTANCE, "singular": EXIT_NUMERIC, "corrupt": EXIT_CONFIG}
    assert main(["run", str(write_config(d / "unknown.json", {"experiment": "nope"}))]) == EXIT_CONFIG
    assert main(["validate", str(d / "missing.json")]) == EXIT_CONFIG
    assert (d / "out" / "custom" / "manifest.json").exists()
    sweep_cfg = write_config(d / "sweep.json", {"model": {"kind": "node", "path": node}, "grid": "geometric", "band": [1, 10], "points": 12})
    assert main(["sweep", str(sweep_cfg)]) == EXIT_OK
    assert "classification_hint" in capsys.readouterr().out
