import json
import os

import pandas as pd
import pytest

from design_errors import ConfigError
from run_manifest import config_hash
from simulate_runner import EXIT_DOMAIN, EXIT_OK, SimulationBatchRunner, build_sim_config, validate_config


def write_config(tmp_path, config, name="batch.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


SMALL_DEFAULTS = {"q": 0.8, "n_total": 100, "utilities": [1, 0.8, 0.2, 0], "replications": 200, "seed": 5}


class TestValidateConfig:
    def test_collects_every_problem(self):
        raw = {
            "scenarios": [
                {"id": "a", "p": 0.4, "q": 0.8, "n1": "60", "colour": "red"},
                {"id": "a", "p": 0.4, "q": 0.8, "n1": 60, "n2": 140, "utilities": [1, 0.5]},
            ],
            "extra": 1,
        }
        with pytest.raises(ConfigError) as info:
            validate_config(raw)
        problems = "\n".join(info.value.problems)
        assert "extra: unknown top-level key" in problems
        assert "scenarios[0].n1: expected an integer" in problems
        assert "scenarios[0].colour: unknown key" in problems
        assert "scenarios[0].n2: missing" in problems
        assert "duplicate scenario id 'a'" in problems
        assert "scenarios[1].utilities" in problems

    def test_missing_scenarios(self):
        with pytest.raises(ConfigError, match="scenarios"):
            validate_config({"defaults": {}})

    def test_margins_and_utilities_are_exclusive(self):
        raw = {"scenarios": [{"id": "a", "p": 0.4, "q": 0.8, "n1": 60, "n2": 140,
                              "utilities": [1, 0.8, 0.2, 0], "margins": {"delta": 0.1, "d": 0.15}}]}
        with pytest.raises(ConfigError, match="not both"):
            validate_config(raw)

    def test_nested_blocks_merge_with_defaults(self):
        raw = {"defaults": {**SMALL_DEFAULTS, "tte": {"enabled": True, "lambda0": 0.1}},
               "scenarios": [{"id": "t", "p": 0.4, "n1": 40, "tte": {"rho_c": 0.3}}]}
        entry = validate_config(raw)[0]
        assert entry["tte"] == {"enabled": True, "lambda0": 0.1, "rho_c": 0.3}

    def test_bad_tte_value(self):
        raw = {"scenarios": [{"id": "t", "p": 0.4, "q": 0.8, "n1": 40, "n2": 60, "tte": {"enabled": "yes"}}]}
        with pytest.raises(ConfigError, match="tte.enabled"):
            validate_config(raw)


def test_build_sim_config_from_total_and_margins():
    entry = validate_config({"scenarios": [{"id": 3, "p": 0.4, "q": 0.8, "n1": 40, "n_total": 200,
                                            "margins": {"delta": 0.1, "d": 0.15}}]})[0]
    config = build_sim_config(entry, replications=50, seed=9)
    assert config.scenario_id == "3"
    assert config.n2 == 160
    assert config.utilities.scores == pytest.approx((1.0, 0.6, 0.4, 0.0))
    assert (config.replications, config.seed) == (50, 9)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestSimulationBatchRunner:
    def test_empty_batch_writes_header_only(self, tmp_path):
        path = write_config(tmp_path, {"scenarios": []}, "empty.json")
        runner = SimulationBatchRunner(path, output_dir=str(tmp_path / "out"), workers=1)
        assert runner.run_all() == EXIT_OK
        frame = pd.read_csv(tmp_path / "out" / "empty.csv")
        assert frame.empty
        assert "scenario_id" in frame.columns

    def test_small_batch(self, tmp_path):
        config = {"defaults": SMALL_DEFAULTS,
                  "scenarios": [{"id": "p0.4", "p": 0.4, "n1": 40},
                                {"id": "p0.5", "p": 0.5, "phi": -0.3, "n1": 60}]}
        path = write_config(tmp_path, config)
        runner = SimulationBatchRunner(path, output_dir=str(tmp_path), workers=1)
        assert runner.run_all() == EXIT_OK

        frame = pd.read_csv(tmp_path / "batch.csv")
        assert list(frame['scenario_id']) == ["p0.4", "p0.5"]
        assert (frame['n_total'] == 100).all()
        assert frame['z_observed'].between(0.0, 1.0).all()
        assert 'mc_se_observed_bias' in frame.columns

        manifest = json.loads((tmp_path / "batch.manifest.json").read_text())
        assert manifest['scenarios'] == {"p0.4": "ok", "p0.5": "ok"}
        assert len(manifest['config_hash']) == 64
        assert str(tmp_path / "batch.csv") in manifest['outputs']

    def test_failing_scenario_does_not_stop_the_batch(self, tmp_path, capsys):
        config = {"defaults": SMALL_DEFAULTS,
                  "scenarios": [{"id": "bad", "p": 0.4, "phi": 0.9, "n1": 40},
                                {"id": "good", "p": 0.4, "n1": 40}]}
        runner = SimulationBatchRunner(write_config(tmp_path, config), output_dir=str(tmp_path), workers=1)
        assert runner.run_all() == EXIT_DOMAIN
        assert runner.manifest.scenarios == {"bad": "failed", "good": "ok"}
        assert runner.manifest.failed == ["bad"]
        assert list(pd.read_csv(tmp_path / "batch.csv")['scenario_id']) == ["good"]
        assert "Failed: 1" in capsys.readouterr().out

    def test_unreadable_config(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        runner = SimulationBatchRunner(str(path), output_dir=str(tmp_path), workers=1)
        with pytest.raises(ConfigError):
            runner.load_config()


def test_shipped_example_config_is_valid():
    path = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "table2_example.json")
    with open(path, 'r', encoding='utf-8') as f:
        entries = validate_config(json.load(f))
    configs = [build_sim_config(entry, replications=10) for entry in entries]
    assert len(configs) == 5
    assert configs[3].tte.enabled
    assert configs[4].utilities.scores == pytest.approx((1.0, 0.6, 0.4, 0.0))
