"""Config parsing and CLI command tests."""

import json

import numpy as np
import pytest

from qmarl import cli, marl
from qmarl.config import config_from_dict, parse_config
from qmarl.errors import ConfigError


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def minimal_bandit(seed=7, **extra):
    raw = {"env": {"kind": "bandit", "k": 1}, "agent": {"kind": "quantum"}, "seed": seed}
    raw.update(extra)
    return raw


# ---------------------------------------------------------------------------
# parse_config
# ---------------------------------------------------------------------------

def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(write_config(tmp_path, minimal_bandit()))
    assert cfg.env.kind == "bandit"
    assert cfg.env.constants["k"] == 1
    assert cfg.agent.readout == "pvm"
    assert cfg.agent.actor_qubits == 1
    assert cfg.train.epochs == 1000
    assert cfg.train.gamma == 0.99
    assert cfg.seed == 7
    defaults = dict(cfg.applied_defaults)
    assert defaults["train.epochs"] == 1000
    assert defaults["agent.readout"] == "pvm"
    assert "seed" not in defaults


def test_out_of_range_k_names_key(tmp_path):
    path = write_config(tmp_path, {"env": {"kind": "bandit", "k": 3},
                                   "agent": {"kind": "quantum"}})
    with pytest.raises(ConfigError, match="env.k"):
        parse_config(path)


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="agnet"):
        config_from_dict({"env": {"kind": "bandit", "k": 1},
                          "agnet": {"kind": "quantum"}})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="env.lambda_in"):
        config_from_dict({"env": {"kind": "factory", "lambda_in": 3},
                          "agent": {"kind": "quantum"}})


def test_missing_env_kind_rejected():
    with pytest.raises(ConfigError, match="env.kind"):
        config_from_dict({"agent": {"kind": "quantum"}})


def test_wrong_type_rejected():
    with pytest.raises(ConfigError, match="train.epochs"):
        config_from_dict({"env": {"kind": "bandit", "k": 1},
                          "agent": {"kind": "quantum"},
                          "train": {"epochs": "many"}})


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config(bad)


def test_factory_defaults_round_trip():
    cfg = config_from_dict({"env": {"kind": "factory"}, "agent": {"kind": "quantum"}})
    assert cfg.env.constants["n_agents"] == 2
    assert cfg.env.constants["horizon"] == 50
    rebuilt = config_from_dict(cfg.to_dict())
    assert rebuilt.env == cfg.env
    assert rebuilt.agent == cfg.agent
    assert rebuilt.train == cfg.train


# ---------------------------------------------------------------------------
# cmd_train
# ---------------------------------------------------------------------------

def train_raw(tmp_path, epochs=4, seed=3):
    return {"env": {"kind": "bandit", "k": 1},
            "agent": {"kind": "quantum"},
            "train": {"epochs": epochs, "episodes_per_epoch": 2},
            "seed": seed,
            "output_dir": str(tmp_path / "out")}


def test_cmd_train_writes_metrics_and_manifest(tmp_path):
    cfg = config_from_dict(train_raw(tmp_path, epochs=10))
    assert cli.cmd_train(cfg, quiet=True) == 0
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert len(lines) == 11
    assert lines[0] == "epoch,total_reward,actor_loss,critic_loss,wallclock_ms"
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert manifest["param_report"]["total"] > 0
    assert manifest["config"]["train"]["epochs"] == 10
    assert "train.gamma" in manifest["applied_defaults"]
    assert manifest["duration_seconds"] > 0


def test_cmd_train_metrics_byte_identical(tmp_path):
    cfg_a = config_from_dict({**train_raw(tmp_path), "output_dir": str(tmp_path / "a")})
    cfg_b = config_from_dict({**train_raw(tmp_path), "output_dir": str(tmp_path / "b")})
    assert cli.cmd_train(cfg_a, quiet=True) == 0
    assert cli.cmd_train(cfg_b, quiet=True) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
        (tmp_path / "b" / "metrics.csv").read_bytes()


def test_cmd_train_runtime_failure_keeps_partial_csv(tmp_path, monkeypatch):
    cfg = config_from_dict(train_raw(tmp_path, epochs=10))
    real_train = marl.train_agent

    def explode_after_three(config, agent, on_metrics=None):
        count = 0

        def wrapped(row):
            nonlocal count
            on_metrics(row)
            count += 1
            if count == 3:
                raise RuntimeError("injected failure")

        return real_train(config, agent, wrapped)

    monkeypatch.setattr(cli.marl, "train_agent", explode_after_three)
    assert cli.cmd_train(cfg, quiet=True) == 3
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert lines[0] == cli.METRICS_HEADER
    assert len(lines) == 4  # header + three emitted rows
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "injected failure" in manifest["error"]


def test_main_train_config_error_exit_code(tmp_path):
    path = write_config(tmp_path, {"env": {"kind": "bandit", "k": 3},
                                   "agent": {"kind": "quantum"}})
    assert cli.main(["train", "--config", str(path)]) == 2


def test_qmarl_seed_env_override(tmp_path, monkeypatch):
    path = write_config(tmp_path, train_raw(tmp_path, seed=3))
    monkeypatch.setenv("QMARL_SEED", "99")
    assert cli.main(["train", "--config", str(path), "--quiet"]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99


# ---------------------------------------------------------------------------
# cmd_gradcheck
# ---------------------------------------------------------------------------

def test_gradcheck_passes(capsys):
    assert cli.cmd_gradcheck(25, seed=5) == 0
    out = capsys.readouterr().out
    assert "max deviation" in out
    assert out.count("max_deviation=") == 25


def test_gradcheck_corrupted_shift_fails(capsys):
    assert cli.cmd_gradcheck(5, seed=5, shift=1.3) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "readout" in out  # offending instance serialized for replay


# ---------------------------------------------------------------------------
# cmd_compare / summary statistics
# ---------------------------------------------------------------------------

def test_epochs_to_90pct_definition():
    rewards = [0.0] * 30 + [1.0] * 100
    reached = cli.epochs_to_90pct(rewards)
    window = np.array(rewards)
    assert window[max(0, reached - 19):reached + 1].mean() >= 0.9 * window[-100:].mean()
    assert cli.epochs_to_90pct([]) is None
    assert cli.epochs_to_90pct([1.0]) == 0


def test_trailing_mean_windows():
    assert cli.trailing_mean([1, 2, 3, 4], 2) == pytest.approx(3.5)
    assert cli.trailing_mean([1, 2], 100) == pytest.approx(1.5)


def test_cmd_compare_quantum_beats_random(tmp_path, capsys):
    quantum = write_config(tmp_path, {
        "env": {"kind": "bandit", "k": 1}, "agent": {"kind": "quantum"},
        "train": {"epochs": 60, "episodes_per_epoch": 16, "learning_rate": 0.05},
        "seed": 7}, "quantum.json")
    random_cfg = write_config(tmp_path, {
        "env": {"kind": "bandit", "k": 1}, "agent": {"kind": "random"},
        "train": {"epochs": 60, "episodes_per_epoch": 16},
        "seed": 7}, "random.json")
    out_dir = tmp_path / "cmp"
    assert cli.cmd_compare([str(quantum), str(random_cfg)], str(out_dir)) == 0
    lines = (out_dir / "compare.csv").read_text().splitlines()
    assert lines[0] == cli.COMPARE_HEADER
    rows = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in rows] == ["quantum", "random"]
    assert float(rows[0][3]) > float(rows[1][3])
    assert rows[1][1] == "0"  # random reports zero parameters
    assert "quantum" in capsys.readouterr().out


def test_cmd_compare_records_infeasible_baseline(tmp_path):
    classical = write_config(tmp_path, {
        "env": {"kind": "bandit", "k": 16}, "agent": {"kind": "classical110"},
        "train": {"epochs": 1, "episodes_per_epoch": 1}, "seed": 1}, "c.json")
    random_cfg = write_config(tmp_path, {
        "env": {"kind": "bandit", "k": 16}, "agent": {"kind": "random"},
        "train": {"epochs": 2, "episodes_per_epoch": 2}, "seed": 1}, "r.json")
    out_dir = tmp_path / "cmp"
    assert cli.cmd_compare([str(classical), str(random_cfg)], str(out_dir)) == 0
    lines = (out_dir / "compare.csv").read_text().splitlines()
    classical_row = lines[1].split(",")
    assert classical_row[0] == "classical110"
    assert classical_row[3] == "infeasible"
    assert int(classical_row[1]) > 2 ** 16  # minimum representable count reported


def test_cmd_compare_rejects_mixed_environments(tmp_path):
    a = write_config(tmp_path, minimal_bandit(), "a.json")
    b = write_config(tmp_path, {"env": {"kind": "factory"},
                                "agent": {"kind": "random"}}, "b.json")
    assert cli.cmd_compare([str(a), str(b)], str(tmp_path / "cmp")) == 2


def test_main_requires_command():
    with pytest.raises(SystemExit):
        cli.main([])
