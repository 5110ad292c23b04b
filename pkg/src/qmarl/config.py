"""Experiment configuration: JSON schema, strict validation, defaults.

A config file is a JSON object with sections ``env``, ``agent``, ``train``
plus top-level ``seed`` and ``output_dir``. Unknown keys are rejected with
their full key path (a silent hyperparameter typo would invalidate a
comparison), out-of-range values name the offending key, and every default
the parser applies is echoed so the run manifest can record it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .envs import BANDIT_KS, ENV_KINDS
from .errors import ConfigError

AGENT_KINDS = ("quantum", "hybrid", "classical110", "classical40k", "iql", "random")
READOUT_KINDS = ("softmax", "pvm")


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _fraction(x):
    return 0.0 <= x <= 1.0


# key -> (python type, default or callable(context)->default, predicate or None, "range description")
_ENV_SCHEMAS = {
    "factory": {
        "n_agents": (int, 2, lambda v: v >= 1, ">= 1"),
        "amr_capacity": (int, 10, _positive, ">= 1"),
        "warehouse_capacity": (int, 100, _positive, ">= 1"),
        "source_capacity": (int, 20, _positive, ">= 1"),
        "arrival_rate": (int, 4, _non_negative, ">= 0"),
        "ship_count": (int, 3, _positive, ">= 1"),
        "good_probability": (float, 0.9, _fraction, "in [0, 1]"),
        "overflow_penalty": (float, 0.5, _non_negative, ">= 0"),
        "horizon": (int, 50, _positive, ">= 1"),
    },
    "uav": {
        "n_agents": (int, 2, lambda v: v >= 1, ">= 1"),
        "grid_size": (int, 10, lambda v: v >= 2, ">= 2"),
        "n_users": (int, 6, _positive, ">= 1"),
        "coverage_radius": (int, 2, _non_negative, ">= 0"),
        "initial_energy": (float, 30.0, _positive, "> 0"),
        "move_cost": (float, 1.0, _non_negative, ">= 0"),
        "hover_cost": (float, 0.5, _non_negative, ">= 0"),
        "state_noise": (float, 0.02, _non_negative, ">= 0"),
        "wind_probability": (float, 0.1, _fraction, "in [0, 1]"),
        "horizon": (int, 40, _positive, ">= 1"),
    },
    "bandit": {
        "k": (int, 4, lambda v: v in BANDIT_KS, f"one of {BANDIT_KS}"),
    },
}

_TRAIN_SCHEMA = {
    "epochs": (int, 1000, _non_negative, ">= 0"),
    "episodes_per_epoch": (int, 8, _positive, ">= 1"),
    "gamma": (float, 0.99, _fraction, "in [0, 1]"),
    "learning_rate": (float, 0.01, _positive, "> 0"),
    "buffer_capacity": (int, 64, _positive, ">= 1"),
    "max_grad_records": (int, 128, _positive, ">= 1"),
}


def _agent_schema(env_kind: str, env_constants: dict) -> dict:
    # Bandit runs default to the PVM readout (that study is its purpose),
    # which needs one wire per action bit and converges with one layer; its
    # single-step rewards live in [0,1], so the critic scale defaults to 1.
    if env_kind == "bandit":
        default_readout = "pvm"
        default_actor_qubits = env_constants["k"]
        default_actor_layers = 1
        default_v_scale = 1.0
    else:
        default_readout = "softmax"
        default_actor_qubits = 4
        default_actor_layers = 3
        default_v_scale = 20.0
    return {
        "actor_qubits": (int, default_actor_qubits, lambda v: 1 <= v <= 16, "in 1..16"),
        "actor_layers": (int, default_actor_layers, _positive, ">= 1"),
        "critic_qubits": (int, 4, lambda v: 1 <= v <= 16, "in 1..16"),
        "critic_layers": (int, 3, _positive, ">= 1"),
        "readout": (str, default_readout, lambda v: v in READOUT_KINDS,
                    f"one of {READOUT_KINDS}"),
        "softmax_beta": (float, 5.0, None, ""),
        "v_scale": (float, default_v_scale, _positive, "> 0"),
        "epsilon": (float, 0.05, _fraction, "in [0, 1]"),
        "optimistic_init": (float, 1.0, None, ""),
        "bucket_levels": (int, 5, _positive, ">= 1"),
    }


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    constants: dict


@dataclass(frozen=True)
class AgentConfig:
    kind: str
    actor_qubits: int
    actor_layers: int
    critic_qubits: int
    critic_layers: int
    readout: str
    softmax_beta: float
    v_scale: float
    epsilon: float
    optimistic_init: float
    bucket_levels: int


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    episodes_per_epoch: int
    gamma: float
    learning_rate: float
    buffer_capacity: int
    max_grad_records: int


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig
    agent: AgentConfig
    train: TrainConfig
    seed: int
    output_dir: str
    applied_defaults: tuple

    def to_dict(self) -> dict:
        return {
            "env": {"kind": self.env.kind, **self.env.constants},
            "agent": {"kind": self.agent.kind,
                      **{k: getattr(self.agent, k) for k in
                         ("actor_qubits", "actor_layers", "critic_qubits", "critic_layers",
                          "readout", "softmax_beta", "v_scale", "epsilon",
                          "optimistic_init", "bucket_levels")}},
            "train": {k: getattr(self.train, k) for k in _TRAIN_SCHEMA},
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def _coerce(path: str, value, expected_type):
    if expected_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if expected_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, expected_type):
        raise ConfigError(f"{path}: expected {expected_type.__name__}, got {value!r}")
    return value


def _apply_schema(section: str, data: dict, schema: dict, defaults_out: list) -> dict:
    out = {}
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown key: {section}.{key}")
    for key, (expected_type, default, predicate, desc) in schema.items():
        path = f"{section}.{key}"
        if key in data:
            value = _coerce(path, data[key], expected_type)
        else:
            value = default
            defaults_out.append((path, value))
        if predicate is not None and not predicate(value):
            raise ConfigError(f"{path}: value {value!r} out of range (must be {desc})")
        out[key] = value
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    known_top = {"env", "agent", "train", "seed", "output_dir"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(f"unknown key: {key}")
    defaults: list = []

    env_raw = dict(raw.get("env") or {})
    kind = env_raw.pop("kind", None)
    if kind is None:
        raise ConfigError("env.kind is required")
    if kind not in ENV_KINDS:
        raise ConfigError(f"env.kind: {kind!r} is not one of {ENV_KINDS}")
    constants = _apply_schema("env", env_raw, _ENV_SCHEMAS[kind], defaults)

    agent_raw = dict(raw.get("agent") or {})
    agent_kind = agent_raw.pop("kind", None)
    if agent_kind is None:
        raise ConfigError("agent.kind is required")
    if agent_kind not in AGENT_KINDS:
        raise ConfigError(f"agent.kind: {agent_kind!r} is not one of {AGENT_KINDS}")
    agent_fields = _apply_schema("agent", agent_raw, _agent_schema(kind, constants), defaults)

    train_fields = _apply_schema("train", dict(raw.get("train") or {}), _TRAIN_SCHEMA, defaults)

    if "seed" in raw:
        seed = _coerce("seed", raw["seed"], int)
    else:
        seed = 0
        defaults.append(("seed", 0))
    if not 0 <= seed < 2 ** 63:
        raise ConfigError(f"seed: {seed!r} out of range (must be a non-negative 63-bit integer)")
    if "output_dir" in raw:
        output_dir = _coerce("output_dir", raw["output_dir"], str)
    else:
        output_dir = "runs"
        defaults.append(("output_dir", "runs"))

    return ExperimentConfig(
        env=EnvConfig(kind, constants),
        agent=AgentConfig(agent_kind, **agent_fields),
        train=TrainConfig(**train_fields),
        seed=seed,
        output_dir=output_dir,
        applied_defaults=tuple(defaults),
    )


def parse_config(path) -> ExperimentConfig:
    """Load, validate, and default-fill a JSON config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def with_overrides(config: ExperimentConfig, **top_level) -> ExperimentConfig:
    """Copy of the config with top-level fields (seed, output_dir) replaced."""
    raw = config.to_dict()
    raw.update(top_level)
    return config_from_dict(raw)
