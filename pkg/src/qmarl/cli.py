"""Experiment runner.

Commands:

* ``train --config cfg.json`` — one seeded run; writes ``metrics.csv``
  (byte-reproducible for a given config+seed) and ``manifest.json`` (config
  snapshot, applied defaults, parameter counts, timing) into the config's
  output directory.
* ``gradcheck --trials N --seed S`` — parameter-shift vs central finite
  differences on random circuit instances; exit 0 iff the worst deviation
  is at most 1e-5.
* ``compare --configs a.json b.json ... --out DIR`` — runs each config and
  tabulates agent kind, parameter count, action dimension, final reward,
  and convergence epoch into ``compare.csv``.

Exit codes: 0 success, 1 gradcheck breach, 2 config error, 3 runtime failure.
The environment variable ``QMARL_SEED`` overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, marl, pshift, vqc
from .config import ExperimentConfig, parse_config, with_overrides
from .errors import BudgetInfeasibleError, ConfigError, QmarlError
from .seeding import rng_stream

METRICS_HEADER = "epoch,total_reward,actor_loss,critic_loss,wallclock_ms"
COMPARE_HEADER = "agent_kind,param_count,action_dim,final_mean_reward,epochs_to_90pct"
GRADCHECK_TOLERANCE = 1e-5


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def trailing_mean(values, window: int) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan")
    return float(values[-min(window, values.size):].mean())


def epochs_to_90pct(rewards) -> int | None:
    """First epoch whose trailing-20-epoch mean reaches 90% of the run's
    final trailing-100-epoch mean; None when never reached."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        return None
    threshold = 0.9 * trailing_mean(rewards, 100)
    for epoch in range(rewards.size):
        if rewards[max(0, epoch - 19):epoch + 1].mean() >= threshold:
            return epoch
    return None


def _apply_seed_override(config: ExperimentConfig) -> tuple[ExperimentConfig, int | None]:
    raw = os.environ.get("QMARL_SEED")
    if raw is None:
        return config, None
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"QMARL_SEED must be an integer, got {raw!r}")
    return with_overrides(config, seed=seed), seed


def cmd_train(config: ExperimentConfig, quiet: bool = False) -> int:
    """Run one experiment; stream metrics.csv row by row, finalize the manifest."""
    out_dir = Path(config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        agent = marl.build_agent(config)
    except (ConfigError, BudgetInfeasibleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest_path = out_dir / "manifest.json"
    manifest = {
        "status": "running",
        "version": __version__,
        "config": config.to_dict(),
        "applied_defaults": {key: value for key, value in config.applied_defaults},
        "param_report": agent.param_report(),
        "started_at": _now(),
        "finished_at": None,
        "duration_seconds": None,
        "error": None,
    }
    _write_manifest(manifest_path, manifest)
    started = time.perf_counter()
    report_every = max(1, config.train.epochs // 10)
    try:
        with open(out_dir / "metrics.csv", "w") as handle:
            handle.write(METRICS_HEADER + "\n")
            handle.flush()

            def emit(row: marl.TrainMetrics) -> None:
                handle.write(f"{row.epoch},{_fmt(row.total_reward)},{_fmt(row.actor_loss)},"
                             f"{_fmt(row.critic_loss)},{row.wallclock_ms}\n")
                handle.flush()
                if not quiet and (row.epoch + 1) % report_every == 0:
                    elapsed = time.perf_counter() - started
                    print(f"epoch {row.epoch + 1}/{config.train.epochs} "
                          f"total_reward={row.total_reward:.4f} ({elapsed:.1f}s)",
                          file=sys.stderr)

            marl.train_agent(config, agent, on_metrics=emit)
    except Exception as exc:  # noqa: BLE001 - runtime failures keep partial CSV
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                        finished_at=_now(),
                        duration_seconds=time.perf_counter() - started,
                        param_report=agent.param_report())
        _write_manifest(manifest_path, manifest)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    manifest.update(status="completed", finished_at=_now(),
                    duration_seconds=time.perf_counter() - started,
                    param_report=agent.param_report())
    _write_manifest(manifest_path, manifest)
    return 0


def _random_gradcheck_instance(rng: np.random.Generator):
    n_qubits = int(rng.integers(1, 5))
    template = vqc.CircuitTemplate(n_qubits, int(rng.integers(1, 3)))
    params = rng.uniform(-np.pi, np.pi, template.param_slots)
    obs = rng.normal(0.0, 1.0, int(rng.integers(0, n_qubits + 1)))
    if rng.random() < 0.5:
        component = pshift.ZReadout(int(rng.integers(0, n_qubits)))
    else:
        size = int(rng.integers(1, n_qubits + 1))
        wires = tuple(int(w) for w in rng.choice(n_qubits, size=size, replace=False))
        component = pshift.ProbabilityReadout(wires, int(rng.integers(0, 1 << size)))
    return template, params, obs, component


def _describe_instance(template, params, obs, component) -> dict:
    payload = {"n_qubits": template.n_qubits, "n_layers": template.n_layers,
               "params": list(params), "obs": list(obs)}
    if isinstance(component, pshift.ZReadout):
        payload["readout"] = {"kind": "z", "wire": component.wire}
    else:
        payload["readout"] = {"kind": "probability", "wires": list(component.wires),
                              "index": component.index}
    return payload


def cmd_gradcheck(n_trials: int, seed: int, shift: float = pshift.HALF_PI,
                  h: float = 1e-4) -> int:
    """Shift-rule vs finite-difference sweep; ``shift`` is the corruption hook."""
    if n_trials < 1:
        print("gradcheck needs at least one trial", file=sys.stderr)
        return 2
    rng = rng_stream(seed, 0)
    worst = 0.0
    for trial in range(n_trials):
        template, params, obs, component = _random_gradcheck_instance(rng)
        shifted = pshift.shift_gradient(template, params, obs, component, shift=shift)
        reference = pshift.finite_difference_oracle(template, params, obs, component, h=h)
        deviation = float(np.max(np.abs(shifted - reference)))
        worst = max(worst, deviation)
        print(f"trial {trial:3d}: n_qubits={template.n_qubits} "
              f"params={template.param_slots:2d} max_deviation={deviation:.3e}")
        if deviation > GRADCHECK_TOLERANCE:
            print(f"FAIL: deviation {deviation:.3e} exceeds {GRADCHECK_TOLERANCE:.1e}; "
                  "offending instance follows")
            print(json.dumps(_describe_instance(template, params, obs, component)))
            return 1
    print(f"gradcheck passed: {n_trials} trials, max deviation {worst:.3e} "
          f"<= {GRADCHECK_TOLERANCE:.1e}")
    return 0


def _run_for_compare(config: ExperimentConfig, out_dir: Path, index: int) -> dict:
    run_dir = out_dir / f"run{index}_{config.agent.kind}"
    config = with_overrides(config, output_dir=str(run_dir))
    row = {"agent_kind": config.agent.kind, "param_count": "",
           "action_dim": marl.build_env(config, seed=0).action_dim,
           "final_mean_reward": "", "epochs_to_90pct": ""}
    try:
        agent = marl.build_agent(config)
    except BudgetInfeasibleError as exc:
        row["param_count"] = exc.minimum_params
        row["final_mean_reward"] = "infeasible"
        return row
    row["param_count"] = agent.param_count()
    code = cmd_train(config, quiet=True)
    if code != 0:
        row["final_mean_reward"] = "failed"
        return row
    rewards = []
    with open(run_dir / "metrics.csv") as handle:
        next(handle)
        for line in handle:
            rewards.append(float(line.split(",")[1]))
    row["param_count"] = agent.param_count()
    row["final_mean_reward"] = _fmt(trailing_mean(rewards, 100))
    reached = epochs_to_90pct(rewards)
    row["epochs_to_90pct"] = "" if reached is None else reached
    return row


def cmd_compare(config_paths: list, out_dir: str) -> int:
    """Run each config on the shared environment and tabulate the results."""
    try:
        configs = [parse_config(p) for p in config_paths]
        if len(configs) < 2:
            raise ConfigError("compare needs at least two configs")
        kinds = {c.env.kind for c in configs}
        if len(kinds) != 1:
            raise ConfigError(f"compare configs must share an environment, got {sorted(kinds)}")
        configs = [_apply_seed_override(c)[0] for c in configs]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [_run_for_compare(config, out, i) for i, config in enumerate(configs)]
    columns = COMPARE_HEADER.split(",")
    with open(out / "compare.csv", "w") as handle:
        handle.write(COMPARE_HEADER + "\n")
        for row in rows:
            handle.write(",".join(str(row[c]) for c in columns) + "\n")
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(str(row[c]).ljust(widths[c]) for c in columns))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmarl",
                                     description="Quantum multi-agent RL experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training experiment")
    p_train.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_grad = sub.add_parser("gradcheck", help="verify shift-rule gradients")
    p_grad.add_argument("--trials", type=int, default=100)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--shift", type=float, default=pshift.HALF_PI,
                        help="shift amount (testing hook; pi/2 is correct)")

    p_cmp = sub.add_parser("compare", help="run several configs and tabulate")
    p_cmp.add_argument("--configs", nargs="+", required=True)
    p_cmp.add_argument("--out", required=True, help="output directory for compare.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        try:
            config = parse_config(args.config)
            config, _ = _apply_seed_override(config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        return cmd_train(config, quiet=args.quiet)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.trials, args.seed, shift=args.shift)
    return cmd_compare(args.configs, args.out)


if __name__ == "__main__":
    sys.exit(main())
