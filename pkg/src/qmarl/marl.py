"""Centralized-training / distributed-execution loop.

Each epoch: collect a fixed number of episodes with the per-agent actors,
push them into a FIFO replay buffer, take the most recent episodes as the
batch, update the critic once on discounted Monte-Carlo return targets,
then update each actor once on advantages computed against the pre-update
critic. Everything is deterministic given the run seed.

Episodes within an epoch are collected in lockstep so actor forward passes
batch across episodes and agents. Gradient batches are capped at
``max_grad_records`` seeded-subsampled records per network per epoch to
bound the parameter-shift evaluation cost.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import pshift, vqc
from .envs import make_env
from .errors import BatchError, ConfigError
from .seeding import (STREAM_ACTION, STREAM_ENV, STREAM_GRAD, STREAM_INIT,
                      derive_seed, rng_stream)


@dataclass(frozen=True)
class Trajectory:
    """One agent's record of one episode."""

    agent_id: int
    observations: np.ndarray     # (T, obs_dim)
    actions: np.ndarray          # (T,)
    rewards: np.ndarray          # (T,)
    log_probs: np.ndarray        # (T,)
    joint_summaries: np.ndarray  # (T, summary_dim)
    episode_return: float

    def __post_init__(self):
        if self.observations.shape[0] == 0:
            raise BatchError("empty trajectory")
        if not np.all(np.isfinite(self.log_probs)) or np.any(self.log_probs > 0):
            raise ValueError("log-probs must be finite and <= 0")

    def __len__(self) -> int:
        return self.observations.shape[0]


class ReplayBuffer:
    """Bounded FIFO of episodes (one tuple of per-agent trajectories each)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries = deque(maxlen=capacity)

    def push(self, episode: tuple) -> None:
        self._entries.append(episode)

    def recent(self, count: int) -> list:
        count = min(count, len(self._entries))
        return list(self._entries)[-count:]

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class TrainMetrics:
    """Per-epoch training record.

    ``wallclock_ms`` is fixed at 0 so metric streams (and the metrics.csv
    derived from them) are byte-reproducible across runs; real timing lives
    in the run manifest.
    """

    epoch: int
    total_reward: float
    actor_loss: float
    critic_loss: float
    wallclock_ms: int = 0


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """Suffix sums return_t = sum_{u>=t} gamma^(u-t) r_u."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must be in [0,1], got {gamma}")
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_returns(traj: Trajectory, gamma: float, values=None):
    """Per-step discounted returns and advantages for one trajectory.

    ``values`` are the critic's estimates at the recorded joint summaries;
    without them the advantages equal the raw returns.
    """
    returns = discounted_returns(traj.rewards, gamma)
    if values is None:
        return returns, returns.copy()
    values = np.asarray(values, dtype=float)
    if values.shape != returns.shape:
        raise BatchError(f"values shape {values.shape} != returns shape {returns.shape}")
    return returns, returns - values


# ---------------------------------------------------------------------------
# Quantum actor-critic agent.
# ---------------------------------------------------------------------------

class QuantumActorCritic:
    """Per-agent variational actors with one shared variational critic.

    Trainable pieces: each actor's rotation angles, the critic's rotation
    angles, plus two readout scales — the shared softmax temperature (for
    expectation-softmax policies) and the critic output scale. PVM policies
    have no temperature, so they carry one scale.
    """

    kind = "quantum"

    def __init__(self, n_agents: int, obs_dim: int, action_dim: int,
                 actor_template: vqc.CircuitTemplate, critic_template: vqc.CircuitTemplate,
                 readout: str, seed: int, learning_rate: float = 0.01,
                 softmax_beta: float = vqc.DEFAULT_SOFTMAX_BETA,
                 v_scale: float = vqc.DEFAULT_V_SCALE, max_grad_records: int = 128):
        if readout not in ("softmax", "pvm"):
            raise ConfigError(f"readout must be 'softmax' or 'pvm', got {readout!r}")
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.actor_template = actor_template
        self.critic_template = critic_template
        self.readout_kind = readout
        self.max_grad_records = max_grad_records
        if readout == "pvm":
            self._pvm_wires = vqc.Pvm.over_first_wires(action_dim).wires
        else:
            if action_dim > actor_template.n_qubits:
                raise ConfigError(
                    f"softmax readout needs action_dim <= actor qubits "
                    f"({action_dim} > {actor_template.n_qubits})")
            self._pvm_wires = None
        init_rng = rng_stream(seed, STREAM_INIT)
        spread = readout == "pvm"
        self.actor_params = [vqc.init_params(actor_template, init_rng, spread_first_ry=spread)
                             for _ in range(n_agents)]
        self.critic_params = vqc.init_params(critic_template, init_rng)
        self.beta = float(softmax_beta)
        self.v_scale = float(v_scale)
        self._actor_opts = [pshift.fresh_optimizer(actor_template.param_slots, learning_rate)
                            for _ in range(n_agents)]
        self._critic_opt = pshift.fresh_optimizer(critic_template.param_slots, learning_rate)
        self._beta_opt = pshift.fresh_optimizer(1, learning_rate)
        self._vscale_opt = pshift.fresh_optimizer(1, learning_rate)
        self._grad_rng = rng_stream(seed, STREAM_GRAD)

    @property
    def readout(self):
        if self.readout_kind == "pvm":
            return vqc.Pvm(self._pvm_wires)
        return vqc.ExpectationSoftmax(self.beta)

    def policy_probs(self, agent_id: int, obs_rows: np.ndarray) -> np.ndarray:
        return vqc.policy_probs_batch(self.actor_template, self.actor_params[agent_id],
                                      obs_rows, self.readout, self.action_dim)

    def values(self, summaries: np.ndarray) -> np.ndarray:
        return vqc.critic_values_batch(self.critic_template, self.critic_params,
                                       summaries, self.v_scale)

    def param_report(self) -> dict:
        actor_counts = [vqc.param_count(self.actor_template)] * self.n_agents
        critic = vqc.param_count(self.critic_template)
        scales = 1 if self.readout_kind == "pvm" else 2
        return {"actors": actor_counts, "critic": critic, "scales": scales,
                "total": sum(actor_counts) + critic + scales}

    def param_count(self) -> int:
        return self.param_report()["total"]

    def _subsample(self, n_rows: int) -> np.ndarray:
        take = min(self.max_grad_records, n_rows)
        return np.sort(self._grad_rng.choice(n_rows, size=take, replace=False))

    def update(self, episodes: list, gamma: float) -> tuple[float, float]:
        summaries, targets, per_agent = assemble_update_arrays(self, episodes, gamma)

        # Critic regression on team-return targets (pre-update advantages
        # were already baked into per_agent above).
        pick = self._subsample(summaries.shape[0])
        critic_batch = pshift.CriticBatch(summaries[pick], targets[pick])
        critic_loss, critic_grad, scale_grad = pshift._critic_grads(
            critic_batch, self.critic_template, self.critic_params, self.v_scale)
        self.critic_params, self._critic_opt = pshift.optimizer_step(
            self.critic_params, critic_grad, self._critic_opt)
        new_scale, self._vscale_opt = pshift.optimizer_step(
            np.array([self.v_scale]), np.array([scale_grad]), self._vscale_opt)
        self.v_scale = float(new_scale[0])

        actor_losses = []
        beta_grads = []
        for agent_id, (obs, actions, advantages) in enumerate(per_agent):
            pick = self._subsample(obs.shape[0])
            batch = pshift.ActorBatch(obs[pick], actions[pick], advantages[pick],
                                      self.action_dim)
            loss, grad, beta_grad = pshift._actor_grads(
                batch, self.actor_template, self.actor_params[agent_id], self.readout)
            self.actor_params[agent_id], self._actor_opts[agent_id] = pshift.optimizer_step(
                self.actor_params[agent_id], grad, self._actor_opts[agent_id])
            actor_losses.append(loss)
            if beta_grad is not None:
                beta_grads.append(beta_grad)
        if beta_grads:
            new_beta, self._beta_opt = pshift.optimizer_step(
                np.array([self.beta]), np.array([float(np.mean(beta_grads))]), self._beta_opt)
            self.beta = float(new_beta[0])
        return float(np.mean(actor_losses)), float(critic_loss)


def assemble_update_arrays(agent, episodes: list, gamma: float):
    """Stack (summaries, team-return targets) and per-agent (obs, action,
    advantage) arrays from a batch of episodes, valuing states with the
    agent's current critic."""
    if not episodes:
        raise BatchError("empty episode batch")
    summaries = np.concatenate([ep[0].joint_summaries for ep in episodes])
    values = agent.values(summaries)
    n_agents = len(episodes[0])
    targets = []
    per_agent = [([], [], []) for _ in range(n_agents)]
    offset = 0
    for episode in episodes:
        steps = len(episode[0])
        ep_values = values[offset:offset + steps]
        offset += steps
        agent_returns = [discounted_returns(traj.rewards, gamma) for traj in episode]
        targets.append(np.mean(agent_returns, axis=0))
        for traj, returns in zip(episode, agent_returns):
            obs_list, act_list, adv_list = per_agent[traj.agent_id]
            obs_list.append(traj.observations)
            act_list.append(traj.actions)
            adv_list.append(returns - ep_values)
    stacked = [(np.concatenate(o), np.concatenate(a), np.concatenate(d))
               for o, a, d in per_agent]
    return summaries, np.concatenate(targets), stacked


# ---------------------------------------------------------------------------
# Episode collection.
# ---------------------------------------------------------------------------

def _run_episodes(envs: list, agent, sampling_rngs: list) -> list:
    """Step all environments to completion in lockstep; returns one tuple of
    per-agent trajectories per environment."""
    n_envs = len(envs)
    n_agents = envs[0].n_agents
    obs = [env.reset() for env in envs]
    store = [[{"obs": [], "act": [], "rew": [], "logp": [], "summ": []}
              for _ in range(n_agents)] for _ in range(n_envs)]
    returns = [np.zeros(n_agents) for _ in range(n_envs)]
    active = list(range(n_envs))
    while active:
        probs = []
        for agent_id in range(n_agents):
            rows = np.stack([obs[e][agent_id] for e in active])
            probs.append(agent.policy_probs(agent_id, rows))
        finished = []
        for slot, e in enumerate(active):
            summary = vqc.joint_summary(obs[e])
            actions = []
            for agent_id in range(n_agents):
                p = probs[agent_id][slot]
                action = int(sampling_rngs[e].choice(len(p), p=p))
                actions.append(action)
                rec = store[e][agent_id]
                rec["obs"].append(obs[e][agent_id])
                rec["act"].append(action)
                rec["logp"].append(float(np.log(p[action])))
                rec["summ"].append(summary)
            result = envs[e].step(actions)
            for agent_id in range(n_agents):
                store[e][agent_id]["rew"].append(float(result.rewards[agent_id]))
            returns[e] += result.rewards
            obs[e] = result.observations
            if result.done:
                finished.append(e)
        active = [e for e in active if e not in finished]
    episodes = []
    for e in range(n_envs):
        trajs = []
        for agent_id in range(n_agents):
            rec = store[e][agent_id]
            trajs.append(Trajectory(
                agent_id,
                np.stack(rec["obs"]),
                np.array(rec["act"], dtype=int),
                np.array(rec["rew"]),
                np.array(rec["logp"]),
                np.stack(rec["summ"]),
                float(returns[e][agent_id]),
            ))
        episodes.append(tuple(trajs))
    return episodes


def collect_episode(env, agent, rng_seed: int) -> tuple:
    """Collect one full episode; actions sampled from the agent's policies."""
    sampling_rng = rng_stream(rng_seed, STREAM_ACTION)
    return _run_episodes([env], agent, [sampling_rng])[0]


# ---------------------------------------------------------------------------
# Config-driven training.
# ---------------------------------------------------------------------------

def build_env(config, seed: int):
    return make_env(config.env.kind, seed, **config.env.constants)


def actor_template_for(config) -> vqc.CircuitTemplate:
    """Actor circuit structure from a config; PVM actors open each layer with
    the ring so the final rotations directly steer the measured bits."""
    return vqc.CircuitTemplate(config.agent.actor_qubits, config.agent.actor_layers,
                               ring_first=config.agent.readout == "pvm")


def build_agent(config):
    """Instantiate the agent named by config.agent.kind (baselines included)."""
    from . import baselines  # deferred: baselines imports this module's types

    probe = build_env(config, seed=0)
    kind = config.agent.kind
    seed = derive_seed(config.seed, STREAM_INIT)
    if kind == "quantum":
        return QuantumActorCritic(
            n_agents=probe.n_agents, obs_dim=probe.obs_dim, action_dim=probe.action_dim,
            actor_template=actor_template_for(config),
            critic_template=vqc.CircuitTemplate(config.agent.critic_qubits,
                                                config.agent.critic_layers),
            readout=config.agent.readout, seed=seed,
            learning_rate=config.train.learning_rate,
            softmax_beta=config.agent.softmax_beta, v_scale=config.agent.v_scale,
            max_grad_records=config.train.max_grad_records)
    return baselines.build_baseline_agent(kind, config, probe, seed)


def train(config, on_metrics=None) -> list[TrainMetrics]:
    """Run the full training loop; returns one TrainMetrics row per epoch."""
    agent = build_agent(config)
    return train_agent(config, agent, on_metrics)


def train_agent(config, agent, on_metrics=None) -> list[TrainMetrics]:
    buffer = ReplayBuffer(config.train.buffer_capacity)
    metrics: list[TrainMetrics] = []
    per_epoch = config.train.episodes_per_epoch
    run_env_seed = derive_seed(config.seed, STREAM_ENV)
    reseed = build_env(config, run_env_seed).reseed_per_episode
    for epoch in range(config.train.epochs):
        envs = [build_env(config, derive_seed(config.seed, STREAM_ENV, epoch, e)
                          if reseed else run_env_seed)
                for e in range(per_epoch)]
        rngs = [rng_stream(config.seed, STREAM_ACTION, epoch, e) for e in range(per_epoch)]
        episodes = _run_episodes(envs, agent, rngs)
        for episode in episodes:
            buffer.push(episode)
        batch = buffer.recent(per_epoch)
        actor_loss, critic_loss = agent.update(batch, config.train.gamma)
        total = float(np.mean([sum(t.episode_return for t in ep) for ep in episodes]))
        row = TrainMetrics(epoch, total, float(actor_loss), float(critic_loss))
        metrics.append(row)
        if on_metrics is not None:
            on_metrics(row)
    return metrics
