"""Benchmark agents sharing the quantum agent's train/eval harness.

* ``ClassicalActorCritic`` — dense tanh networks for actors and critic,
  sized by a budget search to land within +-5% of a named parameter budget
  (110 or 40000).
* ``HybridActorCritic`` — quantum actors with a classical dense critic,
  sized so the combined count lands as close to 110 as the grid allows.
* ``IqlAgent`` — independent tabular Q-learning with optimistic
  initialization and epsilon-greedy behavior.
* ``RandomAgent`` — uniform action sampling, zero parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pshift, vqc
from .errors import BudgetInfeasibleError, ConfigError, DimensionError
from .marl import assemble_update_arrays
from .seeding import STREAM_EXPLORE, STREAM_GRAD, STREAM_INIT, rng_stream

BUDGET_PRESETS = {110: 1, 40000: 2}   # budget -> hidden-layer depth
BUDGET_TOLERANCE = 0.05
_MAX_HIDDEN = 256


# ---------------------------------------------------------------------------
# Dense networks.
# ---------------------------------------------------------------------------

@dataclass
class DenseNet:
    """Fully connected net: tanh hidden layers, linear final layer.

    Weight matrices are (out, in); biases (out,).
    """

    sizes: tuple
    weights: list
    biases: list

    @classmethod
    def create(cls, sizes, rng: np.random.Generator) -> "DenseNet":
        sizes = tuple(int(s) for s in sizes)
        weights = [rng.normal(0.0, 1.0 / np.sqrt(sizes[i]), (sizes[i + 1], sizes[i]))
                   for i in range(len(sizes) - 1)]
        biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        return cls(sizes, weights, biases)

    @property
    def param_count(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def to_flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] +
                              [b.ravel() for b in self.biases])

    def from_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for w in self.weights:
            w[...] = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[...] = flat[pos:pos + b.size]
            pos += b.size


def dense_layer_count(sizes) -> int:
    """Analytic parameter count sum (in+1)*out over consecutive layer pairs."""
    return sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))


def _forward_full(net: DenseNet, x: np.ndarray) -> list:
    """All layer activations, input first; hidden layers tanh, final linear."""
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for idx, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if idx != last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def dense_forward(net: DenseNet, x) -> np.ndarray:
    """Network output for a single input or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.shape[1] != net.sizes[0]:
        raise DimensionError(f"expected input size {net.sizes[0]}, got {rows.shape[1]}")
    out = _forward_full(net, rows)[-1]
    return out[0] if single else out


def dense_backprop(net: DenseNet, x, output_grad) -> np.ndarray:
    """Exact reverse-mode gradient of sum_b <output_grad_b, output_b>.

    Returned flat layout matches ``DenseNet.to_flat``.
    """
    x = np.asarray(x, dtype=float)
    output_grad = np.asarray(output_grad, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    ograds = output_grad[None, :] if single else output_grad
    if rows.shape[1] != net.sizes[0]:
        raise DimensionError(f"expected input size {net.sizes[0]}, got {rows.shape[1]}")
    if ograds.shape != (rows.shape[0], net.sizes[-1]):
        raise DimensionError(
            f"expected output grad shape {(rows.shape[0], net.sizes[-1])}, got {ograds.shape}")
    acts = _forward_full(net, rows)
    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.weights)
    delta = ograds
    for layer in range(len(net.weights) - 1, -1, -1):
        weight_grads[layer] = delta.T @ acts[layer]
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer]) * (1.0 - acts[layer] ** 2)
    return np.concatenate([g.ravel() for g in weight_grads] +
                          [g.ravel() for g in bias_grads])


# ---------------------------------------------------------------------------
# Budget-matched construction.
# ---------------------------------------------------------------------------

def _sizes_for(in_dim: int, hidden: int, out_dim: int, depth: int) -> tuple:
    return (in_dim,) + (hidden,) * depth + (out_dim,)


def search_matched_sizes(budget: int, obs_dim: int, action_dim: int, summary_dim: int,
                         n_agents: int = 1) -> tuple:
    """Hidden sizes for (actor, critic) whose system total (n_agents actors +
    one critic) is within +-5% of the budget; raises when no size fits."""
    if budget not in BUDGET_PRESETS:
        raise ConfigError(f"budget must be one of {sorted(BUDGET_PRESETS)}, got {budget}")
    depth = BUDGET_PRESETS[budget]
    best = None
    for h_actor in range(1, _MAX_HIDDEN + 1):
        actor_total = n_agents * dense_layer_count(_sizes_for(obs_dim, h_actor, action_dim, depth))
        if best is not None and actor_total > budget * (1 + BUDGET_TOLERANCE):
            break
        for h_critic in range(1, _MAX_HIDDEN + 1):
            total = actor_total + dense_layer_count(_sizes_for(summary_dim, h_critic, 1, depth))
            diff = abs(total - budget)
            if best is None or diff < best[0]:
                best = (diff, h_actor, h_critic, total)
            if total > budget * (1 + BUDGET_TOLERANCE):
                break
    diff, h_actor, h_critic, total = best
    if diff > budget * BUDGET_TOLERANCE:
        minimum = (n_agents * dense_layer_count(_sizes_for(obs_dim, 1, action_dim, depth))
                   + dense_layer_count(_sizes_for(summary_dim, 1, 1, depth)))
        raise BudgetInfeasibleError(
            f"no dense architecture lands within {BUDGET_TOLERANCE:.0%} of {budget} "
            f"parameters (minimum representable count is {minimum})", minimum)
    return (_sizes_for(obs_dim, h_actor, action_dim, depth),
            _sizes_for(summary_dim, h_critic, 1, depth), total)


def build_matched_baseline(budget: int, obs_dim: int, action_dim: int,
                           summary_dim: int | None = None, n_agents: int = 1,
                           rng: np.random.Generator | None = None) -> tuple:
    """(actor, critic) DenseNet pair for a named budget preset.

    The feasibility check runs before any training state exists; an
    infeasible budget (say 2**16 outputs under 110 parameters) raises with
    the minimum representable count.
    """
    if summary_dim is None:
        summary_dim = 2 * obs_dim
    actor_sizes, critic_sizes, _ = search_matched_sizes(
        budget, obs_dim, action_dim, summary_dim, n_agents)
    rng = rng or np.random.default_rng(0)
    return DenseNet.create(actor_sizes, rng), DenseNet.create(critic_sizes, rng)


def random_policy(action_dim: int, rng: np.random.Generator) -> int:
    """Uniform action draw; the zero-parameter baseline."""
    if action_dim < 1:
        raise ConfigError(f"action_dim must be >= 1, got {action_dim}")
    return int(rng.integers(0, action_dim))


# ---------------------------------------------------------------------------
# Agents.
# ---------------------------------------------------------------------------

class ClassicalActorCritic:
    """Dense actor-critic at a fixed parameter budget."""

    def __init__(self, budget: int, n_agents: int, obs_dim: int, action_dim: int,
                 seed: int, learning_rate: float = 0.01):
        self.kind = f"classical{'110' if budget == 110 else '40k'}"
        self.n_agents = n_agents
        self.action_dim = action_dim
        summary_dim = 2 * obs_dim
        actor_sizes, critic_sizes, self._total = search_matched_sizes(
            budget, obs_dim, action_dim, summary_dim, n_agents)
        rng = rng_stream(seed, STREAM_INIT)
        self.actors = [DenseNet.create(actor_sizes, rng) for _ in range(n_agents)]
        self.critic = DenseNet.create(critic_sizes, rng)
        self._actor_opts = [pshift.fresh_optimizer(a.param_count, learning_rate)
                            for a in self.actors]
        self._critic_opt = pshift.fresh_optimizer(self.critic.param_count, learning_rate)

    def policy_probs(self, agent_id: int, obs_rows: np.ndarray) -> np.ndarray:
        logits = dense_forward(self.actors[agent_id], np.atleast_2d(obs_rows))
        return vqc.floor_distribution(vqc.softmax(logits))

    def values(self, summaries: np.ndarray) -> np.ndarray:
        return dense_forward(self.critic, np.atleast_2d(summaries))[:, 0]

    def param_report(self) -> dict:
        return {"actors": [a.param_count for a in self.actors],
                "critic": self.critic.param_count, "scales": 0, "total": self._total}

    def param_count(self) -> int:
        return self._total

    def update(self, episodes: list, gamma: float) -> tuple[float, float]:
        summaries, targets, per_agent = assemble_update_arrays(self, episodes, gamma)
        values = self.values(summaries)
        residual = values - targets
        critic_loss = float(np.mean(residual ** 2))
        out_grad = (2.0 * residual / len(residual))[:, None]
        grad = dense_backprop(self.critic, summaries, out_grad)
        new_flat, self._critic_opt = pshift.optimizer_step(
            self.critic.to_flat(), grad, self._critic_opt)
        self.critic.from_flat(new_flat)

        floor_scale = 1.0 / (1.0 + self.action_dim * vqc.EPS_FLOOR)
        losses = []
        for agent_id, (obs, actions, advantages) in enumerate(per_agent):
            net = self.actors[agent_id]
            logits = dense_forward(net, obs)
            sigma = vqc.softmax(logits)
            probs = vqc.floor_distribution(sigma)
            picked = probs[np.arange(len(actions)), actions]
            losses.append(float(-np.mean(np.log(picked) * advantages)))
            # d(-log pi_a * A)/dlogit_i = -(A/pi_a) * floor_scale * sigma_a (delta_ai - sigma_i)
            coef = -(advantages / picked) * floor_scale * sigma[np.arange(len(actions)), actions]
            out_grad = coef[:, None] * (np.eye(self.action_dim)[actions] - sigma)
            grad = dense_backprop(net, obs, out_grad / len(actions))
            new_flat, self._actor_opts[agent_id] = pshift.optimizer_step(
                net.to_flat(), grad, self._actor_opts[agent_id])
            net.from_flat(new_flat)
        return float(np.mean(losses)), critic_loss


class HybridActorCritic:
    """Quantum actors (parameter-shift trained) with a dense classical critic.

    The critic hidden size is chosen so the combined trainable count lands
    as close to 110 as the integer grid allows, mirroring the matched-budget
    comparison."""

    kind = "hybrid"

    def __init__(self, n_agents: int, obs_dim: int, action_dim: int,
                 actor_template: vqc.CircuitTemplate, readout: str, seed: int,
                 learning_rate: float = 0.01,
                 softmax_beta: float = vqc.DEFAULT_SOFTMAX_BETA,
                 max_grad_records: int = 128, budget: int = 110):
        if readout not in ("softmax", "pvm"):
            raise ConfigError(f"readout must be 'softmax' or 'pvm', got {readout!r}")
        self.n_agents = n_agents
        self.action_dim = action_dim
        self.actor_template = actor_template
        self.readout_kind = readout
        self.max_grad_records = max_grad_records
        if readout == "pvm":
            self._pvm_wires = vqc.Pvm.over_first_wires(action_dim).wires
            n_scales = 0
        else:
            if action_dim > actor_template.n_qubits:
                raise ConfigError(
                    f"softmax readout needs action_dim <= actor qubits "
                    f"({action_dim} > {actor_template.n_qubits})")
            self._pvm_wires = None
            n_scales = 1
        summary_dim = 2 * obs_dim
        actor_total = n_agents * actor_template.param_slots + n_scales
        critic_budget = budget - actor_total
        min_critic = dense_layer_count((summary_dim, 1, 1))
        if critic_budget < min_critic:
            raise BudgetInfeasibleError(
                f"quantum actors already use {actor_total} of {budget} parameters; "
                f"minimum representable count is {actor_total + min_critic}",
                actor_total + min_critic)
        candidates = [(abs(actor_total + dense_layer_count((summary_dim, h, 1)) - budget), h)
                      for h in range(1, _MAX_HIDDEN + 1)]
        _, hidden = min(candidates)
        init_rng = rng_stream(seed, STREAM_INIT)
        spread = readout == "pvm"
        self.actor_params = [vqc.init_params(actor_template, init_rng, spread_first_ry=spread)
                             for _ in range(n_agents)]
        self.critic = DenseNet.create((summary_dim, hidden, 1), init_rng)
        self.beta = float(softmax_beta)
        self._actor_opts = [pshift.fresh_optimizer(actor_template.param_slots, learning_rate)
                            for _ in range(n_agents)]
        self._critic_opt = pshift.fresh_optimizer(self.critic.param_count, learning_rate)
        self._beta_opt = pshift.fresh_optimizer(1, learning_rate)
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
        return dense_forward(self.critic, np.atleast_2d(summaries))[:, 0]

    def param_report(self) -> dict:
        actor_counts = [self.actor_template.param_slots] * self.n_agents
        scales = 0 if self.readout_kind == "pvm" else 1
        return {"actors": actor_counts, "critic": self.critic.param_count,
                "scales": scales,
                "total": sum(actor_counts) + self.critic.param_count + scales}

    def param_count(self) -> int:
        return self.param_report()["total"]

    def update(self, episodes: list, gamma: float) -> tuple[float, float]:
        summaries, targets, per_agent = assemble_update_arrays(self, episodes, gamma)
        values = self.values(summaries)
        residual = values - targets
        critic_loss = float(np.mean(residual ** 2))
        out_grad = (2.0 * residual / len(residual))[:, None]
        grad = dense_backprop(self.critic, summaries, out_grad)
        new_flat, self._critic_opt = pshift.optimizer_step(
            self.critic.to_flat(), grad, self._critic_opt)
        self.critic.from_flat(new_flat)

        losses = []
        beta_grads = []
        for agent_id, (obs, actions, advantages) in enumerate(per_agent):
            take = min(self.max_grad_records, obs.shape[0])
            pick = np.sort(self._grad_rng.choice(obs.shape[0], size=take, replace=False))
            batch = pshift.ActorBatch(obs[pick], actions[pick], advantages[pick],
                                      self.action_dim)
            loss, grad, beta_grad = pshift._actor_grads(
                batch, self.actor_template, self.actor_params[agent_id], self.readout)
            self.actor_params[agent_id], self._actor_opts[agent_id] = pshift.optimizer_step(
                self.actor_params[agent_id], grad, self._actor_opts[agent_id])
            losses.append(loss)
            if beta_grad is not None:
                beta_grads.append(beta_grad)
        if beta_grads:
            new_beta, self._beta_opt = pshift.optimizer_step(
                np.array([self.beta]), np.array([float(np.mean(beta_grads))]), self._beta_opt)
            self.beta = float(new_beta[0])
        return float(np.mean(losses)), critic_loss


class IqlAgent:
    """Independent tabular Q-learning over bucketed observations.

    Q values start at the optimistic reward bound so unvisited actions stay
    attractive; behavior is epsilon-greedy with seeded random tie-breaking.
    """

    kind = "iql"

    def __init__(self, n_agents: int, action_dim: int, seed: int,
                 learning_rate: float = 0.1, epsilon: float = 0.05,
                 optimistic_init: float = 1.0, bucket_levels: int = 5):
        self.n_agents = n_agents
        self.action_dim = action_dim
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.optimistic_init = optimistic_init
        self.bucket_levels = bucket_levels
        self.tables = [dict() for _ in range(n_agents)]
        self._explore_rng = rng_stream(seed, STREAM_EXPLORE)

    def bucket(self, obs: np.ndarray) -> tuple:
        clipped = np.clip(np.asarray(obs, dtype=float), 0.0, 1.0 - 1e-12)
        return tuple((clipped * self.bucket_levels).astype(int))

    def _q_row(self, agent_id: int, key: tuple) -> np.ndarray:
        table = self.tables[agent_id]
        if key not in table:
            table[key] = np.full(self.action_dim, self.optimistic_init)
        return table[key]

    def policy_probs(self, agent_id: int, obs_rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(obs_rows)
        probs = np.full((rows.shape[0], self.action_dim), self.epsilon / self.action_dim)
        for i, obs in enumerate(rows):
            q = self._q_row(agent_id, self.bucket(obs))
            best = np.flatnonzero(q == q.max())
            greedy = int(best[self._explore_rng.integers(0, len(best))])
            probs[i, greedy] += 1.0 - self.epsilon
        return probs

    def update_transition(self, agent_id: int, obs, action: int, reward: float,
                          next_obs, done: bool, gamma: float) -> None:
        """Q(s,a) += lr * (r + gamma * max_a' Q(s',a') * (1-done) - Q(s,a))."""
        q = self._q_row(agent_id, self.bucket(obs))
        bootstrap = 0.0 if done else float(self._q_row(agent_id, self.bucket(next_obs)).max())
        q[action] += self.learning_rate * (reward + gamma * bootstrap - q[action])

    def update(self, episodes: list, gamma: float) -> tuple[float, float]:
        for episode in episodes:
            for traj in episode:
                steps = len(traj)
                for t in range(steps):
                    next_obs = traj.observations[min(t + 1, steps - 1)]
                    self.update_transition(traj.agent_id, traj.observations[t],
                                           int(traj.actions[t]), float(traj.rewards[t]),
                                           next_obs, t == steps - 1, gamma)
        return 0.0, 0.0

    def param_report(self) -> dict:
        allocated = sum(len(t) * self.action_dim for t in self.tables)
        return {"actors": [], "critic": 0, "scales": 0, "table_cells": allocated,
                "total": allocated}

    def param_count(self) -> int:
        return self.param_report()["total"]


class RandomAgent:
    """Uniform random walk; no trainable state."""

    kind = "random"

    def __init__(self, n_agents: int, action_dim: int):
        self.n_agents = n_agents
        self.action_dim = action_dim

    def policy_probs(self, agent_id: int, obs_rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(obs_rows)
        return np.full((rows.shape[0], self.action_dim), 1.0 / self.action_dim)

    def update(self, episodes: list, gamma: float) -> tuple[float, float]:
        return 0.0, 0.0

    def param_report(self) -> dict:
        return {"actors": [], "critic": 0, "scales": 0, "total": 0}

    def param_count(self) -> int:
        return 0


def build_baseline_agent(kind: str, config, probe_env, seed: int):
    """Agent named by ``kind`` wired up from an experiment config."""
    n_agents = probe_env.n_agents
    obs_dim = probe_env.obs_dim
    action_dim = probe_env.action_dim
    lr = config.train.learning_rate
    if kind == "hybrid":
        from .marl import actor_template_for

        return HybridActorCritic(
            n_agents=n_agents, obs_dim=obs_dim, action_dim=action_dim,
            actor_template=actor_template_for(config),
            readout=config.agent.readout, seed=seed, learning_rate=lr,
            softmax_beta=config.agent.softmax_beta,
            max_grad_records=config.train.max_grad_records)
    if kind == "classical110":
        return ClassicalActorCritic(110, n_agents, obs_dim, action_dim, seed, lr)
    if kind == "classical40k":
        return ClassicalActorCritic(40000, n_agents, obs_dim, action_dim, seed, lr)
    if kind == "iql":
        return IqlAgent(n_agents, action_dim, seed, learning_rate=max(lr, 0.1),
                        epsilon=config.agent.epsilon,
                        optimistic_init=config.agent.optimistic_init,
                        bucket_levels=config.agent.bucket_levels)
    if kind == "random":
        return RandomAgent(n_agents, action_dim)
    raise ConfigError(f"unknown agent kind {kind!r}")
