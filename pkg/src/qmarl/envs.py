"""Seeded multi-agent environments.

Three tasks:

* ``FactoryEnv`` — queue management: agents move items from a shared source
  buffer through their own bounded queues into a bounded warehouse, which
  ships a few items per step; shipped items pass quality control with a
  fixed probability. Reward couples the team through the shipped-good
  fraction and penalizes each agent's own overflow attempts.
* ``UavEnv`` — grid coverage under noise: agents move on a grid spending
  energy, rewarded by the fraction of ground users within their coverage
  radius; observations carry Gaussian position noise and intended moves are
  occasionally replaced by wind.
* ``BanditEnv`` — single-step combinatorial task over 2**k actions with a
  Hamming-shaped reward against a hidden bit pattern; the large-action-space
  stress test for PVM policies.

All randomness flows from the instance seed via the documented stream
indices in :mod:`qmarl.seeding`; identical (config, seed, action sequence)
reproduces identical step streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ActionError, ConfigError
from .seeding import STREAM_ENV, STREAM_NOISE, rng_stream


@dataclass(frozen=True)
class StepResult:
    observations: list
    rewards: np.ndarray
    done: bool
    info: dict


# ---------------------------------------------------------------------------
# Smart-factory queue management.
# ---------------------------------------------------------------------------

FACTORY_ACTIONS = ("idle", "load1", "load2", "unload")
IDLE, LOAD1, LOAD2, UNLOAD = range(4)


@dataclass
class FactoryState:
    source_buffer: int
    amr_queues: list
    warehouse: int
    step: int
    items_created: int = 0
    items_shipped: int = 0


class FactoryEnv:
    """Queue management with per-agent actions {idle, load1, load2, unload}."""

    action_dim = len(FACTORY_ACTIONS)
    obs_dim = 4
    # Episodes within a run draw fresh dynamics streams.
    reseed_per_episode = True

    def __init__(self, n_agents: int = 2, seed: int = 0, amr_capacity: int = 10,
                 warehouse_capacity: int = 100, source_capacity: int = 20,
                 arrival_rate: int = 4, ship_count: int = 3,
                 good_probability: float = 0.9, overflow_penalty: float = 0.5,
                 horizon: int = 50):
        if n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {n_agents}")
        self.n_agents = n_agents
        self.seed = seed
        self.amr_capacity = amr_capacity
        self.warehouse_capacity = warehouse_capacity
        self.source_capacity = source_capacity
        self.arrival_rate = arrival_rate
        self.ship_count = ship_count
        self.good_probability = good_probability
        self.overflow_penalty = overflow_penalty
        self.horizon = horizon
        self.state: FactoryState | None = None
        self._rng: np.random.Generator | None = None

    def reset(self, seed: int | None = None) -> list:
        if seed is not None:
            self.seed = seed
        self._rng = rng_stream(self.seed, STREAM_ENV)
        self.state = FactoryState(0, [0] * self.n_agents, 0, 0)
        return self._observations()

    def _observations(self) -> list:
        s = self.state
        return [np.array([s.amr_queues[i] / self.amr_capacity,
                          s.warehouse / self.warehouse_capacity,
                          s.source_buffer / self.source_capacity,
                          s.step / self.horizon])
                for i in range(self.n_agents)]

    def step(self, joint_action) -> StepResult:
        if self.state is None:
            raise ConfigError("call reset() before step()")
        s = self.state
        if s.step >= self.horizon:
            raise ConfigError("episode already done")
        actions = list(joint_action)
        if len(actions) != self.n_agents:
            raise ActionError(f"expected {self.n_agents} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= int(a) < self.action_dim:
                raise ActionError(f"action {a} outside 0..{self.action_dim - 1}")

        # (1) arrivals, clamped to the source capacity (excess never enters).
        added = min(self.arrival_rate, self.source_capacity - s.source_buffer)
        s.source_buffer += added
        s.items_created += added

        overflows = [0] * self.n_agents
        # (2) loads, resolved in agent-index order.
        for i, a in enumerate(actions):
            if a in (LOAD1, LOAD2):
                requested = 1 if a == LOAD1 else 2
                moved = min(requested, s.source_buffer, self.amr_capacity - s.amr_queues[i])
                s.source_buffer -= moved
                s.amr_queues[i] += moved
                if moved < requested:
                    overflows[i] += 1
        # (3) unloads, agent-index order; the whole queue moves, truncated by space.
        for i, a in enumerate(actions):
            if a == UNLOAD:
                moved = min(s.amr_queues[i], self.warehouse_capacity - s.warehouse)
                s.warehouse += moved
                if moved < s.amr_queues[i]:
                    overflows[i] += 1
                s.amr_queues[i] -= moved
        # (4) warehouse ships; each item passes quality control with prob rho.
        shipped = min(self.ship_count, s.warehouse)
        s.warehouse -= shipped
        s.items_shipped += shipped
        good = int(self._rng.binomial(shipped, self.good_probability)) if shipped else 0
        # (5) shared shipping reward minus own overflow penalty.
        shared = good / self.ship_count
        rewards = np.array([shared - self.overflow_penalty * overflows[i]
                            for i in range(self.n_agents)])

        s.step += 1
        done = s.step >= self.horizon
        info = {"overflow_events": overflows, "shipped": shipped, "good": good,
                "items_created": s.items_created, "items_shipped": s.items_shipped}
        return StepResult(self._observations(), rewards, done, info)


# ---------------------------------------------------------------------------
# UAV mobile-access coverage.
# ---------------------------------------------------------------------------

UAV_ACTIONS = ("north", "south", "east", "west", "hover")
NORTH, SOUTH, EAST, WEST, HOVER = range(5)
_UAV_DELTAS = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0), WEST: (-1, 0), HOVER: (0, 0)}


@dataclass
class UavState:
    positions: list
    energies: list
    users: list
    step: int


class UavEnv:
    """Grid coverage with state noise (positions) and action noise (wind)."""

    action_dim = len(UAV_ACTIONS)
    obs_dim = 4
    reseed_per_episode = True

    def __init__(self, n_agents: int = 2, seed: int = 0, grid_size: int = 10,
                 n_users: int = 6, coverage_radius: int = 2,
                 initial_energy: float = 30.0, move_cost: float = 1.0,
                 hover_cost: float = 0.5, state_noise: float = 0.02,
                 wind_probability: float = 0.1, horizon: int = 40):
        if n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {n_agents}")
        if not 0.0 <= wind_probability <= 1.0:
            raise ConfigError(f"wind_probability must be in [0,1], got {wind_probability}")
        self.n_agents = n_agents
        self.seed = seed
        self.grid_size = grid_size
        self.n_users = n_users
        self.coverage_radius = coverage_radius
        self.initial_energy = initial_energy
        self.move_cost = move_cost
        self.hover_cost = hover_cost
        self.state_noise = state_noise
        self.wind_probability = wind_probability
        self.horizon = horizon
        self.state: UavState | None = None
        self._rng: np.random.Generator | None = None
        self._noise_rng: np.random.Generator | None = None

    def reset(self, seed: int | None = None) -> list:
        if seed is not None:
            self.seed = seed
        self._rng = rng_stream(self.seed, STREAM_ENV)
        self._noise_rng = rng_stream(self.seed, STREAM_NOISE)
        g = self.grid_size - 1
        corners = [(0, 0), (g, 0), (0, g), (g, g)]
        positions = [corners[i % 4] for i in range(self.n_agents)]
        users = [tuple(self._rng.integers(0, self.grid_size, 2)) for _ in range(self.n_users)]
        self.state = UavState(positions, [self.initial_energy] * self.n_agents, users, 0)
        return self._observations()

    def _covered_fraction(self, pos) -> float:
        r = self.coverage_radius
        hits = sum(1 for u in self.state.users
                   if max(abs(u[0] - pos[0]), abs(u[1] - pos[1])) <= r)
        return hits / self.n_users

    def _observations(self) -> list:
        s = self.state
        obs = []
        for i in range(self.n_agents):
            x, y = s.positions[i]
            noise = self._noise_rng.normal(0.0, self.state_noise, 2) if self.state_noise > 0 \
                else np.zeros(2)
            obs.append(np.array([x / self.grid_size + noise[0],
                                 y / self.grid_size + noise[1],
                                 s.energies[i] / self.initial_energy,
                                 self._covered_fraction(s.positions[i])]))
        return obs

    def step(self, joint_action) -> StepResult:
        if self.state is None:
            raise ConfigError("call reset() before step()")
        s = self.state
        if s.step >= self.horizon or all(e <= 0 for e in s.energies):
            raise ConfigError("episode already done")
        actions = list(joint_action)
        if len(actions) != self.n_agents:
            raise ActionError(f"expected {self.n_agents} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= int(a) < self.action_dim:
                raise ActionError(f"action {a} outside 0..{self.action_dim - 1}")

        wind_events = [0] * self.n_agents
        rewards = np.zeros(self.n_agents)
        for i, intended in enumerate(actions):
            if s.energies[i] <= 0:
                continue  # a drained agent holds position and stops draining
            realized = int(intended)
            if self.wind_probability > 0 and self._rng.random() < self.wind_probability:
                others = [a for a in range(self.action_dim) if a != realized]
                realized = int(others[self._rng.integers(0, len(others))])
                wind_events[i] = 1
            dx, dy = _UAV_DELTAS[realized]
            x = min(self.grid_size - 1, max(0, s.positions[i][0] + dx))
            y = min(self.grid_size - 1, max(0, s.positions[i][1] + dy))
            s.positions[i] = (x, y)
            cost = self.hover_cost if realized == HOVER else self.move_cost
            s.energies[i] = max(0.0, s.energies[i] - cost)
        for i in range(self.n_agents):
            rewards[i] = self._covered_fraction(s.positions[i])

        s.step += 1
        done = s.step >= self.horizon or all(e <= 0 for e in s.energies)
        info = {"wind_events": wind_events}
        return StepResult(self._observations(), rewards, done, info)


# ---------------------------------------------------------------------------
# Large-action combinatorial bandit.
# ---------------------------------------------------------------------------

BANDIT_KS = (1, 4, 16)


@dataclass
class BanditState:
    target_bits: int
    k: int
    step: int = 0


class BanditEnv:
    """Single-step episodes over 2**k actions, reward 1 - hamming/k."""

    n_agents = 1
    obs_dim = 1
    # The hidden target is drawn once per run seed and must stay fixed, so
    # every episode reuses the run-level seed.
    reseed_per_episode = False

    def __init__(self, k: int = 4, seed: int = 0):
        if k not in BANDIT_KS:
            raise ConfigError(f"k must be one of {BANDIT_KS}, got {k}")
        self.k = k
        self.action_dim = 1 << k
        self.seed = seed
        self.horizon = 1
        self.state: BanditState | None = None

    def reset(self, seed: int | None = None) -> list:
        if seed is not None:
            self.seed = seed
        rng = rng_stream(self.seed, STREAM_ENV)
        # Target is drawn once per seed and fixed for the whole run.
        self.state = BanditState(int(rng.integers(0, 1 << self.k)), self.k)
        return self._observations()

    def _observations(self) -> list:
        return [np.zeros(1)]

    def step(self, joint_action) -> StepResult:
        if self.state is None:
            raise ConfigError("call reset() before step()")
        if self.state.step >= 1:
            raise ConfigError("episode already done")
        actions = list(joint_action)
        if len(actions) != 1:
            raise ActionError(f"bandit takes one action, got {len(actions)}")
        action = int(actions[0])
        if not 0 <= action < self.action_dim:
            raise ActionError(f"action {action} outside 0..{self.action_dim - 1}")
        distance = bin(action ^ self.state.target_bits).count("1")
        reward = 1.0 - distance / self.k
        self.state.step = 1
        return StepResult(self._observations(), np.array([reward]), True,
                          {"hamming_distance": distance})


ENV_KINDS = ("factory", "uav", "bandit")


def make_env(kind: str, seed: int, **constants):
    """Construct an environment by kind name with constant overrides."""
    if kind == "factory":
        return FactoryEnv(seed=seed, **constants)
    if kind == "uav":
        return UavEnv(seed=seed, **constants)
    if kind == "bandit":
        return BanditEnv(seed=seed, **constants)
    raise ConfigError(f"unknown environment kind {kind!r}")
