"""Variational quantum circuit models for actors and critic.

A circuit is: angle encoding of the (zero-padded) observation, then
``n_layers`` blocks of per-wire RX, RY, RZ rotations with trainable angles,
each block closed by a CNOT ring (control i -> target (i+1) mod n, present
for 2+ qubits). Readout is either a softmax over per-wire Z expectations or
the full basis-probability vector on a wire subset (PVM).

Encoding map: one RY per wire with angle 2*arctan(x), which squashes
arbitrary-range observation entries into (-pi, pi).

Every produced action distribution is floored: p -> (p + eps) / (1 + A*eps)
with eps = 1e-6, so log-probabilities stay finite everywhere. The floor
preserves the uniform distribution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qsim
from .errors import ConfigError, DimensionError

EPS_FLOOR = 1e-6
DEFAULT_SOFTMAX_BETA = 5.0
DEFAULT_V_SCALE = 20.0
INIT_ANGLE_SPREAD = np.pi / 100

# Up to this qubit count the parameterized block (whose angles are shared by
# every row of a batch) is collapsed into one dense right-multiply operator
# and applied with a single matmul instead of gate-by-gate kernel passes.
COMPOSE_MAX_QUBITS = 8


@dataclass(frozen=True)
class CircuitTemplate:
    """Structure of one variational network: sizes only, no parameter values.

    Default layer layout: per-wire RX, RY, RZ rotations closed by a CNOT
    ring (for 2+ qubit circuits). With ``ring_first`` each layer opens with
    the ring instead, leaving the final rotations adjacent to the readout;
    PVM policies use this variant, since a ring between the last rotations
    and a full-basis measurement turns every measured bit into a parity of
    rotation-controlled bits and flattens all first-order marginal
    gradients near the uniform policy.
    """

    n_qubits: int
    n_layers: int
    ring_first: bool = False

    def __post_init__(self):
        if not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ConfigError(f"n_qubits must be in 1..{qsim.MAX_QUBITS}, got {self.n_qubits}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")

    @property
    def encoding_slots(self) -> int:
        return self.n_qubits

    @property
    def param_slots(self) -> int:
        return self.n_layers * self.n_qubits * 3

    def _ring(self) -> list[qsim.Gate]:
        if self.n_qubits < 2:
            return []
        return [qsim.Gate.cnot(w, (w + 1) % self.n_qubits) for w in range(self.n_qubits)]

    def parameterized_gates(self, params: np.ndarray) -> list[qsim.Gate]:
        """Concrete gate sequence of the trainable part, angles from ``params``."""
        params = _check_params(self, params)
        gates = []
        j = 0
        for _ in range(self.n_layers):
            if self.ring_first:
                gates.extend(self._ring())
            for wire in range(self.n_qubits):
                gates.append(qsim.Gate.rx(wire, params[j]))
                gates.append(qsim.Gate.ry(wire, params[j + 1]))
                gates.append(qsim.Gate.rz(wire, params[j + 2]))
                j += 3
            if not self.ring_first:
                gates.extend(self._ring())
        return gates

    def gate_plan(self) -> list[tuple]:
        """Symbolic plan: ("enc", wire), ("rot", kind, wire, slot), ("cnot", c, t)."""
        plan = [("enc", w) for w in range(self.n_qubits)]
        j = 0
        ring = [("cnot", w, (w + 1) % self.n_qubits) for w in range(self.n_qubits)] \
            if self.n_qubits >= 2 else []
        for _ in range(self.n_layers):
            if self.ring_first:
                plan.extend(ring)
            for wire in range(self.n_qubits):
                for kind in qsim.ROTATION_KINDS:
                    plan.append(("rot", kind, wire, j))
                    j += 1
            if not self.ring_first:
                plan.extend(ring)
        return plan


def _check_params(template: CircuitTemplate, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (template.param_slots,):
        raise DimensionError(
            f"expected {template.param_slots} parameters, got shape {params.shape}")
    if not np.all(np.isfinite(params)):
        raise DimensionError("parameters must be finite")
    return params


def init_params(template: CircuitTemplate, rng: np.random.Generator,
                spread_first_ry: bool = False) -> np.ndarray:
    """Near-identity initialization: uniform on (-pi/100, pi/100).

    With ``spread_first_ry`` the first layer's RY slots are centered at pi/2
    instead of 0, which turns the initial PVM policy into a near-uniform
    distribution over bit patterns (exploration; a near-identity start would
    pin all probability mass on one pattern).
    """
    params = rng.uniform(-INIT_ANGLE_SPREAD, INIT_ANGLE_SPREAD, template.param_slots)
    if spread_first_ry:
        for wire in range(template.n_qubits):
            params[wire * 3 + 1] += np.pi / 2
    return params


@dataclass(frozen=True)
class ExpectationSoftmax:
    """Policy from softmax(beta * <Z_0..Z_{A-1}>). Needs action_dim <= n_qubits."""

    beta: float = DEFAULT_SOFTMAX_BETA


@dataclass(frozen=True)
class Pvm:
    """Policy from basis probabilities on a wire subset: 2**k actions from k wires."""

    wires: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))

    @classmethod
    def over_first_wires(cls, action_dim: int) -> "Pvm":
        k = int(action_dim).bit_length() - 1
        if action_dim != 1 << k or k < 1:
            raise ConfigError(f"PVM needs a power-of-two action_dim >= 2, got {action_dim}")
        return cls(tuple(range(k)))


@dataclass(frozen=True)
class ActionDistribution:
    """Floored, normalized probabilities over a discrete action set."""

    probabilities: np.ndarray
    action_dim: int

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if probs.shape != (self.action_dim,):
            raise DimensionError(f"expected {self.action_dim} probabilities, got {probs.shape}")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9 or np.any(probs < 0):
            raise ValueError(f"not a distribution: sum={total!r}, min={probs.min()!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.action_dim, p=self.probabilities))

    def log_prob(self, action: int) -> float:
        return float(np.log(self.probabilities[action]))


def floor_distribution(probs: np.ndarray) -> np.ndarray:
    """Apply the epsilon floor along the last axis and renormalize."""
    action_dim = probs.shape[-1]
    return (probs + EPS_FLOOR) / (1.0 + action_dim * EPS_FLOOR)


def encoding_angles(obs: np.ndarray, n_qubits: int) -> np.ndarray:
    """Zero-padded per-wire encoding angles 2*arctan(x) for an observation batch.

    ``obs`` has shape (B, m) with m <= n_qubits; rows longer than n_qubits
    are folded pairwise (entry m+w adds onto wire w) so a 2n-long summary
    still fits an n-wire circuit; since RY(a)RY(b) = RY(a+b) this equals
    stacking a second encoding block.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    m = obs.shape[1]
    if m > 2 * n_qubits:
        raise DimensionError(f"observation length {m} exceeds 2*{n_qubits} wires")
    if not np.all(np.isfinite(obs)):
        raise DimensionError("observation entries must be finite")
    angles = np.zeros((obs.shape[0], n_qubits))
    head = min(m, n_qubits)
    angles[:, :head] = 2.0 * np.arctan(obs[:, :head])
    if m > n_qubits:
        angles[:, : m - n_qubits] += 2.0 * np.arctan(obs[:, n_qubits:])
    return angles


def encode_observation(obs, n_qubits: int) -> list[qsim.Gate]:
    """Encoding gate sequence: one RY per wire, angle 2*arctan(obs_i)."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 1:
        raise DimensionError(f"observation must be a flat sequence, got shape {obs.shape}")
    if obs.shape[0] > n_qubits:
        raise DimensionError(f"observation length {obs.shape[0]} exceeds {n_qubits} wires")
    angles = encoding_angles(obs[None, :], n_qubits)[0]
    return [qsim.Gate.ry(w, angles[w]) for w in range(n_qubits)]


def _forward_amplitudes(template: CircuitTemplate, enc_angles: np.ndarray,
                        rot_angles: np.ndarray) -> np.ndarray:
    """Batched statevectors for encoding + parameterized layers.

    enc_angles: (B, n_qubits); rot_angles: (B, param_slots).
    """
    n = template.n_qubits
    batch = enc_angles.shape[0]
    amps = qsim._zero_batch(batch, n)
    scratch = np.empty_like(amps)
    src, dst = amps, scratch
    for op in template.gate_plan():
        if op[0] == "enc":
            qsim._apply_rotation_batch(src, dst, n, op[1], "ry", enc_angles[:, op[1]])
        elif op[0] == "rot":
            qsim._apply_rotation_batch(src, dst, n, op[2], op[1], rot_angles[:, op[3]])
        else:
            qsim._apply_cnot_batch(src, dst, n, op[1], op[2])
        src, dst = dst, src
    qsim._note_runs(batch)
    return src


def _encoded_amplitudes(template: CircuitTemplate, enc_angles: np.ndarray) -> np.ndarray:
    """Statevectors right after the encoding rotations."""
    n = template.n_qubits
    amps = qsim._zero_batch(enc_angles.shape[0], n)
    scratch = np.empty_like(amps)
    src, dst = amps, scratch
    for wire in range(n):
        qsim._apply_rotation_batch(src, dst, n, wire, "ry", enc_angles[:, wire])
        src, dst = dst, src
    return src


def gate_operator(gate: qsim.Gate, n_qubits: int) -> np.ndarray:
    """Dense right-multiply operator of one gate, derived from the batched
    kernels by applying them to the identity (rows as states): for a row
    batch ``amps``, ``amps @ gate_operator(g, n)`` equals applying ``g``."""
    dim = 1 << n_qubits
    eye = np.eye(dim, dtype=np.complex128)
    out = np.empty_like(eye)
    if gate.kind == "cnot":
        qsim._apply_cnot_batch(eye, out, n_qubits, gate.control, gate.target)
    else:
        qsim._apply_rotation_batch(eye, out, n_qubits, gate.target, gate.kind,
                                   np.full(dim, gate.angle))
    return out


@lru_cache(maxsize=256)
def _param_block_operator_cached(template: CircuitTemplate, params_bytes: bytes) -> np.ndarray:
    params = np.frombuffer(params_bytes)
    n = template.n_qubits
    dim = 1 << n
    src = np.eye(dim, dtype=np.complex128)
    dst = np.empty_like(src)
    for gate in template.parameterized_gates(params):
        if gate.kind == "cnot":
            qsim._apply_cnot_batch(src, dst, n, gate.control, gate.target)
        else:
            qsim._apply_rotation_batch(src, dst, n, gate.target, gate.kind,
                                       np.full(dim, gate.angle))
        src, dst = dst, src
    src.setflags(write=False)
    return src


def _param_block_operator(template: CircuitTemplate, params: np.ndarray) -> np.ndarray:
    return _param_block_operator_cached(template, np.ascontiguousarray(params).tobytes())


def _forward_amplitudes_shared(template: CircuitTemplate, enc_angles: np.ndarray,
                               params: np.ndarray) -> np.ndarray:
    """Forward pass where every row shares the same parameter values."""
    if template.n_qubits > COMPOSE_MAX_QUBITS:
        rot = _broadcast_params(params, enc_angles.shape[0])
        return _forward_amplitudes(template, enc_angles, rot)
    amps = _encoded_amplitudes(template, enc_angles) @ _param_block_operator(template, params)
    qsim._note_runs(enc_angles.shape[0])
    return amps


def _broadcast_params(params: np.ndarray, batch: int) -> np.ndarray:
    return np.broadcast_to(params, (batch, params.shape[0]))


def _readout_wires(readout, template: CircuitTemplate, action_dim: int) -> tuple[int, ...]:
    """Validate readout/action_dim consistency; return PVM wires if applicable."""
    if isinstance(readout, ExpectationSoftmax):
        if action_dim > template.n_qubits:
            raise ConfigError(
                f"softmax readout needs action_dim <= n_qubits, got {action_dim} > {template.n_qubits}")
        return ()
    if isinstance(readout, Pvm):
        wires = readout.wires
        if len(set(wires)) != len(wires) or not wires:
            raise ConfigError(f"PVM wire subset must be non-empty and duplicate-free: {wires}")
        if any(not 0 <= w < template.n_qubits for w in wires):
            raise ConfigError(f"PVM wires {wires} invalid for {template.n_qubits} qubits")
        if action_dim != 1 << len(wires):
            raise ConfigError(
                f"PVM with {len(wires)} wires yields {1 << len(wires)} actions, not {action_dim}")
        return wires
    raise ConfigError(f"unknown readout mode {readout!r}")


def policy_probs_batch(template: CircuitTemplate, params: np.ndarray,
                       obs_batch: np.ndarray, readout, action_dim: int) -> np.ndarray:
    """Floored action probabilities for a batch of observations, shape (B, A)."""
    params = _check_params(template, params)
    wires = _readout_wires(readout, template, action_dim)
    obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=float))
    if obs_batch.shape[1] > template.n_qubits:
        raise DimensionError(
            f"actor observation length {obs_batch.shape[1]} exceeds {template.n_qubits} wires")
    if obs_batch.shape[0] > 1:
        # Identical observations share one evaluation (pure function).
        unique, inverse = np.unique(obs_batch, axis=0, return_inverse=True)
        if unique.shape[0] < obs_batch.shape[0]:
            return policy_probs_batch(template, params, unique, readout, action_dim)[inverse]
    enc = encoding_angles(obs_batch, template.n_qubits)
    amps = _forward_amplitudes_shared(template, enc, params)
    if isinstance(readout, ExpectationSoftmax):
        z = np.stack([qsim._z_expectation_batch(amps, template.n_qubits, w)
                      for w in range(action_dim)], axis=1)
        return floor_distribution(softmax(readout.beta * z))
    probs = qsim._basis_probs_batch(amps, template.n_qubits, wires)
    return floor_distribution(probs)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def actor_forward(template: CircuitTemplate, params: np.ndarray, obs,
                  readout, action_dim: int) -> ActionDistribution:
    """Run encode -> layers -> readout for one observation."""
    obs = np.asarray(obs, dtype=float)
    probs = policy_probs_batch(template, params, obs[None, :], readout, action_dim)[0]
    return ActionDistribution(probs, action_dim)


def critic_values_batch(template: CircuitTemplate, params: np.ndarray,
                        summaries: np.ndarray, v_scale: float) -> np.ndarray:
    """Batched critic outputs v_scale * <Z_0>, shape (B,)."""
    params = _check_params(template, params)
    enc = encoding_angles(summaries, template.n_qubits)
    amps = _forward_amplitudes_shared(template, enc, params)
    return v_scale * qsim._z_expectation_batch(amps, template.n_qubits, 0)


def critic_forward(template: CircuitTemplate, params: np.ndarray, joint_summary,
                   v_scale: float = DEFAULT_V_SCALE) -> float:
    """Scalar value estimate from the encoded joint summary; |v| <= v_scale."""
    summary = np.asarray(joint_summary, dtype=float)
    return float(critic_values_batch(template, params, summary[None, :], v_scale)[0])


def joint_summary(observations) -> np.ndarray:
    """Agent-count-independent critic input: element-wise mean ++ element-wise max."""
    rows = [np.asarray(o, dtype=float) for o in observations]
    if not rows:
        raise DimensionError("need at least one agent observation")
    length = rows[0].shape
    if any(r.shape != length for r in rows):
        raise DimensionError(f"ragged observation lengths: {[r.shape for r in rows]}")
    stacked = np.stack(rows)
    return np.concatenate([stacked.mean(axis=0), stacked.max(axis=0)])


def param_count(template: CircuitTemplate) -> int:
    """Trainable rotation-angle count of one network."""
    return template.param_slots
