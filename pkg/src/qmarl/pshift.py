"""Gradient engine for the variational networks.

Rotation gates here are generated by half-weight Pauli operators, so the
two-point parameter-shift rule is exact with shift pi/2 and prefactor 1/2:

    df/dtheta_j = [f(theta_j + pi/2) - f(theta_j - pi/2)] / 2

for any readout f that is an observable expectation, which covers both the
Z expectations and each basis probability (a projector expectation). Loss
gradients are assembled from these per-parameter derivatives by the chain
rule. All shifted evaluations for one observation run as a single batched
pass; identical observations in a batch share their shifted evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim, vqc
from .errors import BatchError, ConfigError, DataError, DimensionError

HALF_PI = np.pi / 2

# Cap on complex entries held by one batched evaluation (~128 MB); larger
# gradient batches are processed in group chunks.
_MAX_BATCH_COMPLEX = 8_000_000


@dataclass(frozen=True)
class ZReadout:
    """Scalar readout <Z_wire>."""

    wire: int


@dataclass(frozen=True)
class ProbabilityReadout:
    """Scalar readout: one basis-pattern probability on a wire subset."""

    wires: tuple[int, ...]
    index: int


def _readout_values(amps: np.ndarray, n: int, component) -> np.ndarray:
    if isinstance(component, ZReadout):
        if not 0 <= component.wire < n:
            raise ConfigError(f"readout wire {component.wire} invalid for {n} qubits")
        return qsim._z_expectation_batch(amps, n, component.wire)
    if isinstance(component, ProbabilityReadout):
        wires = tuple(component.wires)
        if not wires or any(not 0 <= w < n for w in wires) or len(set(wires)) != len(wires):
            raise ConfigError(f"readout wires {wires} invalid for {n} qubits")
        if not 0 <= component.index < (1 << len(wires)):
            raise ConfigError(f"pattern index {component.index} out of range for {wires}")
        return qsim._basis_probs_batch(amps, n, wires)[:, component.index]
    raise ConfigError(f"unknown readout component {component!r}")


def _shift_rows(params: np.ndarray, delta: float) -> np.ndarray:
    """(2P, P) parameter rows: row 2j has theta_j + delta, row 2j+1 theta_j - delta."""
    n_params = params.shape[0]
    rows = np.repeat(params[None, :], 2 * n_params, axis=0)
    idx = np.arange(n_params)
    rows[2 * idx, idx] += delta
    rows[2 * idx + 1, idx] -= delta
    return rows


def shift_gradient(template: vqc.CircuitTemplate, params: np.ndarray, obs,
                   readout_component, shift: float = HALF_PI) -> np.ndarray:
    """Parameter-shift gradient of a scalar readout; exactly 2*param_slots runs.

    ``shift`` exists as a test hook (gradcheck's negative control corrupts it);
    leave it at pi/2 for correct derivatives.
    """
    params = vqc._check_params(template, params)
    obs = np.asarray(obs, dtype=float)
    enc = vqc.encoding_angles(obs[None, :], template.n_qubits)
    rot = _shift_rows(params, shift)
    enc_rows = np.repeat(enc, rot.shape[0], axis=0)
    amps = vqc._forward_amplitudes(template, enc_rows, rot)
    values = _readout_values(amps, template.n_qubits, readout_component)
    return (values[0::2] - values[1::2]) / 2.0


def finite_difference_oracle(template: vqc.CircuitTemplate, params: np.ndarray, obs,
                             readout_component, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient, the independent cross-check for the shift rule."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    params = vqc._check_params(template, params)
    obs = np.asarray(obs, dtype=float)
    enc = vqc.encoding_angles(obs[None, :], template.n_qubits)
    rot = _shift_rows(params, h)
    enc_rows = np.repeat(enc, rot.shape[0], axis=0)
    amps = vqc._forward_amplitudes(template, enc_rows, rot)
    values = _readout_values(amps, template.n_qubits, readout_component)
    return (values[0::2] - values[1::2]) / (2.0 * h)


# ---------------------------------------------------------------------------
# Loss batches.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActorBatch:
    """Transitions with precomputed advantages for one actor."""

    observations: np.ndarray   # (N, m)
    actions: np.ndarray        # (N,)
    advantages: np.ndarray     # (N,)
    action_dim: int

    def __post_init__(self):
        obs = np.atleast_2d(np.asarray(self.observations, dtype=float))
        actions = np.asarray(self.actions, dtype=int)
        adv = np.asarray(self.advantages, dtype=float)
        if obs.shape[0] == 0:
            raise BatchError("empty actor batch")
        if actions.shape != (obs.shape[0],) or adv.shape != (obs.shape[0],):
            raise BatchError(
                f"batch shape mismatch: obs {obs.shape}, actions {actions.shape}, adv {adv.shape}")
        if not np.all(np.isfinite(adv)):
            raise DataError("non-finite advantage in batch")
        if np.any(actions < 0) or np.any(actions >= self.action_dim):
            raise DataError("action outside [0, action_dim)")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "advantages", adv)


@dataclass(frozen=True)
class CriticBatch:
    """(joint summary, return target) pairs for the critic."""

    summaries: np.ndarray   # (N, m)
    targets: np.ndarray     # (N,)

    def __post_init__(self):
        summaries = np.atleast_2d(np.asarray(self.summaries, dtype=float))
        targets = np.asarray(self.targets, dtype=float)
        if summaries.shape[0] == 0:
            raise BatchError("empty critic batch")
        if targets.shape != (summaries.shape[0],):
            raise BatchError(
                f"batch shape mismatch: summaries {summaries.shape}, targets {targets.shape}")
        if not np.all(np.isfinite(targets)):
            raise DataError("non-finite return target in batch")
        object.__setattr__(self, "summaries", summaries)
        object.__setattr__(self, "targets", targets)


def _group_chunks(n_groups: int, rows_per_group: int, dim: int):
    per_chunk = max(1, _MAX_BATCH_COMPLEX // (rows_per_group * dim))
    for start in range(0, n_groups, per_chunk):
        yield start, min(n_groups, start + per_chunk)


def _shifted_amplitudes_composed(template: vqc.CircuitTemplate, params: np.ndarray,
                                 enc_angles: np.ndarray, shift: float) -> np.ndarray:
    """All (2P+1) parameter-setting evaluations per observation, sharing the
    encoding/prefix states and composing each suffix into a dense operator.

    Row layout per group: [base, +shift_0, -shift_0, +shift_1, ...] — the
    same order as evaluating each setting as its own circuit, and the same
    values up to float round-off.
    """
    n = template.n_qubits
    dim = 1 << n
    n_params = params.shape[0]
    count = enc_angles.shape[0]
    gates = template.parameterized_gates(params)
    rot_positions = [i for i, g in enumerate(gates) if g.kind != "cnot"]
    # Right-multiply operator of the suffix after each gate position.
    suffix = [None] * (len(gates) + 1)
    suffix[len(gates)] = np.eye(dim, dtype=np.complex128)
    for i in range(len(gates) - 1, -1, -1):
        suffix[i] = vqc.gate_operator(gates[i], n) @ suffix[i + 1]

    state = vqc._encoded_amplitudes(template, enc_angles)
    scratch = np.empty_like(state)
    out = np.empty((count, 2 * n_params + 1, dim), dtype=np.complex128)
    first_rot = rot_positions[0] if rot_positions else len(gates)
    for i in range(first_rot):
        qsim._apply_cnot_batch(state, scratch, n, gates[i].control, gates[i].target)
        state, scratch = scratch, state
    for slot, pos in enumerate(rot_positions):
        gate = gates[pos]
        for sign, row in ((1.0, 1 + 2 * slot), (-1.0, 2 + 2 * slot)):
            qsim._apply_rotation_batch(state, scratch, n, gate.target, gate.kind,
                                       np.full(count, gate.angle + sign * shift))
            np.matmul(scratch, suffix[pos + 1], out=out[:, row, :])
        qsim._apply_rotation_batch(state, scratch, n, gate.target, gate.kind,
                                   np.full(count, gate.angle))
        state, scratch = scratch, state
        # Apply any entangling gates sitting between this slot and the next.
        nxt = rot_positions[slot + 1] if slot + 1 < n_params else len(gates)
        for i in range(pos + 1, nxt):
            qsim._apply_cnot_batch(state, scratch, n, gates[i].control, gates[i].target)
            state, scratch = scratch, state
    out[:, 0, :] = state
    qsim._note_runs(count * (2 * n_params + 1))
    return out.reshape(count * (2 * n_params + 1), dim)


def _grouped_eval(template: vqc.CircuitTemplate, params: np.ndarray,
                  unique_obs: np.ndarray, shift: float):
    """Yield (group slice, value rows) where each group contributes 1 unshifted
    row followed by 2*P shift rows; values is the raw amplitude batch."""
    n_params = params.shape[0]
    rows_per_group = 2 * n_params + 1
    enc_all = vqc.encoding_angles(unique_obs, template.n_qubits)
    compose = template.n_qubits <= vqc.COMPOSE_MAX_QUBITS
    rot_block = None if compose else np.vstack([params[None, :], _shift_rows(params, shift)])
    for start, stop in _group_chunks(unique_obs.shape[0], rows_per_group,
                                     1 << template.n_qubits):
        count = stop - start
        if compose:
            amps = _shifted_amplitudes_composed(template, params, enc_all[start:stop], shift)
        else:
            enc_rows = np.repeat(enc_all[start:stop], rows_per_group, axis=0)
            rot_rows = np.tile(rot_block, (count, 1))
            amps = vqc._forward_amplitudes(template, enc_rows, rot_rows)
        yield start, stop, rows_per_group, amps


def actor_loss(batch: ActorBatch, template: vqc.CircuitTemplate, params: np.ndarray,
               readout) -> float:
    """-mean(log pi(a_t|s_t) * A_t) without gradients (finite-difference helper)."""
    probs = vqc.policy_probs_batch(template, params, batch.observations, readout,
                                   batch.action_dim)
    picked = probs[np.arange(len(batch.actions)), batch.actions]
    return float(-np.mean(np.log(picked) * batch.advantages))


def _actor_grads(batch: ActorBatch, template: vqc.CircuitTemplate, params: np.ndarray,
                 readout, shift: float = HALF_PI):
    """Loss, parameter gradient, and (softmax only) readout-scale gradient."""
    params = vqc._check_params(template, params)
    wires = vqc._readout_wires(readout, template, batch.action_dim)
    n = template.n_qubits
    n_params = params.shape[0]
    n_records = batch.observations.shape[0]
    action_dim = batch.action_dim
    floor_scale = 1.0 / (1.0 + action_dim * vqc.EPS_FLOOR)

    unique_obs, inverse = np.unique(batch.observations, axis=0, return_inverse=True)
    loss_sum = 0.0
    grad_sum = np.zeros(n_params)
    beta_grad_sum = 0.0
    for start, stop, rows_per_group, amps in _grouped_eval(template, params, unique_obs, shift):
        in_chunk = (inverse >= start) & (inverse < stop)
        if not np.any(in_chunk):
            continue
        rec_group = inverse[in_chunk] - start
        rec_action = batch.actions[in_chunk]
        rec_adv = batch.advantages[in_chunk]
        if isinstance(readout, vqc.ExpectationSoftmax):
            z = np.stack([qsim._z_expectation_batch(amps, n, w) for w in range(action_dim)],
                         axis=1)
            z = z.reshape(stop - start, rows_per_group, action_dim)
            z0 = z[:, 0, :]
            jac_z = (z[:, 1::2, :] - z[:, 2::2, :]) / 2.0        # (g, P, A)
            sigma = vqc.softmax(readout.beta * z0)               # (g, A)
            pi = vqc.floor_distribution(sigma)
            jz_dot_sigma = np.einsum("gpa,ga->gp", jac_z, sigma)
            sig_a = sigma[rec_group, rec_action]
            pi_a = pi[rec_group, rec_action]
            jz_a = jac_z[rec_group, :, rec_action]               # (N, P)
            dpi = (readout.beta * floor_scale) * sig_a[:, None] * (
                jz_a - jz_dot_sigma[rec_group])
            z0_dot_sigma = np.einsum("ga,ga->g", z0, sigma)
            dpi_dbeta = floor_scale * sig_a * (
                z0[rec_group, rec_action] - z0_dot_sigma[rec_group])
            beta_grad_sum += -np.sum((rec_adv / pi_a) * dpi_dbeta)
        else:
            probs = qsim._basis_probs_batch(amps, n, wires)
            probs = probs.reshape(stop - start, rows_per_group, action_dim)
            pi = vqc.floor_distribution(probs[:, 0, :])
            pi_a = pi[rec_group, rec_action]
            p_plus = probs[rec_group, 1::2, rec_action]          # (N, P)
            p_minus = probs[rec_group, 2::2, rec_action]
            dpi = floor_scale * (p_plus - p_minus) / 2.0
        loss_sum += -np.sum(np.log(pi_a) * rec_adv)
        grad_sum += -(rec_adv / pi_a) @ dpi
    loss = loss_sum / n_records
    grad = grad_sum / n_records
    beta_grad = beta_grad_sum / n_records if isinstance(readout, vqc.ExpectationSoftmax) else None
    return loss, grad, beta_grad


def actor_loss_gradient(batch: ActorBatch, template: vqc.CircuitTemplate,
                        params: np.ndarray, readout) -> tuple[float, np.ndarray]:
    """Policy-gradient loss and its parameter-shift gradient.

    loss = -mean(log pi(a_t|s_t) * A_t); the gradient chains the shift-rule
    derivative of each touched probability component.
    """
    loss, grad, _ = _actor_grads(batch, template, params, readout)
    return loss, grad


def critic_loss(batch: CriticBatch, template: vqc.CircuitTemplate, params: np.ndarray,
                v_scale: float) -> float:
    """Mean squared error of critic outputs against return targets."""
    values = vqc.critic_values_batch(template, params, batch.summaries, v_scale)
    return float(np.mean((values - batch.targets) ** 2))


def _critic_grads(batch: CriticBatch, template: vqc.CircuitTemplate, params: np.ndarray,
                  v_scale: float, shift: float = HALF_PI):
    """Loss, parameter gradient, and output-scale gradient."""
    params = vqc._check_params(template, params)
    n = template.n_qubits
    unique_sum, inverse = np.unique(batch.summaries, axis=0, return_inverse=True)
    n_records = batch.summaries.shape[0]
    loss_sum = 0.0
    grad_sum = np.zeros(params.shape[0])
    scale_grad_sum = 0.0
    for start, stop, rows_per_group, amps in _grouped_eval(template, params, unique_sum, shift):
        in_chunk = (inverse >= start) & (inverse < stop)
        if not np.any(in_chunk):
            continue
        rec_group = inverse[in_chunk] - start
        z = qsim._z_expectation_batch(amps, n, 0).reshape(stop - start, rows_per_group)
        z0 = z[:, 0]
        jac_z = (z[:, 1::2] - z[:, 2::2]) / 2.0                  # (g, P)
        residual = v_scale * z0[rec_group] - batch.targets[in_chunk]
        loss_sum += np.sum(residual ** 2)
        grad_sum += (2.0 * v_scale * residual) @ jac_z[rec_group]
        scale_grad_sum += np.sum(2.0 * residual * z0[rec_group])
    return loss_sum / n_records, grad_sum / n_records, scale_grad_sum / n_records


def critic_loss_gradient(batch: CriticBatch, template: vqc.CircuitTemplate,
                         params: np.ndarray, v_scale: float = vqc.DEFAULT_V_SCALE
                         ) -> tuple[float, np.ndarray]:
    """MSE loss and its parameter-shift gradient through <Z_0>."""
    loss, grad, _ = _critic_grads(batch, template, params, v_scale)
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer: adaptive moments with bias correction.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerState:
    learning_rate: float
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8


def fresh_optimizer(n_params: int, learning_rate: float) -> OptimizerState:
    if learning_rate <= 0:
        raise ConfigError(f"learning rate must be positive, got {learning_rate}")
    return OptimizerState(learning_rate, np.zeros(n_params), np.zeros(n_params))


def optimizer_step(params: np.ndarray, grad: np.ndarray,
                   state: OptimizerState) -> tuple[np.ndarray, OptimizerState]:
    """One bias-corrected adaptive-moment update; returns new (params, state)."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise DimensionError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, "
            f"moments {state.first_moment.shape}")
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grad ** 2
    m_hat = m / (1 - state.beta1 ** step)
    v_hat = v / (1 - state.beta2 ** step)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps_opt)
    new_state = OptimizerState(state.learning_rate, m, v, step,
                               state.beta1, state.beta2, state.eps_opt)
    return new_params, new_state
