"""Variational-circuit model tests: encoding, readouts, summaries, budgets."""

import math

import numpy as np
import pytest

from qmarl import qsim, vqc
from qmarl.errors import ConfigError, DimensionError


def manual_policy(template, params, obs, readout, action_dim):
    """Reference actor forward composed gate-by-gate through the public qsim ops."""
    gates = vqc.encode_observation(obs, template.n_qubits) + \
        list(template.parameterized_gates(params))
    state = qsim.run_circuit(qsim.zero_state(template.n_qubits), gates)
    if isinstance(readout, vqc.ExpectationSoftmax):
        z = np.array([qsim.expectation_z(state, w) for w in range(action_dim)])
        return vqc.floor_distribution(vqc.softmax(readout.beta * z))
    return vqc.floor_distribution(qsim.basis_probabilities(state, readout.wires))


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

def test_template_slot_counts():
    t = vqc.CircuitTemplate(4, 3)
    assert t.param_slots == 36
    assert t.encoding_slots == 4
    assert vqc.param_count(t) == 36
    assert vqc.param_count(vqc.CircuitTemplate(1, 1)) == 3


def test_template_layers_end_with_cnot_ring():
    t = vqc.CircuitTemplate(3, 2)
    gates = t.parameterized_gates(np.zeros(18))
    per_layer = len(gates) // 2
    for layer in range(2):
        ring = gates[(layer + 1) * per_layer - 3:(layer + 1) * per_layer]
        assert [(g.kind, g.control, g.target) for g in ring] == \
            [("cnot", 0, 1), ("cnot", 1, 2), ("cnot", 2, 0)]


def test_single_qubit_template_has_no_ring():
    gates = vqc.CircuitTemplate(1, 2).parameterized_gates(np.zeros(6))
    assert all(g.kind != "cnot" for g in gates)


def test_template_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        vqc.CircuitTemplate(0, 1)
    with pytest.raises(ConfigError):
        vqc.CircuitTemplate(2, 0)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def test_encode_zero_observation_is_identity_rotation():
    gates = vqc.encode_observation([0.0, 0.0], 2)
    assert [g.kind for g in gates] == ["ry", "ry"]
    assert all(g.angle == 0.0 for g in gates)


def test_encode_unit_value_gives_half_pi():
    gates = vqc.encode_observation([1.0], 1)
    assert gates[0].angle == pytest.approx(np.pi / 2)


def test_encode_pads_short_observations():
    gates = vqc.encode_observation([0.3, -0.7], 4)
    assert len(gates) == 4
    assert gates[0].angle == pytest.approx(2 * math.atan(0.3))
    assert gates[1].angle == pytest.approx(2 * math.atan(-0.7))
    assert gates[2].angle == 0.0
    assert gates[3].angle == 0.0


def test_encode_rejects_long_observation():
    with pytest.raises(DimensionError):
        vqc.encode_observation([1, 2, 3], 2)
    with pytest.raises(DimensionError):
        vqc.encode_observation([np.inf], 2)


# ---------------------------------------------------------------------------
# actor_forward
# ---------------------------------------------------------------------------

def test_identity_circuit_pvm_concentrates_on_zero_pattern():
    t = vqc.CircuitTemplate(2, 1)
    dist = vqc.actor_forward(t, np.zeros(6), [0.0, 0.0], vqc.Pvm((0, 1)), 4)
    eps = vqc.EPS_FLOOR
    assert dist.probabilities[0] == pytest.approx((1 + eps) / (1 + 4 * eps))
    assert np.allclose(dist.probabilities[1:], eps / (1 + 4 * eps))


def test_softmax_beta_zero_is_uniform():
    t = vqc.CircuitTemplate(3, 2)
    rng = np.random.default_rng(0)
    dist = vqc.actor_forward(t, rng.uniform(-1, 1, t.param_slots), [0.4, -0.2],
                             vqc.ExpectationSoftmax(beta=0.0), 3)
    assert np.allclose(dist.probabilities, 1 / 3)


@pytest.mark.parametrize("readout,action_dim", [
    (vqc.Pvm((0, 1, 2, 3)), 16),
    (vqc.Pvm((2, 0)), 4),
    (vqc.ExpectationSoftmax(2.5), 4),
])
def test_actor_forward_matches_manual_composition(readout, action_dim):
    rng = np.random.default_rng(31)
    t = vqc.CircuitTemplate(4, 2)
    params = rng.uniform(-np.pi, np.pi, t.param_slots)
    obs = rng.normal(0, 1, 4)
    dist = vqc.actor_forward(t, params, obs, readout, action_dim)
    expected = manual_policy(t, params, obs, readout, action_dim)
    assert np.max(np.abs(dist.probabilities - expected)) < 1e-10


def test_actor_forward_rejects_inconsistent_readout():
    t = vqc.CircuitTemplate(2, 1)
    with pytest.raises(ConfigError):
        vqc.actor_forward(t, np.zeros(6), [0.0], vqc.ExpectationSoftmax(), 3)
    with pytest.raises(ConfigError):
        vqc.actor_forward(t, np.zeros(6), [0.0], vqc.Pvm((0,)), 4)
    with pytest.raises(ConfigError):
        vqc.actor_forward(t, np.zeros(6), [0.0], vqc.Pvm((0, 5)), 4)


def test_distribution_validity_over_random_inputs():
    rng = np.random.default_rng(5)
    t = vqc.CircuitTemplate(3, 1)
    floor = vqc.EPS_FLOOR
    for _ in range(1000):
        params = rng.uniform(-np.pi, np.pi, t.param_slots)
        obs = rng.normal(0, 2, int(rng.integers(0, 4)))
        if rng.random() < 0.5:
            dist = vqc.actor_forward(t, params, obs, vqc.Pvm((0, 1, 2)), 8)
            bound = floor / (1 + 8 * floor)
        else:
            dist = vqc.actor_forward(t, params, obs, vqc.ExpectationSoftmax(5.0), 3)
            bound = floor / (1 + 3 * floor)
        assert abs(dist.probabilities.sum() - 1.0) <= 1e-9
        assert np.all(dist.probabilities >= bound * (1 - 1e-12))


def test_actor_forward_deterministic():
    t = vqc.CircuitTemplate(3, 2)
    rng = np.random.default_rng(8)
    params = rng.uniform(-1, 1, t.param_slots)
    obs = rng.normal(0, 1, 3)
    a = vqc.actor_forward(t, params, obs, vqc.Pvm((0, 1)), 4).probabilities
    b = vqc.actor_forward(t, params, obs, vqc.Pvm((0, 1)), 4).probabilities
    assert np.array_equal(a, b)


def test_batched_policy_matches_single_rows():
    rng = np.random.default_rng(12)
    t = vqc.CircuitTemplate(3, 2)
    params = rng.uniform(-np.pi, np.pi, t.param_slots)
    rows = rng.normal(0, 1, (6, 3))
    rows[3] = rows[0]  # duplicate row exercises the dedupe path
    batch = vqc.policy_probs_batch(t, params, rows, vqc.ExpectationSoftmax(3.0), 3)
    for i, row in enumerate(rows):
        single = vqc.actor_forward(t, params, row, vqc.ExpectationSoftmax(3.0), 3)
        assert np.max(np.abs(batch[i] - single.probabilities)) < 1e-12


def test_action_distribution_sampling_and_log_prob():
    dist = vqc.ActionDistribution(np.array([0.25, 0.75]), 2)
    rng = np.random.default_rng(4)
    draws = [dist.sample(rng) for _ in range(2000)]
    assert abs(np.mean(draws) - 0.75) < 0.05
    assert dist.log_prob(1) == pytest.approx(math.log(0.75))


# ---------------------------------------------------------------------------
# critic_forward
# ---------------------------------------------------------------------------

def test_critic_identity_circuit_outputs_v_scale():
    t = vqc.CircuitTemplate(3, 1)
    assert vqc.critic_forward(t, np.zeros(9), [0, 0, 0], v_scale=20.0) == pytest.approx(20.0)


def test_critic_bounded_by_v_scale():
    rng = np.random.default_rng(6)
    t = vqc.CircuitTemplate(3, 2)
    for _ in range(200):
        value = vqc.critic_forward(t, rng.uniform(-np.pi, np.pi, t.param_slots),
                                   rng.normal(0, 3, 3), v_scale=20.0)
        assert abs(value) <= 20.0 + 1e-9


def test_critic_matches_manual_composition():
    rng = np.random.default_rng(14)
    t = vqc.CircuitTemplate(4, 2)
    params = rng.uniform(-np.pi, np.pi, t.param_slots)
    summary = rng.normal(0, 1, 4)
    gates = vqc.encode_observation(summary, 4) + list(t.parameterized_gates(params))
    state = qsim.run_circuit(qsim.zero_state(4), gates)
    expected = 20.0 * qsim.expectation_z(state, 0)
    assert vqc.critic_forward(t, params, summary, v_scale=20.0) == pytest.approx(
        expected, abs=1e-10)


def test_critic_folds_long_summary_as_stacked_encoding():
    # A summary longer than the wire count folds pairwise: wire w carries
    # RY(2 atan s_w) then RY(2 atan s_{w+n}), i.e. one RY with summed angles.
    rng = np.random.default_rng(15)
    t = vqc.CircuitTemplate(4, 2)
    params = rng.uniform(-np.pi, np.pi, t.param_slots)
    summary = rng.normal(0, 1, 8)
    angles = 2 * np.arctan(summary[:4]) + 2 * np.arctan(summary[4:])
    gates = [qsim.Gate.ry(w, angles[w]) for w in range(4)] + \
        list(t.parameterized_gates(params))
    state = qsim.run_circuit(qsim.zero_state(4), gates)
    expected = 20.0 * qsim.expectation_z(state, 0)
    assert vqc.critic_forward(t, params, summary, v_scale=20.0) == pytest.approx(
        expected, abs=1e-10)


def test_critic_rejects_oversized_summary():
    t = vqc.CircuitTemplate(2, 1)
    with pytest.raises(DimensionError):
        vqc.critic_forward(t, np.zeros(6), [0.1] * 5)


# ---------------------------------------------------------------------------
# joint_summary
# ---------------------------------------------------------------------------

def test_joint_summary_single_agent():
    assert np.allclose(vqc.joint_summary([[1, 2]]), [1, 2, 1, 2])


def test_joint_summary_two_agents():
    assert np.allclose(vqc.joint_summary([[0, 0], [2, 4]]), [1, 2, 2, 4])


def test_joint_summary_identical_agents_matches_single():
    obs = np.array([0.3, -0.8, 1.5])
    assert np.allclose(vqc.joint_summary([obs] * 10), vqc.joint_summary([obs]))


@pytest.mark.parametrize("n_agents", [1, 2, 5, 17, 32])
def test_joint_summary_length_independent_of_agent_count(n_agents):
    rng = np.random.default_rng(n_agents)
    obs = [rng.normal(0, 1, 4) for _ in range(n_agents)]
    assert vqc.joint_summary(obs).shape == (8,)


def test_joint_summary_rejects_ragged():
    with pytest.raises(DimensionError):
        vqc.joint_summary([[1, 2], [1, 2, 3]])
    with pytest.raises(DimensionError):
        vqc.joint_summary([])


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_init_params_near_identity():
    rng = np.random.default_rng(0)
    t = vqc.CircuitTemplate(4, 3)
    params = vqc.init_params(t, rng)
    assert params.shape == (36,)
    assert np.max(np.abs(params)) <= np.pi / 100


def test_init_params_pvm_spread_gives_near_uniform_policy():
    rng = np.random.default_rng(0)
    t = vqc.CircuitTemplate(4, 1)
    params = vqc.init_params(t, rng, spread_first_ry=True)
    dist = vqc.actor_forward(t, params, [0.0], vqc.Pvm((0, 1, 2, 3)), 16)
    assert np.all(dist.probabilities > 0.02)
    assert np.all(dist.probabilities < 0.12)
