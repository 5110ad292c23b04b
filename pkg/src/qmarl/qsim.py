"""Exact statevector simulation of few-qubit circuits.

Gate set is {RX, RY, RZ, CNOT}. Basis ordering convention, used everywhere
in this package: basis index k encodes wire 0 as the MOST significant bit,
so for n qubits the bit of wire w in index k is ``(k >> (n - 1 - w)) & 1``.

All public operations are pure: states are immutable once constructed and
every operation returns a new value. A module-level counter tallies circuit
executions (one per ``run_circuit`` call, one per row of a batched
evaluation) so tests can assert evaluation-count contracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import SizeError, WireError

MAX_QUBITS = 16

# Below this many amplitudes per batch the plain numpy kernels win (the
# compiled kernels' call overhead dominates on tiny arrays).
_FUSED_KERNEL_MIN_ELEMENTS = 1 << 18

ROTATION_KINDS = ("rx", "ry", "rz")
GATE_KINDS = ROTATION_KINDS + ("cnot",)

# Total circuit executions since import. Tests snapshot this around an
# operation to check how many runs it performed.
_CIRCUIT_RUNS = 0


def circuit_run_count() -> int:
    """Total circuit executions performed so far (instrumentation hook)."""
    return _CIRCUIT_RUNS


def _note_runs(count: int) -> None:
    global _CIRCUIT_RUNS
    _CIRCUIT_RUNS += count


@dataclass(frozen=True)
class Gate:
    """One gate of the supported set.

    Rotations carry an ``angle`` (radians) and no control; CNOT carries a
    ``control`` and no angle.
    """

    kind: str
    target: int
    control: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "cnot":
            if self.control is None:
                raise ValueError("cnot requires a control wire")
            if self.control == self.target:
                raise WireError("cnot control and target must differ")
            if self.angle is not None:
                raise ValueError("cnot takes no angle")
        else:
            if self.angle is None:
                raise ValueError(f"{self.kind} requires an angle")
            if self.control is not None:
                raise ValueError("rotations take no control wire")
            if not math.isfinite(self.angle):
                raise ValueError("rotation angle must be finite")

    @classmethod
    def rx(cls, target: int, angle: float) -> "Gate":
        return cls("rx", target, angle=float(angle))

    @classmethod
    def ry(cls, target: int, angle: float) -> "Gate":
        return cls("ry", target, angle=float(angle))

    @classmethod
    def rz(cls, target: int, angle: float) -> "Gate":
        return cls("rz", target, angle=float(angle))

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls("cnot", target, control=control)

    @property
    def wires(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)


@dataclass(frozen=True)
class StateVector:
    """Normalized amplitudes over the 2**n_qubits computational basis."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise SizeError(f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True)
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError(f"expected {1 << self.n_qubits} amplitudes, got shape {amps.shape}")
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > 1e-10:
            raise ValueError(f"state not normalized: sum |amp|^2 = {norm_sq!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def zero_state(n_qubits: int) -> StateVector:
    """The all-zeros basis state |0...0> on n_qubits wires."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise SizeError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _check_wire(wire: int, n_qubits: int) -> None:
    if not 0 <= wire < n_qubits:
        raise WireError(f"wire {wire} invalid for {n_qubits} qubits")


def _check_gate(gate: Gate, n_qubits: int) -> None:
    for w in gate.wires:
        _check_wire(w, n_qubits)


# ---------------------------------------------------------------------------
# Batched kernels. Amplitude arrays have shape (B, 2**n); rotation angles are
# per-row vectors of shape (B,). ``src`` and ``dst`` must be distinct buffers.
# Large batches go through fused compiled loops (one read + one write pass);
# small ones use plain numpy slicing.
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _rot_fused(src, dst, pre, post, cos_half, sin_half, kind_code):
    # kind_code: 0 = rx, 1 = ry
    rows = src.shape[0]
    for b in range(rows):
        c = cos_half[b]
        s = sin_half[b]
        for i in range(pre):
            base = i * 2 * post
            for k in range(base, base + post):
                a = src[b, k]
                bb = src[b, k + post]
                if kind_code == 0:
                    dst[b, k] = c * a - 1j * (s * bb)
                    dst[b, k + post] = c * bb - 1j * (s * a)
                else:
                    dst[b, k] = c * a - s * bb
                    dst[b, k + post] = s * a + c * bb


@numba.njit(cache=True)
def _rz_fused(src, dst, pre, post, phase):
    rows = src.shape[0]
    for b in range(rows):
        p = phase[b]
        q = np.conj(p)
        for i in range(pre):
            base = i * 2 * post
            for k in range(base, base + post):
                dst[b, k] = p * src[b, k]
                dst[b, k + post] = q * src[b, k + post]


def _apply_rotation_batch(src: np.ndarray, dst: np.ndarray, n: int, wire: int,
                          kind: str, angles: np.ndarray) -> None:
    batch = src.shape[0]
    pre = 1 << wire
    post = (1 << n) >> (wire + 1)
    if kind == "rz":
        phase = np.exp(-0.5j * angles)
        if src.size >= _FUSED_KERNEL_MIN_ELEMENTS:
            _rz_fused(src, dst, pre, post, phase)
            return
        phase = phase[:, None, None]
        v = src.reshape(batch, pre, 2, post)
        o = dst.reshape(batch, pre, 2, post)
        np.multiply(v[:, :, 0, :], phase, out=o[:, :, 0, :])
        np.multiply(v[:, :, 1, :], np.conj(phase), out=o[:, :, 1, :])
        return
    if kind == "rx":
        code = 0
    elif kind == "ry":
        code = 1
    else:
        raise ValueError(f"unknown rotation kind {kind!r}")
    half = 0.5 * angles
    if src.size >= _FUSED_KERNEL_MIN_ELEMENTS:
        _rot_fused(src, dst, pre, post, np.cos(half), np.sin(half), code)
        return
    v = src.reshape(batch, pre, 2, post)
    o = dst.reshape(batch, pre, 2, post)
    a = v[:, :, 0, :]
    b = v[:, :, 1, :]
    c = np.cos(half)[:, None, None]
    s = np.sin(half)[:, None, None]
    # RX: [[c, -i s], [-i s, c]];  RY: [[c, -s], [s, c]]
    off = (-1j) * s if code == 0 else s
    np.multiply(b, off, out=o[:, :, 0, :])
    if code == 1:
        np.negative(o[:, :, 0, :], out=o[:, :, 0, :])
    o[:, :, 0, :] += c * a
    np.multiply(a, off, out=o[:, :, 1, :])
    o[:, :, 1, :] += c * b


def _apply_cnot_batch(src: np.ndarray, dst: np.ndarray, n: int, control: int,
                      target: int) -> None:
    batch = src.shape[0]
    np.copyto(dst, src)
    vs = src.reshape((batch,) + (2,) * n)
    vd = dst.reshape((batch,) + (2,) * n)
    lo = [slice(None)] * (n + 1)
    lo[1 + control] = 1
    hi = list(lo)
    lo[1 + target] = 0
    hi[1 + target] = 1
    vd[tuple(lo)] = vs[tuple(hi)]
    vd[tuple(hi)] = vs[tuple(lo)]


def _run_gates_batch(amps: np.ndarray, n: int, gates, angle_rows=None) -> np.ndarray:
    """Apply a gate sequence to a batch of states.

    ``amps`` is consumed as scratch; the returned array holds the result.
    ``angle_rows`` optionally maps gate positions to per-row angle vectors
    (used by templates whose rotation angles vary across the batch).
    """
    batch = amps.shape[0]
    scratch = np.empty_like(amps)
    src, dst = amps, scratch
    for idx, gate in enumerate(gates):
        if gate.kind == "cnot":
            _apply_cnot_batch(src, dst, n, gate.control, gate.target)
        else:
            if angle_rows is not None and idx in angle_rows:
                angles = angle_rows[idx]
            else:
                angles = np.full(batch, gate.angle)
            _apply_rotation_batch(src, dst, n, gate.target, gate.kind, angles)
        src, dst = dst, src
    _note_runs(batch)
    return src


def _zero_batch(batch: int, n: int) -> np.ndarray:
    amps = np.zeros((batch, 1 << n), dtype=np.complex128)
    amps[:, 0] = 1.0
    return amps


def _z_expectation_batch(amps: np.ndarray, n: int, wire: int) -> np.ndarray:
    """Per-row <Z_wire>, shape (B,)."""
    probs = np.abs(amps) ** 2
    pre = 1 << wire
    p1 = probs.reshape(amps.shape[0], pre, 2, -1)[:, :, 1, :].sum(axis=(1, 2))
    return 1.0 - 2.0 * p1


def _basis_probs_batch(amps: np.ndarray, n: int, wires: tuple[int, ...]) -> np.ndarray:
    """Per-row marginal probabilities over ``wires``, shape (B, 2**len(wires)).

    Entry k is the probability of bit pattern k with the first listed wire
    as the most significant bit.
    """
    batch = amps.shape[0]
    probs = np.abs(amps) ** 2
    if len(wires) == n and wires == tuple(range(n)):
        return probs
    v = probs.reshape((batch,) + (2,) * n)
    keep = set(wires)
    drop = tuple(1 + w for w in range(n) if w not in keep)
    if drop:
        v = v.sum(axis=drop)
    remaining = sorted(keep)
    perm = [0] + [1 + remaining.index(w) for w in wires]
    return v.transpose(perm).reshape(batch, -1)


# ---------------------------------------------------------------------------
# Public single-state operations.
# ---------------------------------------------------------------------------

def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Unitary image of ``state`` under one gate."""
    _check_gate(gate, state.n_qubits)
    amps = state.amplitudes[None, :].copy()
    out = np.empty_like(amps)
    if gate.kind == "cnot":
        _apply_cnot_batch(amps, out, state.n_qubits, gate.control, gate.target)
    else:
        _apply_rotation_batch(amps, out, state.n_qubits, gate.target, gate.kind,
                              np.full(1, gate.angle))
    return StateVector(state.n_qubits, out[0])


def run_circuit(state: StateVector, gates) -> StateVector:
    """Left-to-right composition of ``gates`` applied to ``state``."""
    gates = list(gates)
    for idx, gate in enumerate(gates):
        try:
            _check_gate(gate, state.n_qubits)
        except WireError as exc:
            raise WireError(f"gate {idx}: {exc}") from exc
    amps = _run_gates_batch(state.amplitudes[None, :].copy(), state.n_qubits, gates)
    return StateVector(state.n_qubits, amps[0])


def expectation_z(state: StateVector, wire: int) -> float:
    """<Z> on one wire: P(bit=0) - P(bit=1), in [-1, 1]."""
    _check_wire(wire, state.n_qubits)
    return float(_z_expectation_batch(state.amplitudes[None, :], state.n_qubits, wire)[0])


def _check_wire_subset(wires, n_qubits: int) -> tuple[int, ...]:
    wires = tuple(int(w) for w in wires)
    if not wires:
        raise WireError("wire subset must be non-empty")
    if len(set(wires)) != len(wires):
        raise WireError(f"duplicate wires in subset {wires}")
    for w in wires:
        _check_wire(w, n_qubits)
    return wires


def basis_probabilities(state: StateVector, wires) -> np.ndarray:
    """Marginal probability of every bit pattern on ``wires`` (PVM readout)."""
    wires = _check_wire_subset(wires, state.n_qubits)
    return _basis_probs_batch(state.amplitudes[None, :], state.n_qubits, wires)[0]


# ---------------------------------------------------------------------------
# Dense-matrix oracle (test harness only; capped at 4 qubits).
# ---------------------------------------------------------------------------

_ID2 = np.eye(2, dtype=np.complex128)
_P0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
_P1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """Dense 2x2 matrix of one rotation gate."""
    c = math.cos(angle / 2)
    s = math.sin(angle / 2)
    if kind == "rx":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "ry":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "rz":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]],
                        dtype=np.complex128)
    raise ValueError(f"unknown rotation kind {kind!r}")


def _kron_chain(factors) -> np.ndarray:
    out = np.eye(1, dtype=np.complex128)
    for f in factors:
        out = np.kron(out, f)
    return out


def _gate_matrix(gate: Gate, n_qubits: int) -> np.ndarray:
    if gate.kind == "cnot":
        ctrl0 = [_P0 if w == gate.control else _ID2 for w in range(n_qubits)]
        ctrl1 = [_P1 if w == gate.control else (_X if w == gate.target else _ID2)
                 for w in range(n_qubits)]
        return _kron_chain(ctrl0) + _kron_chain(ctrl1)
    m = rotation_matrix(gate.kind, gate.angle)
    return _kron_chain(m if w == gate.target else _ID2 for w in range(n_qubits))


def dense_unitary_oracle(gates, n_qubits: int) -> np.ndarray:
    """Explicit matrix product of the circuit, wire 0 as the leftmost factor.

    Deliberately independent of the simulation kernels; used by the test
    suite to cross-check run_circuit.
    """
    if n_qubits > 4:
        raise SizeError(f"dense oracle limited to 4 qubits, got {n_qubits}")
    if n_qubits < 1:
        raise SizeError(f"n_qubits must be >= 1, got {n_qubits}")
    unitary = np.eye(1 << n_qubits, dtype=np.complex128)
    for gate in gates:
        _check_gate(gate, n_qubits)
        unitary = _gate_matrix(gate, n_qubits) @ unitary
    return unitary
