"""Dense statevector simulation of rotation/CNOT circuits with Pauli-Z readout.

Conventions every caller relies on:

- Qubit 0 is the most significant bit of the basis index, i.e. the basis
  state |q0 q1 ... q_{N-1}> lives at index sum(q_k * 2**(N-1-k)).  A flat
  amplitude array reshaped to (2,)*N therefore has qubit k on axis k.
- Rotations use half-angle generators, RX(t) = exp(-i*t*X/2) and likewise
  for RY/RZ.  With this convention the parameter-shift rule is exact at
  shift pi/2 and the rotation period is 4*pi.

The module exposes two layers: value-style ``StateVector`` operations, and
the underlying array kernels (``apply_matrix``, ``apply_cnot``,
``pauli_z_expectations``) which accept arbitrary leading batch dimensions so
that many circuit variants can be simulated in one vectorized pass.
All operations are pure; nothing here mutates its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Flat complex128 storage above this register size would exceed desk memory.
MAX_QUBITS = 24

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATION_KINDS + ("CNOT",)

_NORM_GUARD = 1e-8  # constructor raises beyond this; tests assert tighter drift


class CapacityError(ValueError):
    """Requested register size exceeds the configured simulator maximum."""


def rotation_matrix(kind: str, angle) -> np.ndarray:
    """2x2 unitary for RX/RY/RZ at ``angle`` (vectorized over angle arrays).

    Returns shape ``angle.shape + (2, 2)``; a scalar angle gives (2, 2).
    """
    a = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite rotation angle for {kind}")
    half = a / 2.0
    c = np.cos(half)
    s = np.sin(half)
    out = np.zeros(a.shape + (2, 2), dtype=complex)
    if kind == "RX":
        out[..., 0, 0] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
        out[..., 1, 1] = c
    elif kind == "RY":
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
    elif kind == "RZ":
        out[..., 0, 0] = c - 1j * s
        out[..., 1, 1] = c + 1j * s
    else:
        raise ValueError(f"unknown rotation kind {kind!r}")
    return out


@dataclass(frozen=True)
class GateOp:
    """A single gate: RX/RY/RZ with an angle, or CNOT with a control."""

    kind: str
    target: int
    control: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT requires a control qubit")
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")
            if self.angle is not None:
                raise ValueError("CNOT takes no angle")
        else:
            if self.control is not None:
                raise ValueError(f"{self.kind} takes no control qubit")
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{self.kind} requires a finite angle")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm amplitudes of an N-qubit register.  Treated as immutable."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if amps.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        norm2 = float(np.sum(amps.real**2 + amps.imag**2))
        if not math.isfinite(norm2) or abs(norm2 - 1.0) > _NORM_GUARD:
            raise ValueError(f"state norm^2 = {norm2!r}, not a unit vector")

    def norm_squared(self) -> float:
        a = self.amplitudes
        return float(np.sum(a.real**2 + a.imag**2))


# ---------------------------------------------------------------------------
# Array kernels.  ``amps`` may carry arbitrary leading batch dimensions; the
# last axis has length 2**num_qubits.
# ---------------------------------------------------------------------------


def apply_matrix(amps: np.ndarray, num_qubits: int, matrix: np.ndarray, target: int) -> np.ndarray:
    """Apply a 2x2 unitary to ``target``.

    ``matrix`` is either a shared (2, 2) array or carries leading dimensions
    that broadcast against the batch dimensions of ``amps``, e.g. per-sample
    encoding rotations of shape (B, 2, 2) against amplitudes of shape
    (B, 2**n).  The state is viewed as (..., 2**target, 2, rest) so the
    contraction is a single broadcasted matmul over the target axis.
    """
    pre = 1 << target
    post = 1 << (num_qubits - 1 - target)
    view = amps.reshape(amps.shape[:-1] + (pre, 2, post))
    if matrix.ndim > 2:
        # One singleton for the 2**target axis, so batch dims line up.
        matrix = matrix.reshape(matrix.shape[:-2] + (1, 2, 2))
    out = np.matmul(matrix, view)
    return out.reshape(amps.shape)


def apply_cnot(amps: np.ndarray, num_qubits: int, control: int, target: int) -> np.ndarray:
    """Apply CNOT(control -> target): flip the target bit where control is 1."""
    batch_ndim = amps.ndim - 1
    shaped = amps.reshape(amps.shape[:-1] + (2,) * num_qubits)
    sel = [slice(None)] * shaped.ndim
    sel[batch_ndim + control] = 1
    sub_target_axis = batch_ndim + target - (1 if target > control else 0)
    out = shaped.copy()
    out[tuple(sel)] = np.flip(shaped[tuple(sel)], axis=sub_target_axis)
    return out.reshape(amps.shape)


def pauli_z_expectations(amps: np.ndarray, num_qubits: int) -> np.ndarray:
    """<Z_q> for every qubit; returns shape ``amps.shape[:-1] + (num_qubits,)``."""
    batch_ndim = amps.ndim - 1
    probs = (amps.real**2 + amps.imag**2).reshape(amps.shape[:-1] + (2,) * num_qubits)
    out = np.empty(amps.shape[:-1] + (num_qubits,))
    for q in range(num_qubits):
        axes = tuple(batch_ndim + k for k in range(num_qubits) if k != q)
        marginal = probs.sum(axis=axes) if axes else probs
        out[..., q] = marginal[..., 0] - marginal[..., 1]
    return out


# ---------------------------------------------------------------------------
# StateVector operations.
# ---------------------------------------------------------------------------


def init_zero_state(num_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    """The all-zeros register |0...0>."""
    if num_qubits < 1:
        raise ValueError("num_qubits must be >= 1")
    if num_qubits > max_qubits:
        raise CapacityError(f"{num_qubits} qubits exceeds the maximum of {max_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate, returning a new state.  Norm is preserved."""
    n = state.num_qubits
    if not 0 <= gate.target < n:
        raise IndexError(f"target {gate.target} out of range for {n} qubits")
    if gate.kind == "CNOT":
        if not 0 <= gate.control < n:
            raise IndexError(f"control {gate.control} out of range for {n} qubits")
        amps = apply_cnot(state.amplitudes, n, gate.control, gate.target)
    else:
        amps = apply_matrix(
            state.amplitudes, n, rotation_matrix(gate.kind, gate.angle), gate.target
        )
    return StateVector(n, amps)


def apply_gates(state: StateVector, gates) -> StateVector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def angle_encode(state: StateVector, features) -> StateVector:
    """RX(features[j]) on qubit j for each feature; extra qubits untouched."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 1:
        raise ValueError("features must be a flat vector")
    if feats.size > state.num_qubits:
        raise ValueError(
            f"{feats.size} features exceed the {state.num_qubits}-qubit register"
        )
    if feats.size and not np.all(np.isfinite(feats)):
        raise ValueError("features must be finite")
    for j, value in enumerate(feats):
        state = apply_gate(state, GateOp("RX", target=j, angle=float(value)))
    return state


def expect_pauli_z(state: StateVector, qubit: int) -> float:
    """<Z_qubit> in [-1, 1]: +1 weight where the qubit's bit is 0, -1 where 1."""
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    value = float(
        pauli_z_expectations(state.amplitudes, state.num_qubits)[qubit]
    )
    # Roundoff can overshoot by ~1e-16; clamp to the physical range.
    return min(1.0, max(-1.0, value))
