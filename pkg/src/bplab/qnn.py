"""Hybrid quantum-classical classifier and its gradient-variance probes.

The circuit is a hardware-efficient ansatz: angle-encode the inputs with RX
gates, then per layer apply RX/RY/RZ on every qubit (three angles per qubit
per layer) followed by a linear CNOT chain (control q -> target q+1).  The
per-qubit Pauli-Z expectations feed a linear head whose logits are trained
with softmax cross-entropy.

Quantum gradients use the parameter-shift rule (exact for half-angle
rotations, shift pi/2); head gradients are analytic.  All shifted circuit
variants are simulated in one batched pass, chunked to bound memory.

The "probe" is the gradient of the mean training loss with respect to one
chosen rotation angle (by default the first one).  ``train_and_probe``
records it on the full training set at the end of each epoch and reports the
population variance of the recorded values, which is the quantity that
collapses toward zero on a barren plateau.  ``restart_gradient_variance``
offers the complementary measurement: the probe gradient's variance across
random re-initializations, evaluated before any training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .statevector import (
    apply_cnot,
    apply_matrix,
    pauli_z_expectations,
    rotation_matrix,
)

# Cap on simultaneous complex amplitudes per simulation chunk (~64 MiB).
_CHUNK_ELEMS = 1 << 22

PARAMETER_SHIFT = math.pi / 2.0


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass(frozen=True)
class CircuitSpec:
    """Ansatz dimensions: layers L, qubits N, rotations per qubit R (fixed 3)."""

    num_layers: int
    num_qubits: int
    num_rotations: int = 3

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if self.num_rotations != 3:
            raise ValueError("the ansatz uses exactly 3 rotation gates per qubit")

    @property
    def num_theta(self) -> int:
        return self.num_layers * self.num_qubits * self.num_rotations

    @property
    def theta_shape(self) -> tuple[int, int, int]:
        return (self.num_layers, self.num_qubits, self.num_rotations)


@dataclass
class QnnParams:
    """Rotation angles plus the linear head (weights and bias)."""

    theta0: np.ndarray        # (L, N, R)
    head_weights: np.ndarray  # (C, N)
    head_bias: np.ndarray     # (C,)

    @classmethod
    def from_arrays(cls, theta0, head_weights, head_bias) -> "QnnParams":
        return cls(
            np.asarray(theta0, dtype=float),
            np.asarray(head_weights, dtype=float),
            np.asarray(head_bias, dtype=float),
        )

    @property
    def num_classes(self) -> int:
        return self.head_weights.shape[0]

    def validate_for(self, spec: CircuitSpec) -> None:
        if self.theta0.shape != spec.theta_shape:
            raise ValueError(
                f"theta0 shape {self.theta0.shape} != expected {spec.theta_shape}"
            )
        c = self.head_weights.shape[0] if self.head_weights.ndim == 2 else -1
        if self.head_weights.shape != (c, spec.num_qubits) or c < 1:
            raise ValueError(
                f"head_weights shape {self.head_weights.shape} != (C, {spec.num_qubits})"
            )
        if self.head_bias.shape != (c,):
            raise ValueError(f"head_bias shape {self.head_bias.shape} != ({c},)")
        for name, arr in (("theta0", self.theta0), ("head_weights", self.head_weights),
                          ("head_bias", self.head_bias)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    def copy(self) -> "QnnParams":
        return QnnParams(self.theta0.copy(), self.head_weights.copy(), self.head_bias.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.theta0.ravel(), self.head_weights.ravel(), self.head_bias.ravel()]
        )

    @classmethod
    def from_vector(cls, spec: CircuitSpec, num_classes: int, vec: np.ndarray) -> "QnnParams":
        n_theta = spec.num_theta
        n_w = num_classes * spec.num_qubits
        theta = vec[:n_theta].reshape(spec.theta_shape)
        w = vec[n_theta:n_theta + n_w].reshape(num_classes, spec.num_qubits)
        b = vec[n_theta + n_w:]
        return cls(theta.copy(), w.copy(), b.copy())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 20
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_bound: float = 1e3  # monitor threshold for the bounded-gradient check

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class VarianceReport:
    """Per-epoch probe-gradient trace and its population variance."""

    probe_index: int
    per_epoch_gradients: np.ndarray
    variance: float
    grad_min: float
    grad_max: float
    max_abs_grad: float
    grad_bound: float

    @property
    def bound_exceeded(self) -> bool:
        return self.max_abs_grad > self.grad_bound

    @classmethod
    def from_gradients(cls, gradients, probe_index: int = 0,
                       max_abs_grad: float | None = None,
                       grad_bound: float = 1e3) -> "VarianceReport":
        g = np.asarray(gradients, dtype=float)
        if g.size == 0:
            raise ValueError("gradient trace is empty")
        return cls(
            probe_index=probe_index,
            per_epoch_gradients=g,
            variance=float(np.var(g)),  # population variance, 1/T normalization
            grad_min=float(g.min()),
            grad_max=float(g.max()),
            max_abs_grad=float(np.max(np.abs(g)) if max_abs_grad is None else max_abs_grad),
            grad_bound=grad_bound,
        )


@dataclass
class Gradients:
    theta0: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.theta0.ravel(), self.head_weights.ravel(), self.head_bias.ravel()]
        )

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.theta0)), np.max(np.abs(self.head_weights)),
                         np.max(np.abs(self.head_bias))))


# ---------------------------------------------------------------------------
# Circuit evaluation
# ---------------------------------------------------------------------------


def circuit_z_expectations(theta_table: np.ndarray, features: np.ndarray,
                           num_qubits: int) -> np.ndarray:
    """Run the ansatz for V angle variants x B samples; return <Z> per qubit.

    theta_table: (V, L, N, R) angles, features: (B, d) with d <= N.
    Returns (V, B, N).  Work is chunked over variants/samples so the live
    amplitude tensor stays within the memory budget.
    """
    theta_table = np.asarray(theta_table, dtype=float)
    features = np.asarray(features, dtype=float)
    n_variants, num_layers = theta_table.shape[0], theta_table.shape[1]
    n_samples, n_feats = features.shape
    if n_feats > num_qubits:
        raise ValueError(f"{n_feats} features exceed the {num_qubits}-qubit register")
    dim = 1 << num_qubits

    out = np.empty((n_variants, n_samples, num_qubits))
    b_chunk = max(1, min(n_samples, _CHUNK_ELEMS // dim))
    v_chunk = max(1, _CHUNK_ELEMS // (dim * b_chunk))
    for v0 in range(0, n_variants, v_chunk):
        v1 = min(n_variants, v0 + v_chunk)
        for b0 in range(0, n_samples, b_chunk):
            b1 = min(n_samples, b0 + b_chunk)
            amps = np.zeros((v1 - v0, b1 - b0, dim), dtype=complex)
            amps[..., 0] = 1.0
            for j in range(n_feats):
                enc = rotation_matrix("RX", features[b0:b1, j])[None]  # (1, b, 2, 2)
                amps = apply_matrix(amps, num_qubits, enc, target=j)
            for layer in range(num_layers):
                for q in range(num_qubits):
                    # The three rotations commute with nothing in between, so
                    # fuse them into one 2x2 per variant (applied RX first).
                    rx = rotation_matrix("RX", theta_table[v0:v1, layer, q, 0])
                    ry = rotation_matrix("RY", theta_table[v0:v1, layer, q, 1])
                    rz = rotation_matrix("RZ", theta_table[v0:v1, layer, q, 2])
                    fused = rz @ ry @ rx
                    amps = apply_matrix(amps, num_qubits, fused[:, None], target=q)
                for q in range(num_qubits - 1):
                    amps = apply_cnot(amps, num_qubits, q, q + 1)
            out[v0:v1, b0:b1] = pauli_z_expectations(amps, num_qubits)
    return out


def _variant_table(theta0: np.ndarray, indices) -> np.ndarray:
    """Angle table holding the base point plus +-pi/2 shifts of each index."""
    n_variants = 1 + 2 * len(indices)
    table = np.broadcast_to(theta0, (n_variants,) + theta0.shape).copy()
    flat = table.reshape(n_variants, -1)
    for i, k in enumerate(indices):
        flat[1 + 2 * i, k] += PARAMETER_SHIFT
        flat[2 + 2 * i, k] -= PARAMETER_SHIFT
    return table


def shifted_z_expectations(spec: CircuitSpec, theta0: np.ndarray, features: np.ndarray,
                           indices) -> tuple[np.ndarray, np.ndarray]:
    """Base <Z> values and parameter-shift derivatives for the given indices.

    Returns (z0 of shape (B, N), dz of shape (len(indices), B, N)).
    """
    table = _variant_table(theta0, indices)
    z = circuit_z_expectations(table, features, spec.num_qubits)
    z0 = z[0]
    dz = (z[1::2] - z[2::2]) / 2.0
    return z0, dz


# ---------------------------------------------------------------------------
# Forward pass and loss
# ---------------------------------------------------------------------------


def forward(spec: CircuitSpec, params: QnnParams, features) -> np.ndarray:
    """Logits for a single sample: head_weights @ <Z> + head_bias."""
    params.validate_for(spec)
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    z = circuit_z_expectations(params.theta0[None], feats, spec.num_qubits)[0, 0]
    return params.head_weights @ z + params.head_bias


def loss(logits, label: int) -> float:
    """Softmax cross-entropy of one logit vector, log-sum-exp stabilized."""
    x = np.asarray(logits, dtype=float)
    if not 0 <= label < x.size:
        raise ValueError(f"label {label} out of range for {x.size} classes")
    shifted = x - x.max()
    return float(np.log(np.sum(np.exp(shifted))) - shifted[label])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mean_loss_and_logit_grad(params: QnnParams, z0: np.ndarray,
                              labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and d(mean loss)/d(logits), shape (B, C)."""
    logits = z0 @ params.head_weights.T + params.head_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    mean_loss = float(np.mean(lse - shifted[np.arange(len(labels)), labels]))
    g = _softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    g /= len(labels)
    return mean_loss, g


def loss_and_gradients(spec: CircuitSpec, params: QnnParams, features, labels
                       ) -> tuple[float, Gradients]:
    """Mean batch loss and gradients for every parameter.

    Rotation-angle gradients come from the parameter-shift rule chained with
    the analytic head gradient; head gradients are fully analytic.
    """
    feats = np.asarray(features, dtype=float)
    labs = np.asarray(labels, dtype=int)
    if feats.shape[0] == 0:
        raise ValueError("batch is empty")
    if np.any(labs < 0) or np.any(labs >= params.num_classes):
        raise ValueError("label out of range")
    z0, dz = shifted_z_expectations(spec, params.theta0, feats,
                                    range(spec.num_theta))
    mean_loss, g = _mean_loss_and_logit_grad(params, z0, labs)
    gz = g @ params.head_weights            # (B, N): d(mean loss)/dz
    theta_grad = np.einsum("kbn,bn->k", dz, gz).reshape(spec.theta_shape)
    w_grad = g.T @ z0
    b_grad = g.sum(axis=0)
    return mean_loss, Gradients(theta_grad, w_grad, b_grad)


def grad_theta(spec: CircuitSpec, params: QnnParams, batch) -> np.ndarray:
    """Gradient of the mean batch loss w.r.t. every rotation angle, (L, N, R)."""
    features, labels = batch
    params.validate_for(spec)
    _, grads = loss_and_gradients(spec, params, features, labels)
    return grads.theta0


def probe_loss_gradient(spec: CircuitSpec, params: QnnParams, features, labels,
                        probe_index: int = 0) -> float:
    """d(mean loss)/d(theta0 flat[probe_index]) without the full gradient sweep."""
    feats = np.asarray(features, dtype=float)
    labs = np.asarray(labels, dtype=int)
    z0, dz = shifted_z_expectations(spec, params.theta0, feats, [probe_index])
    _, g = _mean_loss_and_logit_grad(params, z0, labs)
    gz = g @ params.head_weights
    return float(np.einsum("bn,bn->", dz[0], gz))


def observable_gradient(spec: CircuitSpec, theta0: np.ndarray, features,
                        observable_qubit: int, probe_index: int = 0) -> float:
    """Parameter-shift derivative of the data-averaged <Z_observable_qubit>.

    This is the bare circuit-expectation gradient, with no classical head in
    the path; it is the measurement used for plateau-decay scans.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    theta = np.asarray(theta0, dtype=float)
    # Only the two shifted variants are needed, not the base point.
    table = np.broadcast_to(theta, (2,) + theta.shape).copy()
    flat = table.reshape(2, -1)
    flat[0, probe_index] += PARAMETER_SHIFT
    flat[1, probe_index] -= PARAMETER_SHIFT
    z = circuit_z_expectations(table, feats, spec.num_qubits)
    return float(np.mean((z[0, :, observable_qubit] - z[1, :, observable_qubit]) / 2.0))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class Adam:
    """Standard Adam on a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float, beta2: float, eps: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_and_probe(spec: CircuitSpec, params0: QnnParams, dataset,
                    cfg: TrainConfig, probe_index: int = 0) -> VarianceReport:
    """Train with Adam over mini-batches and trace the probe gradient.

    ``dataset`` is a (features, labels) pair for the training split.  At the
    end of every epoch the probe parameter's gradient is evaluated on the
    full training set, decoupling the trace from batch-shuffling noise.  The
    report's variance is the population variance of the per-epoch trace.
    Deterministic for a fixed config: the shuffling stream is seeded.

    Raises TrainingDiverged when the loss becomes non-finite.
    """
    features, labels = dataset
    feats = np.asarray(features, dtype=float)
    labs = np.asarray(labels, dtype=int)
    if feats.shape[0] == 0:
        raise ValueError("dataset is empty")
    params0.validate_for(spec)
    if not 0 <= probe_index < spec.num_theta:
        raise ValueError(f"probe_index {probe_index} out of range")

    num_classes = params0.num_classes
    rng = np.random.default_rng(cfg.seed)
    vec = params0.to_vector()
    adam = Adam(vec.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    max_abs = 0.0
    trace = np.empty(cfg.epochs)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(labs))
        for start in range(0, len(labs), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            params = QnnParams.from_vector(spec, num_classes, vec)
            batch_loss, grads = loss_and_gradients(spec, params, feats[idx], labs[idx])
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            max_abs = max(max_abs, grads.max_abs())
            vec = adam.step(vec, grads.to_vector())
        params = QnnParams.from_vector(spec, num_classes, vec)
        g = probe_loss_gradient(spec, params, feats, labs, probe_index)
        if not math.isfinite(g):
            raise TrainingDiverged(f"non-finite probe gradient at epoch {epoch}")
        max_abs = max(max_abs, abs(g))
        trace[epoch] = g

    return VarianceReport.from_gradients(trace, probe_index=probe_index,
                                         max_abs_grad=max_abs,
                                         grad_bound=cfg.grad_bound)


def restart_gradient_variance(spec: CircuitSpec, features, theta_sampler,
                              n_restarts: int, seed: int,
                              observable_qubit: int | None = None,
                              probe_index: int = 0,
                              n_groups: int = 1) -> np.ndarray:
    """Probe-gradient variance across random restarts, before any training.

    For each restart a fresh angle tensor is drawn from ``theta_sampler(rng)``
    and the parameter-shift gradient of the data-averaged Pauli-Z readout is
    evaluated at ``probe_index``.  The readout qubit defaults to the last one,
    whose backward light cone spans the whole register under the downward
    CNOT chain, so its gradient statistics reflect the full circuit depth
    (readouts on low qubits have N-independent light cones and would mask the
    decay).  Returns per-group population variances, shape (n_groups,);
    restarts are split evenly across groups so callers can take a median.
    """
    if n_restarts < 2:
        raise ValueError("need at least 2 restarts for a variance")
    if n_groups < 1 or n_restarts % n_groups:
        raise ValueError("n_restarts must divide evenly into n_groups")
    qubit = spec.num_qubits - 1 if observable_qubit is None else observable_qubit
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    rng = np.random.default_rng(seed)
    grads = np.empty(n_restarts)
    for i in range(n_restarts):
        theta = np.asarray(theta_sampler(rng), dtype=float)
        if theta.shape != spec.theta_shape:
            raise ValueError(f"sampler returned shape {theta.shape}, "
                             f"expected {spec.theta_shape}")
        grads[i] = observable_gradient(spec, theta, feats, qubit, probe_index)
    return np.var(grads.reshape(n_groups, -1), axis=1)
