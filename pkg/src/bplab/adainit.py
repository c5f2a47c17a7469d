"""Iterative, improvement-gated search for effective initial parameters.

Each iteration draws a candidate from a generator, trains the circuit for a
fixed number of epochs, and measures the probe-gradient variance.  The
expected improvement is the positive part of that variance minus the running
maximum; a candidate is accepted when the improvement clears a threshold of
the form 1 / (poly(N, L) * K).  Accepted candidates update the running
maximum, extend the candidate list, and feed a summary back into the next
prompt.  Rejected iterations advance the counter without touching the
feedback, so the prompt only ever reflects accepted candidates.

The running maximum equals the cumulative sum of accepted improvements, which
is what makes the acceptance bookkeeping checkable after the fact: the trace
must be non-decreasing and each accepted step must raise it by at least the
threshold.
"""
from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field, replace

from .generator import GeneratorError, PromptContext, summarize_feedback
from .qnn import (
    CircuitSpec,
    QnnParams,
    TrainConfig,
    TrainingDiverged,
    VarianceReport,
    train_and_probe,
)

logger = logging.getLogger("bplab.adainit")


def poly_n6(num_qubits: int, num_layers: int) -> float:
    """Default gate polynomial: N**6, layer-independent."""
    return float(num_qubits) ** 6


def poly_n3l3(num_qubits: int, num_layers: int) -> float:
    """Alternative polynomial with a depth term: N**3 * L**3."""
    return float(num_qubits) ** 3 * float(num_layers) ** 3


POLYNOMIALS = {"n6": poly_n6, "n3l3": poly_n3l3}


def threshold(spec: CircuitSpec, k: int, poly=poly_n6) -> float:
    """Acceptance threshold 1 / (poly(N, L) * K).

    Raises if the value underflows below the smallest normal float, which
    would silently disable the gate for enormous N * K products.
    """
    if k < 1:
        raise ValueError("K must be a positive integer")
    try:
        value = 1.0 / (poly(spec.num_qubits, spec.num_layers) * k)
    except OverflowError:
        value = 0.0
    if not value > 0.0 or value < sys.float_info.min:
        raise ValueError(
            f"threshold underflowed to {value!r} for N={spec.num_qubits}, "
            f"L={spec.num_layers}, K={k}"
        )
    return value


@dataclass(frozen=True)
class ThresholdSpec:
    """K plus the polynomial choice; ``value_for`` evaluates the gate level."""

    k: int
    poly: str = "n6"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be a positive integer")
        if self.poly not in POLYNOMIALS:
            raise ValueError(f"unknown polynomial {self.poly!r}; "
                             f"choose from {sorted(POLYNOMIALS)}")

    def value_for(self, spec: CircuitSpec) -> float:
        return threshold(spec, self.k, POLYNOMIALS[self.poly])


def expected_improvement(var_t: float, s_prev: float) -> float:
    """max(var_t - s_prev, 0); inputs must be finite and non-negative."""
    for name, value in (("var_t", var_t), ("s_prev", s_prev)):
        if not math.isfinite(value) or value < 0.0:
            raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
    return max(var_t - s_prev, 0.0)


@dataclass
class IterationRecord:
    t: int
    variance: float | None       # None when training diverged
    delta: float
    threshold: float
    accepted: bool
    s_after: float
    grad_min: float | None = None
    grad_max: float | None = None
    provenance: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "var": self.variance,
            "delta": self.delta,
            "threshold": self.threshold,
            "accepted": self.accepted,
            "S": self.s_after,
            "grad_min": self.grad_min,
            "grad_max": self.grad_max,
            "generator_provenance": self.provenance,
            "note": self.note,
        }


@dataclass
class EIState:
    """Running search state: counter, running maximum, candidates, history."""

    t: int = 0
    s: float = 0.0
    candidates: list[QnnParams] = field(default_factory=list)
    history: list[IterationRecord] = field(default_factory=list)

    def accepted_sum(self) -> float:
        return sum(rec.delta for rec in self.history if rec.accepted)


@dataclass
class AdaInitConfig:
    iterations: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: ThresholdSpec = field(default_factory=lambda: ThresholdSpec(k=50))
    prompt: PromptContext = field(default_factory=lambda: PromptContext(2, 2))
    feedback_enabled: bool = True
    probe_index: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class AdaInitResult:
    candidates: list[QnnParams]
    history: list[IterationRecord]
    threshold: float
    aborted_at: int | None = None
    error: str | None = None

    @property
    def final_s(self) -> float:
        return self.history[-1].s_after if self.history else 0.0

    @property
    def best_params(self) -> QnnParams | None:
        """The most effective candidate is the last accepted one."""
        return self.candidates[-1] if self.candidates else None

    @property
    def accepted_iterations(self) -> list[int]:
        return [rec.t for rec in self.history if rec.accepted]

    @property
    def iterations_to_best(self) -> int:
        accepted = self.accepted_iterations
        return accepted[-1] if accepted else 0


def _default_probe(spec: CircuitSpec, params: QnnParams, dataset,
                   train_cfg: TrainConfig, probe_index: int) -> VarianceReport:
    return train_and_probe(spec, params, dataset, train_cfg, probe_index)


def run_adainit(spec: CircuitSpec, dataset, generator, cfg: AdaInitConfig,
                probe=None) -> AdaInitResult:
    """Run the gated search loop and return (candidates, history).

    ``generator`` provides ``generate(ctx, previous_best) -> GeneratedParams``.
    ``probe`` defaults to training-plus-variance measurement; tests can
    inject a scripted probe with the same signature.

    Generator failure aborts the run with the partial history preserved.
    A training divergence only skips its iteration (improvement treated as
    zero) so long sweeps survive bad candidates.
    """
    if probe is None:
        probe = _default_probe
    gate = cfg.threshold.value_for(spec)
    state = EIState()
    previous_best: QnnParams | None = None
    feedback = ""

    result = AdaInitResult(candidates=state.candidates, history=state.history,
                           threshold=gate)
    for t in range(1, cfg.iterations + 1):
        state.t = t
        ctx = replace(cfg.prompt, feedback=feedback if cfg.feedback_enabled else "")
        try:
            generated = generator.generate(
                ctx, previous_best if cfg.feedback_enabled else None)
        except GeneratorError as exc:
            logger.warning("generator failed at iteration %d: %s", t, exc)
            result.aborted_at = t
            result.error = str(exc)
            return result
        params = generated.to_qnn_params()

        # The probe shares one training config across iterations, so the
        # measured variance is a pure function of the candidate parameters
        # (identical candidates always yield identical variance).
        try:
            report = probe(spec, params, dataset, cfg.train, cfg.probe_index)
        except TrainingDiverged as exc:
            logger.warning("training diverged at iteration %d: %s", t, exc)
            state.history.append(IterationRecord(
                t=t, variance=None, delta=0.0, threshold=gate, accepted=False,
                s_after=state.s, provenance=generated.provenance, note="diverged"))
            continue

        delta = expected_improvement(report.variance, state.s)
        accepted = delta >= gate
        if accepted:
            if cfg.feedback_enabled:
                feedback = summarize_feedback(params.theta0, report.variance, state.s)
            state.s = report.variance
            state.candidates.append(params)
            previous_best = params
        state.history.append(IterationRecord(
            t=t, variance=report.variance, delta=delta, threshold=gate,
            accepted=accepted, s_after=state.s, grad_min=report.grad_min,
            grad_max=report.grad_max, provenance=generated.provenance))
    return result


def cumulative_cost_curve(history: list[IterationRecord]) -> list[tuple[float, float]]:
    """Normalized staircase: (fraction of iterations, fraction of final best).

    Both axes are in (0, 1]; the y value is the running maximum divided by
    its final value (zero throughout if nothing was ever accepted).
    """
    if not history:
        raise ValueError("history is empty")
    total = len(history)
    final_s = history[-1].s_after
    points = []
    for i, rec in enumerate(history, start=1):
        y = rec.s_after / final_s if final_s > 0 else 0.0
        points.append((i / total, y))
    return points
