"""Barren-plateau laboratory.

Dense statevector simulation of a hardware-efficient quantum classifier,
gradient-variance probes for plateau detection, classic one-shot
initializers, an improvement-gated iterative initialization search with
pluggable parameter generators, and a Monte Carlo lab for the gated-increment
process bounds that back the search.
"""
from .adainit import (
    AdaInitConfig,
    AdaInitResult,
    EIState,
    ThresholdSpec,
    cumulative_cost_curve,
    expected_improvement,
    run_adainit,
    threshold,
)
from .data import (
    DatasetSpec,
    PreparedDataset,
    load_prepared,
    load_raw,
    prepare,
    save_prepared,
)
from .generator import (
    EndpointConfig,
    GeneratedParams,
    GeneratorError,
    LlmGenerator,
    PromptContext,
    ShapeValidationError,
    SurrogateGenerator,
    build_prompt,
    parse_and_validate,
    request_generation,
    shape_accuracy,
    surrogate_generate,
)
from .initializers import InitSpec, parse_init_string, sample_params
from .qnn import (
    CircuitSpec,
    QnnParams,
    TrainConfig,
    TrainingDiverged,
    VarianceReport,
    forward,
    grad_theta,
    loss,
    restart_gradient_variance,
    train_and_probe,
)
from .statevector import (
    CapacityError,
    GateOp,
    StateVector,
    angle_encode,
    apply_gate,
    expect_pauli_z,
    init_zero_state,
)
from .submartingale import (
    HittingTimeReport,
    IncrementProcess,
    corollary_cases,
    drift_lower_bound_check,
    hitting_time,
    simulate_S,
)

__version__ = "0.1.0"
