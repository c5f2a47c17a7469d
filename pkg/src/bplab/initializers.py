"""One-shot parameter initialization baselines.

Five families are supported: the three classic angle priors (uniform,
normal, beta) plus the two depth-aware baselines, ``gainit`` (zero-mean
Gaussian whose variance defaults to 1/L, shrinking with circuit depth) and
``beinit`` (Beta(2, 2) mapped onto [0, pi]).  Family parameters are
configurable; the defaults are documented knobs, not canon, and should be
reported next to any comparison output.

Bounded-support families can be affinely mapped onto a ``scale_to`` interval.
Sampling is pure given the seed, so concurrent use with independent seeds is
safe.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .qnn import CircuitSpec, QnnParams

TWO_PI = 2.0 * math.pi

FAMILIES = ("uniform", "normal", "beta", "gainit", "beinit")

# (family, default params, default scale_to) -- scale_to applies only to
# bounded-support families; unbounded ones keep their natural support.
_DEFAULTS = {
    "uniform": ((0.0, TWO_PI), None),
    "normal": ((0.0, 1.0), None),
    "beta": ((2.0, 2.0), (0.0, 1.0)),
    "gainit": ((), None),        # sigma defaults to sqrt(1/L) at sample time
    "beinit": ((2.0, 2.0), (0.0, math.pi)),
}


@dataclass(frozen=True)
class InitSpec:
    """A distribution family with its parameters, target interval, and seed."""

    family: str
    params: tuple = ()
    scale_to: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown init family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.scale_to is not None:
            lo, hi = self.scale_to
            if not lo < hi:
                raise ValueError(f"scale_to interval {self.scale_to} is empty")
            object.__setattr__(self, "scale_to", (float(lo), float(hi)))
        self._resolve()  # validate eagerly

    def _resolve(self) -> tuple[tuple, tuple | None]:
        """Fill in family defaults and validate parameter constraints."""
        default_params, default_scale = _DEFAULTS[self.family]
        params = self.params if self.params else default_params
        scale = self.scale_to if self.scale_to is not None else default_scale
        if self.family == "uniform":
            a, b = params
            if not a < b:
                raise ValueError(f"uniform bounds must satisfy a < b, got {params}")
        elif self.family == "normal":
            _, sigma = params
            if sigma <= 0:
                raise ValueError("normal std must be > 0")
        elif self.family in ("beta", "beinit"):
            alpha, beta = params
            if alpha <= 0 or beta <= 0:
                raise ValueError("beta shape parameters must be > 0")
        elif self.family == "gainit" and params:
            (sigma,) = params
            if sigma <= 0:
                raise ValueError("gainit std must be > 0")
        return params, scale


def parse_init_string(text: str) -> InitSpec:
    """Parse CLI/config strings like ``uniform[0,6.2831853]`` or ``beinit``.

    An optional ``@[lo,hi]`` suffix sets the target interval, e.g.
    ``beta[2,2]@[0,3.14159]``.
    """
    m = re.fullmatch(
        r"\s*([a-zA-Z]+)\s*(?:\[([^\]]*)\])?\s*(?:@\s*\[([^\]]*)\])?\s*",
        text,
    )
    if not m:
        raise ValueError(f"cannot parse init spec {text!r}")
    family = m.group(1).lower()
    params = tuple(float(x) for x in m.group(2).split(",")) if m.group(2) else ()
    scale = tuple(float(x) for x in m.group(3).split(",")) if m.group(3) else None
    if scale is not None and len(scale) != 2:
        raise ValueError(f"scale interval needs two bounds, got {text!r}")
    return InitSpec(family=family, params=params, scale_to=scale)


def sample_array(init: InitSpec, shape, rng: np.random.Generator,
                 num_layers: int | None = None) -> np.ndarray:
    """Draw an i.i.d. array from the family, mapped to its target interval."""
    params, scale = init._resolve()
    if init.family == "uniform":
        a, b = params
        draws = rng.uniform(a, b, size=shape)
        if scale is not None:
            lo, hi = scale
            draws = lo + (draws - a) * (hi - lo) / (b - a)
    elif init.family == "normal":
        mu, sigma = params
        draws = rng.normal(mu, sigma, size=shape)
    elif init.family in ("beta", "beinit"):
        alpha, beta = params
        draws = rng.beta(alpha, beta, size=shape)
        lo, hi = scale
        draws = lo + draws * (hi - lo)
    elif init.family == "gainit":
        if params:
            (sigma,) = params
        else:
            if num_layers is None:
                raise ValueError("gainit needs num_layers to derive its default std")
            sigma = math.sqrt(1.0 / num_layers)
        draws = rng.normal(0.0, sigma, size=shape)
    else:  # pragma: no cover - guarded by InitSpec
        raise ValueError(init.family)
    return draws


def sample_params(spec: CircuitSpec, init: InitSpec, classes: int,
                  head_init: InitSpec | None = None,
                  rng: np.random.Generator | None = None) -> QnnParams:
    """Sample a full parameter set: angles plus head weights and bias.

    The head is drawn from the same family unless ``head_init`` overrides it.
    Deterministic given ``init.seed`` (or an explicit generator).
    """
    if classes < 1:
        raise ValueError("classes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(init.seed)
    head = head_init if head_init is not None else init
    theta = sample_array(init, spec.theta_shape, rng, num_layers=spec.num_layers)
    weights = sample_array(head, (classes, spec.num_qubits), rng,
                           num_layers=spec.num_layers)
    bias = sample_array(head, (classes,), rng, num_layers=spec.num_layers)
    return QnnParams(theta, weights, bias)
