"""Pluggable sources of candidate initial parameters.

Three interchangeable implementations honor the same contract,
``generate(ctx, previous_best) -> GeneratedParams`` (raising a
``GeneratorError`` subclass on failure):

- ``LlmGenerator``: renders the prompt template and calls any
  OpenAI-compatible chat-completions endpoint over HTTPS.
- ``SurrogateGenerator``: offline stand-in; draws from the context's prior
  family, then proposes Gaussian perturbations of the best accepted
  parameters, so feedback-driven improvement has nonzero probability.
- scripted/mock generators used by the validation harness and tests.

Responses are parsed leniently (code fences and surrounding prose are
stripped, since models emit them despite instructions) but validated
strictly: shapes must match the requested circuit exactly.
"""
from __future__ import annotations

import ast
import importlib.resources
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import requests

from .initializers import InitSpec, sample_array
from .qnn import CircuitSpec, QnnParams

logger = logging.getLogger("bplab.generator")

MAX_OUTPUT_TOKENS = 4096  # ample for every circuit size in the sweep grid

_CODE_FENCES = ("```python", "```json", "```")


class GeneratorError(Exception):
    """Base class for parameter-generation failures."""


class ParseError(GeneratorError):
    """Response text could not be parsed into a parameter dictionary."""


class InvalidValueError(GeneratorError):
    """Parsed parameters contain non-finite numbers."""


class ShapeValidationError(GeneratorError):
    """Parsed parameters do not match the requested shapes."""

    def __init__(self, field_name: str, expected: tuple, actual):
        self.field_name = field_name
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{field_name}: expected {tuple(expected)} actual {actual}"
        )


class RequestError(GeneratorError):
    """Base class for wire-level failures."""


class AuthenticationError(RequestError):
    pass


class RateLimitError(RequestError):
    pass


class NetworkError(RequestError):
    pass


class MalformedResponseError(RequestError):
    """HTTP success but no assistant content in the body."""


@dataclass(frozen=True)
class PromptContext:
    """Everything the prompt template needs, plus sampling controls."""

    nlayers: int
    nqubits: int
    nrot: int = 3
    nclasses: int = 2
    init_family: str = "uniform"
    data_desc: str = ""
    feedback: str = ""
    temperature: float = 1.0
    top_p: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p {self.top_p} outside (0, 1]")

    @property
    def shapes(self) -> dict[str, tuple]:
        return {
            "l0": (self.nlayers, self.nqubits, self.nrot),
            "l1": (self.nclasses, self.nqubits),
            "l2": (self.nclasses,),
        }


@dataclass
class GeneratedParams:
    """Candidate parameters with the raw text and provenance they came from."""

    l0: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    raw_text: str
    provenance: str

    def to_qnn_params(self) -> QnnParams:
        return QnnParams.from_arrays(self.l0, self.l1, self.l2)


def _load_template() -> str:
    return (
        importlib.resources.files("bplab")
        .joinpath("assets/prompt_template.txt")
        .read_text(encoding="utf-8")
    )


PROMPT_TEMPLATE = _load_template()

_PLACEHOLDERS = ("nlayers", "nqubits", "nrot", "nclasses", "init",
                 "data_desc", "feedback")


def build_prompt(ctx: PromptContext) -> str:
    """Render the template; a total function (empty fields render empty)."""
    values = {
        "nlayers": str(ctx.nlayers),
        "nqubits": str(ctx.nqubits),
        "nrot": str(ctx.nrot),
        "nclasses": str(ctx.nclasses),
        "init": ctx.init_family,
        "data_desc": ctx.data_desc,
        "feedback": ctx.feedback,
    }
    text = PROMPT_TEMPLATE
    # Targeted token replacement: the template legitimately contains literal
    # braces (the dictionary sketch), so str.format would choke on it.
    for name in _PLACEHOLDERS:
        text = text.replace("{" + name + "}", values[name])
    return text


def summarize_feedback(theta0: np.ndarray, variance: float, s_prev: float) -> str:
    """One-line summary of an accepted candidate for the next prompt."""
    t = np.asarray(theta0, dtype=float)
    return (
        f"previous l0 stats: mean={t.mean():.4f}, std={t.std():.4f}, "
        f"min={t.min():.4f}, max={t.max():.4f}; "
        f"gradient variance={variance:.6e}; previous best={s_prev:.6e}"
    )


# ---------------------------------------------------------------------------
# Wire client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout: float = 60.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    max_output_tokens: int = MAX_OUTPUT_TOKENS


def request_generation(endpoint: EndpointConfig, prompt: str,
                       temperature: float, top_p: float,
                       session: requests.Session | None = None,
                       sleep=time.sleep) -> str:
    """POST a chat-completion request; return the assistant text.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff up to ``max_attempts``; authentication failures are
    not retried.  Credentials are sent only in the Authorization header and
    never logged.
    """
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    payload = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": temperature,
        "top_p": top_p,
        "max_tokens": endpoint.max_output_tokens,
    }
    http = session or requests.Session()
    last_error: RequestError | None = None
    for attempt in range(endpoint.max_attempts):
        if attempt:
            delay = endpoint.backoff_seconds * 2 ** (attempt - 1)
            logger.debug("retrying %s in %.2fs (attempt %d)", url, delay, attempt + 1)
            sleep(delay)
        try:
            resp = http.post(url, json=payload, headers=headers,
                             timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_error = NetworkError(f"request to {url} failed: {exc}")
            logger.warning("network failure talking to %s: %s", url, exc)
            continue
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"endpoint {url} rejected the credential "
                                      f"(HTTP {resp.status_code})")
        if resp.status_code == 429:
            last_error = RateLimitError(f"endpoint {url} rate-limited the request")
            logger.warning("rate limited by %s", url)
            continue
        if resp.status_code >= 500:
            last_error = NetworkError(f"endpoint {url} returned HTTP {resp.status_code}")
            logger.warning("server error %d from %s", resp.status_code, url)
            continue
        if resp.status_code != 200:
            raise NetworkError(f"endpoint {url} returned HTTP {resp.status_code}")
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"response from {url} is missing assistant content: {exc}"
            ) from exc
        if content is None:
            raise MalformedResponseError(f"response from {url} has null content")
        return content
    assert last_error is not None
    raise last_error


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------


def _strip_to_dict_literal(text: str) -> str:
    for fence in _CODE_FENCES:
        text = text.replace(fence, "")
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end < start:
        raise ParseError("no dictionary literal found in response text")
    return text[start:end + 1]


def _described_shape(value) -> tuple | str:
    """Shape of a nested list; a human-readable tag if it is ragged."""
    try:
        arr = np.asarray(value, dtype=float)
    except (ValueError, TypeError):
        return "ragged/non-numeric"
    return arr.shape


def parse_and_validate(raw_text: str, spec: CircuitSpec,
                       num_classes: int,
                       provenance: str = "unknown") -> GeneratedParams:
    """Parse a response into parameters, enforcing exact shapes.

    Code fences and surrounding prose are stripped before parsing.  Raises
    ParseError for unparseable text, ShapeValidationError naming expected vs
    actual shapes, and InvalidValueError for non-finite entries.
    """
    literal = _strip_to_dict_literal(raw_text)
    try:
        obj = ast.literal_eval(literal)
    except (ValueError, SyntaxError) as exc:
        raise ParseError(f"response is not a literal dictionary: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"expected a dictionary, got {type(obj).__name__}")

    ctx_shapes = {
        "l0": spec.theta_shape,
        "l1": (num_classes, spec.num_qubits),
        "l2": (num_classes,),
    }
    arrays = {}
    for name, expected in ctx_shapes.items():
        if name not in obj:
            raise ShapeValidationError(name, expected, "missing")
        actual = _described_shape(obj[name])
        if actual != expected:
            raise ShapeValidationError(name, expected, actual)
        arr = np.asarray(obj[name], dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidValueError(f"{name} contains non-finite values")
        arrays[name] = arr
    return GeneratedParams(arrays["l0"], arrays["l1"], arrays["l2"],
                           raw_text=raw_text, provenance=provenance)


def render_params_text(l0: np.ndarray, l1: np.ndarray, l2: np.ndarray) -> str:
    """Dictionary literal for a parameter set; parses back to the same values."""
    return repr({"l0": l0.tolist(), "l1": l1.tolist(), "l2": l2.tolist()})


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

# Prior families the surrogate understands, mapped onto angle-scale supports.
_SURROGATE_PRIORS = {
    "uniform": InitSpec("uniform"),
    "normal": InitSpec("normal"),
    "beta": InitSpec("beta", scale_to=(0.0, math.pi)),
    "gainit": InitSpec("gainit"),
    "beinit": InitSpec("beinit"),
}


def surrogate_generate(ctx: PromptContext, rng: np.random.Generator,
                       previous_best: QnnParams | None = None,
                       sigma: float = 0.3) -> GeneratedParams:
    """Offline proposal: prior draw, or a Gaussian perturbation of the best.

    Without feedback the candidate is an i.i.d. draw from the context's init
    family.  With a previous best, every array is jittered with N(0, sigma^2)
    noise, a local proposal whose probability of improving the objective is
    strictly positive.
    """
    if previous_best is None:
        prior = _SURROGATE_PRIORS.get(ctx.init_family)
        if prior is None:
            raise GeneratorError(f"surrogate has no prior for family "
                                 f"{ctx.init_family!r}")
        l0 = sample_array(prior, (ctx.nlayers, ctx.nqubits, ctx.nrot), rng,
                          num_layers=ctx.nlayers)
        l1 = sample_array(prior, (ctx.nclasses, ctx.nqubits), rng,
                          num_layers=ctx.nlayers)
        l2 = sample_array(prior, (ctx.nclasses,), rng, num_layers=ctx.nlayers)
        origin = f"surrogate:prior-{ctx.init_family}"
    else:
        l0 = previous_best.theta0 + sigma * rng.standard_normal(
            previous_best.theta0.shape)
        l1 = previous_best.head_weights + sigma * rng.standard_normal(
            previous_best.head_weights.shape)
        l2 = previous_best.head_bias + sigma * rng.standard_normal(
            previous_best.head_bias.shape)
        origin = f"surrogate:perturb(sigma={sigma})"
    return GeneratedParams(l0, l1, l2, raw_text=render_params_text(l0, l1, l2),
                           provenance=origin)


class SurrogateGenerator:
    """Stateful wrapper around :func:`surrogate_generate` with one rng stream."""

    def __init__(self, seed: int, sigma: float = 0.3):
        self._rng = np.random.default_rng(seed)
        self.sigma = sigma

    def generate(self, ctx: PromptContext,
                 previous_best: QnnParams | None = None) -> GeneratedParams:
        return surrogate_generate(ctx, self._rng, previous_best, self.sigma)


class LlmGenerator:
    """Chat-completion backed generator speaking the OpenAI wire format."""

    def __init__(self, endpoint: EndpointConfig,
                 session: requests.Session | None = None, sleep=time.sleep):
        self.endpoint = endpoint
        self._session = session
        self._sleep = sleep

    def generate(self, ctx: PromptContext,
                 previous_best: QnnParams | None = None) -> GeneratedParams:
        prompt = build_prompt(ctx)
        raw = request_generation(self.endpoint, prompt, ctx.temperature,
                                 ctx.top_p, session=self._session,
                                 sleep=self._sleep)
        spec = CircuitSpec(ctx.nlayers, ctx.nqubits, ctx.nrot)
        return parse_and_validate(
            raw, spec, ctx.nclasses,
            provenance=f"llm:{self.endpoint.model}@{self.endpoint.base_url}",
        )


class ConformingMockGenerator:
    """Emits correctly shaped dictionary text; exercises the full parse path."""

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def generate(self, ctx: PromptContext,
                 previous_best: QnnParams | None = None) -> GeneratedParams:
        two_pi = 2 * math.pi
        l0 = np.round(self._rng.uniform(0, two_pi,
                                        (ctx.nlayers, ctx.nqubits, ctx.nrot)), 4)
        l1 = np.round(self._rng.uniform(0, two_pi, (ctx.nclasses, ctx.nqubits)), 4)
        l2 = np.round(self._rng.uniform(0, two_pi, (ctx.nclasses,)), 4)
        text = render_params_text(l0, l1, l2)
        spec = CircuitSpec(ctx.nlayers, ctx.nqubits, ctx.nrot)
        return parse_and_validate(text, spec, ctx.nclasses, provenance="mock:conforming")


class ShapeMutatingMockGenerator:
    """Emits a dictionary whose l0 drops the qubit axis; always rejected."""

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def generate(self, ctx: PromptContext,
                 previous_best: QnnParams | None = None) -> GeneratedParams:
        l0 = np.round(self._rng.uniform(0, 2 * math.pi,
                                        (ctx.nlayers, ctx.nrot)), 4)
        l1 = np.round(self._rng.uniform(0, 2 * math.pi,
                                        (ctx.nclasses, ctx.nqubits)), 4)
        l2 = np.round(self._rng.uniform(0, 2 * math.pi, (ctx.nclasses,)), 4)
        text = render_params_text(l0, l1, l2)
        spec = CircuitSpec(ctx.nlayers, ctx.nqubits, ctx.nrot)
        return parse_and_validate(text, spec, ctx.nclasses, provenance="mock:mutant")


# ---------------------------------------------------------------------------
# Shape-accuracy harness
# ---------------------------------------------------------------------------


def sweep_configurations() -> list[tuple[int, int]]:
    """The 20 (layers, qubits) pairs of the benchmark grid."""
    return [(2, n) for n in range(2, 21, 2)] + [(l, 2) for l in range(4, 41, 4)]


def shape_accuracy(generator, num_classes: int = 2,
                   configs: list[tuple[int, int]] | None = None,
                   base_ctx: PromptContext | None = None
                   ) -> tuple[float, list[dict]]:
    """Fraction of grid configurations for which generation has exact shapes.

    Returns (score, per-configuration detail records).  Any GeneratorError
    counts as a miss for that configuration; other exceptions propagate.
    """
    if configs is None:
        configs = sweep_configurations()
    details = []
    hits = 0
    for layers, qubits in configs:
        ctx = PromptContext(
            nlayers=layers, nqubits=qubits, nclasses=num_classes,
            init_family=base_ctx.init_family if base_ctx else "uniform",
            data_desc=base_ctx.data_desc if base_ctx else "",
            temperature=base_ctx.temperature if base_ctx else 1.0,
            top_p=base_ctx.top_p if base_ctx else 1.0,
        )
        record = {"layers": layers, "qubits": qubits, "accepted": False, "error": ""}
        try:
            gp = generator.generate(ctx)
            expected = ctx.shapes
            for name in ("l0", "l1", "l2"):
                actual = getattr(gp, name).shape
                if actual != expected[name]:
                    raise ShapeValidationError(name, expected[name], actual)
            record["accepted"] = True
            hits += 1
        except GeneratorError as exc:
            record["error"] = str(exc)
        details.append(record)
    return hits / len(configs), details
