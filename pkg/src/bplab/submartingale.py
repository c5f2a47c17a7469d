"""Monte Carlo validation of the gated-increment process guarantees.

The search loop's running maximum is modeled synthetically: i.i.d. candidate
improvements Delta with acceptance indicator I = 1{Delta >= alpha}, where
alpha is the gate level and p = P(Delta >= alpha).  The quantities validated
here, independently of any quantum simulation, are

- the per-step drift lower bound  E[Delta * I] >= alpha * p,
- the expected-hitting-time bound E[T_b] <= b / (alpha * p)  for the first
  time the running sum reaches a level b,
- the two corollary threshold choices b = 1/poly(N, L) (bound K/p) and
  b = B_S, the supremum observed in a pilot run (bound B_S * poly * K / p).

Hitting uses the ">= b" convention: with continuous increments, exact
equality is a measure-zero event, and ">=" preserves the inequality
direction of the bound.  Trials are embarrassingly parallel; per-trial
generators are spawned from the process seed so aggregation order is
irrelevant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .adainit import poly_n6
from .qnn import CircuitSpec

DEFAULT_MAX_STEPS = 1_000_000
_CENSORED_LIMIT = 0.01  # reports above this censored fraction are inconclusive


@dataclass(frozen=True)
class IncrementProcess:
    """i.i.d. improvement draws with a gate level and nominal acceptance rate.

    ``sampler(rng, size)`` draws raw improvements; ``p`` is the nominal
    probability that a draw clears ``alpha``.  ``sup_delta`` (when the law is
    bounded) enables exact boundedness checks.
    """

    alpha: float
    p: float
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    seed: int = 0
    sup_delta: float | None = None
    label: str = ""

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    # -- factories ----------------------------------------------------------

    @classmethod
    def uniform(cls, alpha: float, low: float, high: float,
                seed: int = 0) -> "IncrementProcess":
        """Delta ~ Uniform[low, high]; p follows from the overlap with [alpha, inf)."""
        if not low < high:
            raise ValueError("need low < high")
        p = min(1.0, max(0.0, (high - alpha) / (high - low)))
        return cls(alpha, p, lambda rng, n: rng.uniform(low, high, n),
                   seed=seed, sup_delta=high,
                   label=f"uniform[{low:g},{high:g}]")

    @classmethod
    def point_mass(cls, alpha: float, value: float, seed: int = 0) -> "IncrementProcess":
        """Deterministic Delta = value (p is 1 or 0 depending on the gate)."""
        p = 1.0 if value >= alpha else 0.0
        return cls(alpha, p, lambda rng, n: np.full(n, value),
                   seed=seed, sup_delta=value, label=f"point({value:g})")

    @classmethod
    def bernoulli_mixture(cls, alpha: float, p: float,
                          accept: tuple[float, float] | float,
                          reject: tuple[float, float] | float = 0.0,
                          seed: int = 0) -> "IncrementProcess":
        """With probability p draw from ``accept`` (support >= alpha), else
        from ``reject`` (support < alpha).  Scalars mean point masses."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

        def bounds(side, lo_ok, name):
            if isinstance(side, tuple):
                lo, hi = side
            else:
                lo = hi = float(side)
            if not lo_ok(lo) or not lo_ok(hi):
                raise ValueError(f"{name} support must stay on its side of alpha")
            return lo, hi

        a_lo, a_hi = bounds(accept, lambda x: x >= alpha, "accept")
        r_lo, r_hi = bounds(reject, lambda x: x < alpha, "reject")

        def draw(rng, n):
            take = rng.random(n) < p
            out = np.where(take,
                           rng.uniform(a_lo, a_hi, n) if a_lo < a_hi else a_lo,
                           rng.uniform(r_lo, r_hi, n) if r_lo < r_hi else r_lo)
            return out

        return cls(alpha, p, draw, seed=seed, sup_delta=a_hi,
                   label=f"mixture(p={p:g}, accept=[{a_lo:g},{a_hi:g}])")

    @classmethod
    def exponential(cls, alpha: float, mean: float, seed: int = 0) -> "IncrementProcess":
        """Delta ~ Exponential(mean); p = exp(-alpha / mean)."""
        if mean <= 0:
            raise ValueError("mean must be > 0")
        p = math.exp(-alpha / mean)
        return cls(alpha, p, lambda rng, n: rng.exponential(mean, n),
                   seed=seed, sup_delta=None, label=f"exp(mean={mean:g})")

    # -- sampling -----------------------------------------------------------

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed,
                                                            spawn_key=(stream,)))

    def draw(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = self.rng()
        return np.asarray(self.sampler(rng, n), dtype=float)


def simulate_trajectory(process: IncrementProcess, steps: int,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Running sum of gated increments over ``steps`` draws; non-decreasing."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    deltas = process.draw(steps, rng)
    gated = np.where(deltas >= process.alpha, deltas, 0.0)
    return np.cumsum(gated)


# The public name mirrors the quantity it simulates.
simulate_S = simulate_trajectory


@dataclass
class DriftCheck:
    passed: bool
    empirical_mean: float
    lower_bound: float       # alpha * p
    stderr: float
    margin: float            # empirical_mean - (lower_bound - 3 * stderr)
    n_samples: int
    label: str = ""


def drift_lower_bound_check(process: IncrementProcess,
                            n_samples: int) -> DriftCheck:
    """Check E[Delta * I] >= alpha * p within three standard errors.

    A 1e-12 relative slack on the comparison absorbs summation rounding in
    the degenerate equality case (a point mass at alpha has zero variance,
    so its three-standard-error band cannot cover the mean's own ulp-level
    rounding).
    """
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples for a stable check")
    deltas = process.draw(n_samples)
    gated = np.where(deltas >= process.alpha, deltas, 0.0)
    mean = float(gated.mean())
    stderr = float(gated.std(ddof=1) / math.sqrt(n_samples))
    bound = process.alpha * process.p
    margin = mean - (bound - 3.0 * stderr)
    return DriftCheck(passed=margin >= -1e-12 * abs(bound), empirical_mean=mean,
                      lower_bound=bound, stderr=stderr, margin=margin,
                      n_samples=n_samples, label=process.label)


@dataclass
class HittingTimeReport:
    b: float
    trials: int
    hitting_times: np.ndarray      # censored entries hold max_steps
    censored: int
    empirical_mean: float          # censored counted at max_steps (an underestimate)
    theorem_bound: float           # b / (alpha * p)
    bound_satisfied: bool
    conclusive: bool
    mean_ci99_lower: float

    @property
    def all_censored(self) -> bool:
        return self.censored == self.trials

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "trials": self.trials,
            "censored": self.censored,
            "empirical_mean": self.empirical_mean,
            "theorem_bound": self.theorem_bound,
            "bound_satisfied": self.bound_satisfied,
            "conclusive": self.conclusive,
            "mean_ci99_lower": self.mean_ci99_lower,
        }


def hitting_time(process: IncrementProcess, b: float,
                 max_steps: int = DEFAULT_MAX_STEPS, trials: int = 100,
                 block: int = 4096) -> HittingTimeReport:
    """First time the running sum reaches b, across independent trials.

    The empirical mean is compared against b / (alpha * p) one-sidedly at
    99%: the check fails only when even the lower confidence limit of the
    mean exceeds the bound.  Trials that never hit within ``max_steps`` are
    censored at that value (making the mean an underestimate), and a report
    with more than 1% censoring is marked inconclusive.

    The hit test allows a 1e-9 relative slack below b: sequential float
    summation can land a deterministic staircase (for example ten steps of
    0.1 toward b = 1) one ulp short of the level it reaches in exact
    arithmetic, and the slack absorbs exactly that rounding.
    """
    if b <= 0:
        raise ValueError("b must be > 0")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    level = b * (1.0 - 1e-9)
    times = np.full(trials, max_steps, dtype=np.int64)
    censored = 0
    for trial in range(trials):
        rng = process.rng(stream=trial)
        total = 0.0
        step = 0
        hit = False
        while step < max_steps:
            n = min(block, max_steps - step)
            deltas = process.draw(n, rng)
            gated = np.where(deltas >= process.alpha, deltas, 0.0)
            path = total + np.cumsum(gated)
            reached = np.nonzero(path >= level)[0]
            if reached.size:
                times[trial] = step + int(reached[0]) + 1  # steps are 1-based
                hit = True
                break
            total = path[-1]
            step += n
        if not hit:
            censored += 1

    mean = float(times.mean())
    bound = b / (process.alpha * process.p) if process.p > 0 else math.inf
    if trials > 1 and times.std(ddof=1) > 0:
        t_crit = stats.t.ppf(0.99, df=trials - 1)
        ci_lower = mean - t_crit * float(times.std(ddof=1)) / math.sqrt(trials)
    else:
        ci_lower = mean
    conclusive = censored / trials <= _CENSORED_LIMIT
    return HittingTimeReport(
        b=b, trials=trials, hitting_times=times, censored=censored,
        empirical_mean=mean, theorem_bound=bound,
        bound_satisfied=bool(conclusive and ci_lower <= bound),
        conclusive=conclusive, mean_ci99_lower=float(ci_lower),
    )


@dataclass
class CorollaryReport:
    case: str
    b: float
    stated_bound: float
    hitting: HittingTimeReport

    def to_dict(self) -> dict:
        d = self.hitting.to_dict()
        d.update({"case": self.case, "stated_bound": self.stated_bound})
        return d


def corollary_cases(spec: CircuitSpec, k: int, p: float, trials: int,
                    seed: int = 0, poly=poly_n6,
                    process: IncrementProcess | None = None,
                    pilot_steps: int | None = None,
                    max_steps: int = DEFAULT_MAX_STEPS
                    ) -> tuple[CorollaryReport, CorollaryReport]:
    """Validate the two named threshold choices by Monte Carlo.

    Case one targets b = 1/poly(N, L) with stated bound K/p; case two targets
    the supremum of a pilot trajectory, with stated bound B_S*poly*K/p.  The
    default increment law accepts into Uniform[alpha, 2*alpha].
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    poly_value = poly(spec.num_qubits, spec.num_layers)
    alpha = 1.0 / (poly_value * k)
    if process is None:
        process = IncrementProcess.bernoulli_mixture(
            alpha, p, accept=(alpha, 2 * alpha), reject=(0.0, alpha * 0.999),
            seed=seed)

    b_one = 1.0 / poly_value
    report_one = CorollaryReport(
        case="b=1/poly", b=b_one, stated_bound=k / p,
        hitting=hitting_time(process, b_one, max_steps=max_steps, trials=trials),
    )

    if pilot_steps is None:
        pilot_steps = max(1, int(10 * k / p))
    pilot = simulate_trajectory(process, pilot_steps,
                                rng=process.rng(stream=10_000_019))
    b_sup = float(pilot[-1])  # trajectories are non-decreasing
    if b_sup <= 0:
        raise ValueError("pilot run never accepted; cannot set a supremum threshold")
    report_sup = CorollaryReport(
        case="b=B_S", b=b_sup, stated_bound=b_sup * poly_value * k / p,
        hitting=hitting_time(process, b_sup, max_steps=max_steps, trials=trials),
    )
    return report_one, report_sup
