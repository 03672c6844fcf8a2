"""Seeded random-variate primitives and a univariate slice sampler.

Every draw goes through an explicit :class:`RngHandle`; there is no module or
global generator state. One handle belongs to exactly one chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateWeightsError, InvalidStateError, ParameterDomainError

# Positive floor applied to gamma variates so that extreme shapes (e.g. the
# 1e-3 reference-prior setting) can never underflow to exactly zero.
_GAMMA_FLOOR = 1e-300


class RngHandle:
    """A seeded pseudo-random generator confined to one chain.

    Identical seeds produce bit-identical draw sequences. The internal state
    is serializable, so a chain can be checkpointed and resumed exactly.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def get_state(self) -> dict:
        return {"seed": self.seed, "bit_generator": self.generator.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict) -> "RngHandle":
        handle = cls(state["seed"])
        handle.generator.bit_generator.state = state["bit_generator"]
        return handle


@dataclass(frozen=True)
class UnnormalizedLogDensity:
    """Log of an unnormalized density on a closed interval [lo, hi]."""

    evaluator: Callable[[float], float]
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterDomainError(f"empty support [{self.lo}, {self.hi}]")

    def __call__(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return -math.inf
        return float(self.evaluator(x))


def draw_gamma(shape: float, rate: float, rng: RngHandle) -> float:
    """Draw from Gamma(shape, rate) with density proportional to x^(shape-1) e^(-rate x).

    Valid for arbitrarily small shapes: for shape < 1 the draw is boosted
    through Gamma(shape+1) and scaled by U^(1/shape), which keeps the result
    strictly positive where a direct draw would underflow.
    """
    if not (shape > 0 and rate > 0) or not (math.isfinite(shape) and math.isfinite(rate)):
        raise ParameterDomainError(f"gamma parameters must be positive, got ({shape}, {rate})")
    gen = rng.generator
    if shape >= 1.0:
        value = gen.standard_gamma(shape) / rate
    else:
        # log-space boost: X = G(shape+1) * U^(1/shape)
        g = gen.standard_gamma(shape + 1.0)
        u = gen.random()
        while u <= 0.0:  # pragma: no cover - random() is in [0, 1)
            u = gen.random()
        log_value = math.log(g) + math.log(u) / shape - math.log(rate)
        value = math.exp(log_value)
    return max(value, _GAMMA_FLOOR)


def draw_beta(a: float, b: float, rng: RngHandle) -> float:
    """Draw from Beta(a, b)."""
    if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise ParameterDomainError(f"beta parameters must be positive, got ({a}, {b})")
    value = float(rng.generator.beta(a, b))
    # keep strictly inside (0, 1): downstream geometric weights need both tails open
    eps = 1e-15
    return min(max(value, eps), 1.0 - eps)


def draw_dirichlet(alpha: np.ndarray, rng: RngHandle) -> np.ndarray:
    """Draw a probability vector from Dirichlet(alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ParameterDomainError("alpha must be a non-empty vector")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise ParameterDomainError(f"alpha entries must be positive, got {alpha}")
    g = rng.generator.standard_gamma(alpha)
    g = np.maximum(g, _GAMMA_FLOOR)
    return g / g.sum()


def draw_categorical(weights: np.ndarray, rng: RngHandle) -> int:
    """Draw a zero-based index with probability proportional to ``weights``.

    Weights need not be normalized; the draw is scale-invariant.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise DegenerateWeightsError("weights must be a non-empty vector")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise DegenerateWeightsError(f"weights must be finite and non-negative, got {weights}")
    total = weights.sum()
    if total <= 0:
        raise DegenerateWeightsError("all weights are zero")
    cumulative = np.cumsum(weights)
    u = rng.generator.random() * total
    return int(min(np.searchsorted(cumulative, u, side="right"), weights.size - 1))


def draw_truncated_geometric(lam: float, min_value: int, rng: RngHandle) -> int:
    """Draw N with P{N = r} = lam (1 - lam)^(r - min_value) for r >= min_value.

    Sampled by inversion on the closed-form tail CDF, O(1) and exact.
    """
    if not (0.0 < lam < 1.0):
        raise ParameterDomainError(f"lambda must lie in (0, 1), got {lam}")
    if min_value < 1:
        raise ParameterDomainError(f"min_value must be >= 1, got {min_value}")
    u = rng.generator.random()
    # floor(log(1-u) / log(1-lam)) is a Geometric(lam) variate on {0, 1, ...}
    offset = math.floor(math.log1p(-u) / math.log1p(-lam)) if u > 0.0 else 0
    return int(min_value) + int(offset)


def slice_sample_1d(
    target: UnnormalizedLogDensity,
    current: float,
    width: float,
    max_stepout: int,
    rng: RngHandle,
) -> float:
    """One stepping-out/shrinkage slice-sampling transition.

    The stepping-out interval is expanded by at most ``max_stepout`` widths in
    total (split randomly between the two sides, Neal 2003) and is always
    clipped to the support of ``target``. Leaves the normalized target
    invariant; suitable for the multimodal polynomial-exponent targets of the
    initial-condition and interior out-of-sample kernels.
    """
    if width <= 0:
        raise ParameterDomainError(f"width must be positive, got {width}")
    gen = rng.generator
    log_fx = target(current)
    if not math.isfinite(log_fx):
        raise InvalidStateError(f"non-finite log-density {log_fx} at current point {current}")

    # vertical level: log u + log f(x) with u in (0, 1]
    log_y = log_fx + math.log1p(-gen.random())

    # stepping out, clipped to the support interval
    left = current - width * gen.random()
    right = left + width
    steps_left = int(math.floor(max_stepout * gen.random()))
    steps_right = max_stepout - 1 - steps_left
    while steps_left > 0 and left > target.lo and target(left) > log_y:
        left -= width
        steps_left -= 1
    while steps_right > 0 and right < target.hi and target(right) > log_y:
        right += width
        steps_right -= 1
    left = max(left, target.lo)
    right = min(right, target.hi)

    # shrinkage
    while True:
        proposal = left + gen.random() * (right - left)
        if target(proposal) > log_y:
            return proposal
        if proposal < current:
            left = proposal
        else:
            right = proposal
        if right - left < 1e-300:
            return current
