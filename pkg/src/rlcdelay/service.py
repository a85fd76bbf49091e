"""Bulk service time as a chain of rank-raising stages.

While the receiver holds rank r, each slot raises the rank with probability
``g_r = q * p_r``: the packet must survive the channel (``q``) and be
innovative (``p_r``).  The service time of a size-k bulk is therefore the
independent sum of k geometric stage times, and its generating function is

    b_k(w) = prod_r  g_r w / (1 - (1 - g_r) w).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRank, PoleProximity
from .gf import BAD, CODING_MODES, GOOD, INFINITE

POLE_TOLERANCE = 1e-9


def useful_probability(field, k, r, mode=GOOD):
    """Probability that a fresh coded packet raises the rank from r to r + 1."""
    if k < 1:
        raise ValueError("bulk size must be at least 1")
    if not 0 <= r <= k:
        raise InvalidRank(f"rank {r} outside [0, {k}]")
    if mode not in CODING_MODES:
        raise ValueError(f"coding mode must be one of {CODING_MODES}")
    if r == k:
        return 0.0
    if field.is_infinite:
        return 1.0
    Q = field.order
    # exact integer arithmetic; Q**k overflows floats long before it overflows ints
    num = Q**k - Q**r
    den = Q**k if (mode == BAD and k >= 2) else Q**k - 1
    return num / den


@dataclass(frozen=True)
class ServiceTimeModel:
    """Service time X_k of a size-k bulk.

    ``stages[r]`` is the per-slot probability of moving from rank r to r + 1.
    """

    stages: tuple
    k: int
    q: float
    field: object = INFINITE
    mode: str = GOOD

    def __post_init__(self):
        if len(self.stages) != self.k:
            raise ValueError("need exactly one stage per rank")
        if any(not 0 < g <= 1 for g in self.stages):
            raise ValueError("stage probabilities must lie in (0, 1]")

    @property
    def mean(self):
        return moments(self)[0]

    def pgf(self, w):
        return pgf_eval(self, w)

    def pgf_derivative(self, w):
        return pgf_derivative(self, w)

    def sample(self, rng):
        return sample_service_time(self, rng)


def build_model(q, field, k, mode=GOOD):
    if not 0 < q <= 1:
        raise ValueError("channel success probability q must lie in (0, 1]")
    if k < 1:
        raise ValueError("bulk size must be at least 1")
    stages = tuple(q * useful_probability(field, k, r, mode) for r in range(k))
    return ServiceTimeModel(stages, k, q, field, mode)


def model_family(q, field, K, mode=GOOD):
    """Models for bulk sizes 0..K; size 0 reuses the size-1 model."""
    models = [build_model(q, field, k, mode) for k in range(1, K + 1)]
    return (models[0], *models)


def _check_poles(model, w):
    for g in model.stages:
        if g < 1 and abs(w - 1.0 / (1.0 - g)) < POLE_TOLERANCE:
            raise PoleProximity(f"w={w} is within {POLE_TOLERANCE} of the pole 1/(1-{g})")


def pgf_eval(model, w):
    _check_poles(model, w)
    out = 1.0 + 0j if isinstance(w, complex) else 1.0
    for g in model.stages:
        out *= g * w / (1.0 - (1.0 - g) * w)
    return out


def pgf_derivative(model, w):
    """d b_k / dw by the product rule over stage factors (finite at w = 0)."""
    _check_poles(model, w)
    factors = [g * w / (1.0 - (1.0 - g) * w) for g in model.stages]
    derivs = [g / (1.0 - (1.0 - g) * w) ** 2 for g in model.stages]
    total = 0.0
    for r in range(len(factors)):
        term = derivs[r]
        for s, f in enumerate(factors):
            if s != r:
                term *= f
        total += term
    return total


def moments(model):
    """Return ``(E[X], E[X(X-1)])``."""
    g = np.asarray(model.stages, dtype=float)
    mean = float(np.sum(1.0 / g))
    variance = float(np.sum((1.0 - g) / g**2))
    return mean, variance + mean * mean - mean


def variance(model):
    g = np.asarray(model.stages, dtype=float)
    return float(np.sum((1.0 - g) / g**2))


def sample_service_time(model, rng, size=None):
    """Slots needed to deliver the bulk; sum of one geometric draw per stage."""
    if size is None:
        return int(sum(rng.geometric(g) for g in model.stages))
    return sum(rng.geometric(g, size=size) for g in model.stages)
