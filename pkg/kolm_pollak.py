#!/usr/bin/env python3
"""
Kolm-Pollak Equally Distributed Equivalent (EDE)
Inequality-penalized access metrics, the linear proxy used by the solvers,
and conversions between proxy space and EDE meters
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = -1.0
TYPICAL_AVERSION_RANGE = (0.5, 2.0)
FOOD_DESERT_DISTANCE_M = 1609.344  # one mile
QUARTILE_FRACTIONS = (0.25, 0.5, 0.75)


class DegenerateDistances(ValueError):
    """Every population-weighted distance is zero: access is already perfect"""


@dataclass(frozen=True)
class KappaContext:
    """
    Inequality-aversion parameters frozen from baseline access.

    kappa = alpha * epsilon; alpha is computed once and reused for every
    objective evaluation in the same planning run.
    """
    epsilon: float
    alpha: float
    kappa: float
    total_population: float

    @classmethod
    def from_baseline(cls, distances, populations, epsilon: float = DEFAULT_EPSILON) -> 'KappaContext':
        if not epsilon < 0:
            raise ValueError(f"epsilon must be negative for distances (got {epsilon})")
        low, high = TYPICAL_AVERSION_RANGE
        if not low <= abs(epsilon) <= high:
            logger.warning(
                "epsilon=%s is outside the typical aversion range |epsilon| in [%s, %s]",
                epsilon, low, high,
            )
        alpha = compute_alpha(distances, populations)
        total = float(np.asarray(populations, dtype=float).sum())
        return cls(epsilon=float(epsilon), alpha=alpha, kappa=alpha * float(epsilon),
                   total_population=total)


@dataclass(frozen=True, order=True)
class LinearProxy:
    """
    Value of sum(p * exp(-kappa * z)) held as its natural log.

    The log form never overflows; `value` gives the plain number and is
    math.inf when that number is beyond float range.
    """
    log_value: float

    @property
    def value(self) -> float:
        try:
            return math.exp(self.log_value)
        except OverflowError:
            return math.inf

    @property
    def overflows(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return self.value


def _positive(distances, populations) -> Tuple[np.ndarray, np.ndarray]:
    z = np.asarray(distances, dtype=float)
    p = np.asarray(populations, dtype=float)
    if z.shape != p.shape:
        raise ValueError(f"distances {z.shape} and populations {p.shape} differ in shape")
    mask = p > 0
    return z[mask], p[mask]


def compute_alpha(distances, populations) -> float:
    """alpha = sum(p z) / sum(p z^2); blocks with z = 0 count as zero terms"""
    z, p = _positive(distances, populations)
    denominator = float(np.sum(p * z * z))
    if denominator <= 0:
        raise DegenerateDistances(
            "every population-weighted distance is 0; access is already perfect (EDE = 0)"
        )
    return float(np.sum(p * z)) / denominator


def log_linear_proxy(distances, populations, ctx: KappaContext) -> float:
    """ln sum(p exp(-kappa z)), evaluated with log-sum-exp"""
    z, p = _positive(distances, populations)
    return float(logsumexp(-ctx.kappa * z, b=p))


def linear_proxy(assigned_distances, populations, ctx: KappaContext) -> LinearProxy:
    """Linear proxy sum(p exp(-kappa z)); monotone in the EDE"""
    _require_negative_kappa(ctx)
    return LinearProxy(log_linear_proxy(assigned_distances, populations, ctx))


def proxy_to_ede(proxy: Union[LinearProxy, float], ctx: KappaContext) -> float:
    """EDE meters for a proxy value: -(1/kappa) ln(proxy / T)"""
    log_proxy = proxy.log_value if isinstance(proxy, LinearProxy) else math.log(proxy)
    return -(log_proxy - math.log(ctx.total_population)) / ctx.kappa


def target_to_bound(target_ede: float, ctx: KappaContext) -> LinearProxy:
    """Proxy-space bound L = T exp(-kappa * target) for an EDE target in meters"""
    if target_ede < 0:
        raise ValueError(f"target EDE must be non-negative (got {target_ede})")
    return LinearProxy(math.log(ctx.total_population) - ctx.kappa * target_ede)


def kolm_pollak_ede(distances, populations, ctx: KappaContext) -> float:
    """Population-weighted Kolm-Pollak EDE in meters"""
    _require_negative_kappa(ctx)
    z, p = _positive(distances, populations)
    if z.size and np.all(z == z[0]):
        return float(z[0])
    lse = float(logsumexp(-ctx.kappa * z, b=p))
    return -(lse - math.log(ctx.total_population)) / ctx.kappa


def weighted_mean(distances, populations) -> float:
    z, p = _positive(distances, populations)
    return float(np.sum(p * z) / np.sum(p))


def weighted_quartiles(distances, populations) -> Tuple[float, float, float]:
    """
    Population-weighted quartiles: value at cumulative population share
    0.25/0.5/0.75 of the sorted distances, lower value at exact boundaries.
    """
    z, p = _positive(distances, populations)
    order = np.argsort(z, kind='stable')
    z, p = z[order], p[order]
    cumulative = np.cumsum(p)
    total = cumulative[-1]
    picks = []
    for fraction in QUARTILE_FRACTIONS:
        index = int(np.searchsorted(cumulative, fraction * total, side='left'))
        picks.append(float(z[min(index, z.size - 1)]))
    return picks[0], picks[1], picks[2]


@dataclass(frozen=True, eq=False)
class AccessProfile:
    """Per-block nearest-amenity distances plus their summary statistics"""
    distances: np.ndarray
    populations: np.ndarray
    ede: float
    weighted_mean: float
    quartiles: Tuple[float, float, float]
    max: float

    @classmethod
    def build(cls, distances, populations, ctx: Optional[KappaContext]) -> 'AccessProfile':
        """
        Summarize a distance vector. ctx may be None only when every
        populated block has the same distance (perfect or uniform access).
        """
        z = np.array(distances, dtype=float)
        p = np.array(populations, dtype=float)
        z.setflags(write=False)
        p.setflags(write=False)
        positive_z, _ = _positive(z, p)
        if ctx is None:
            if not np.all(positive_z == positive_z[0]):
                raise ValueError("a KappaContext is required for non-uniform access")
            ede = float(positive_z[0])
        else:
            ede = kolm_pollak_ede(z, p, ctx)
        return cls(
            distances=z,
            populations=p,
            ede=ede,
            weighted_mean=weighted_mean(z, p),
            quartiles=weighted_quartiles(z, p),
            max=float(positive_z.max()),
        )

    @property
    def median(self) -> float:
        return self.quartiles[1]

    @property
    def inequality_penalty(self) -> float:
        """Kolm-Pollak inequality index: meters the EDE sits above the mean"""
        if math.isinf(self.ede):
            return 0.0
        return self.ede - self.weighted_mean

    @property
    def has_access(self) -> bool:
        """False for the no-access profile of a greenfield city"""
        return math.isfinite(self.ede)

    def share_beyond(self, threshold_m: float) -> float:
        """Population share whose distance exceeds threshold_m"""
        z, p = _positive(self.distances, self.populations)
        return float(p[z > threshold_m].sum() / p.sum())


def _require_negative_kappa(ctx: KappaContext) -> None:
    if not ctx.kappa < 0:
        raise ValueError(f"kappa must be negative for distances (got {ctx.kappa})")
