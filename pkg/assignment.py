#!/usr/bin/env python3
"""
Nearest-Open-Site Assignment
Given the open sites, each block is served by its nearest one; the solvers
score site selections through the resulting distance vectors
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from city_model import Instance, require_valid
from kolm_pollak import KappaContext, LinearProxy, proxy_to_ede


class EmptyOpenSet(ValueError):
    """No site would be open: a greenfield instance needs at least one new site"""


class Objective(str, Enum):
    KOLM_POLLAK = 'kolm_pollak'
    MEAN = 'mean'

    @classmethod
    def parse(cls, value) -> 'Objective':
        if isinstance(value, cls):
            return value
        normalized = str(value).strip().lower().replace('-', '_')
        try:
            return cls(normalized)
        except ValueError:
            choices = ', '.join(o.value for o in cls)
            raise ValueError(f"Unknown objective '{value}'. Must be one of: {choices}") from None


@dataclass(frozen=True)
class OpenSet:
    """Open site indices, ascending; always includes every existing site"""
    open_sites: Tuple[int, ...]

    @classmethod
    def with_new_sites(cls, instance: Instance, new_sites: Iterable[int]) -> 'OpenSet':
        return cls.validated(instance, set(instance.existing_indices.tolist()) | set(new_sites))

    @classmethod
    def validated(cls, instance: Instance, sites: Iterable[int]) -> 'OpenSet':
        chosen = tuple(sorted(int(s) for s in set(sites)))
        if not chosen:
            raise EmptyOpenSet("open set is empty; instance has no existing sites and none were added")
        n_sites = len(instance.sites)
        out_of_range = [s for s in chosen if not 0 <= s < n_sites]
        if out_of_range:
            raise ValueError(f"site indices out of range: {out_of_range}")
        missing = set(instance.existing_indices.tolist()) - set(chosen)
        if missing:
            raise ValueError(f"existing sites must stay open; missing: {sorted(missing)}")
        return cls(chosen)

    @property
    def as_array(self) -> np.ndarray:
        return np.array(self.open_sites, dtype=int)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Per-block chosen site index and the matching distance (meters)"""
    sites: np.ndarray
    distances: np.ndarray


def assign_nearest(instance: Instance, open_set: OpenSet) -> Assignment:
    """Assign each block to its nearest open site; ties go to the lowest site index"""
    require_valid(instance)
    columns = open_set.as_array
    sub = instance.distances[:, columns]
    # argmin returns the first minimum and columns are ascending
    picks = sub.argmin(axis=1)
    rows = np.arange(sub.shape[0])
    return Assignment(sites=columns[picks], distances=sub[rows, picks])


class ObjectiveEvaluator:
    """
    Scores site selections for one instance and objective.

    Only populated blocks enter the math. Kolm-Pollak scores are the natural
    log of the linear proxy (finite at any distance scale); mean scores are
    the population-weighted distance sum. Lower is better for both.
    """

    def __init__(self, instance: Instance, ctx: Optional[KappaContext], objective):
        require_valid(instance)
        self.instance = instance
        self.objective = Objective.parse(objective)
        if self.objective is Objective.KOLM_POLLAK and ctx is None:
            raise ValueError("the Kolm-Pollak objective needs a KappaContext")
        self.ctx = ctx
        mask = instance.populations > 0
        self.populations = instance.populations[mask]
        self.distances = instance.distances[mask]
        self.existing = instance.existing_indices
        self.candidates = instance.candidate_indices
        if self.existing.size:
            self.base = self.distances[:, self.existing].min(axis=1)
        else:
            self.base = np.full(self.distances.shape[0], np.inf)

    def z_for(self, new_sites: Sequence[int]) -> np.ndarray:
        """Nearest-open distances with the existing sites plus new_sites open"""
        if len(new_sites) == 0:
            return self.base.copy()
        return np.minimum(self.base, self.distances[:, list(new_sites)].min(axis=1))

    def z_allowed(self, allowed: Sequence[int]) -> np.ndarray:
        """Nearest distances over an arbitrary column subset"""
        return self.distances[:, list(allowed)].min(axis=1)

    def score(self, z: np.ndarray) -> float:
        if self.objective is Objective.MEAN:
            return float(np.dot(self.populations, z))
        return float(logsumexp(-self.ctx.kappa * z, b=self.populations))

    def score_columns(self, Z: np.ndarray) -> np.ndarray:
        """Score every column of a (blocks x options) distance matrix"""
        if self.objective is Objective.MEAN:
            return self.populations @ Z
        return logsumexp(-self.ctx.kappa * Z, b=self.populations[:, None], axis=0)

    def score_selection(self, new_sites: Sequence[int]) -> float:
        return self.score(self.z_for(new_sites))

    def to_ede(self, score: float) -> float:
        """EDE meters for a Kolm-Pollak score, weighted mean meters for a mean score"""
        if self.objective is Objective.MEAN:
            return score / float(self.populations.sum())
        return proxy_to_ede(LinearProxy(score), self.ctx)

    def improves(self, new: float, current: float, rel_tol: float = 1e-12) -> bool:
        return new < current - rel_tol * max(1.0, abs(current))


def objective_of(open_set: OpenSet, instance: Instance, ctx: Optional[KappaContext],
                 objective) -> Union[LinearProxy, float]:
    """
    Objective of an open set: the LinearProxy of the assigned distances
    (kolm_pollak; `proxy_to_ede` gives EDE meters) or the population-weighted
    distance sum (mean). Lower is better for both.
    """
    evaluator = ObjectiveEvaluator(instance, ctx, objective)
    score = evaluator.score(evaluator.z_allowed(open_set.open_sites))
    if evaluator.objective is Objective.KOLM_POLLAK:
        return LinearProxy(score)
    return score
