#!/usr/bin/env python3
"""
Exact Siting Solver
Provably optimal choice of k new sites: exhaustive enumeration for small
budgets, best-first branch-and-bound otherwise
"""

import heapq
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Optional, Tuple

import numpy as np
from scipy.special import comb

from city_model import Instance
from assignment import ObjectiveEvaluator
from heuristic_solver import HeuristicConfig, check_budget, solve_heuristic
from kolm_pollak import KappaContext

logger = logging.getLogger(__name__)

ENUMERATION_CHUNK = 4096
STRATEGIES = ('auto', 'enumerate', 'branch_and_bound')


class Proof(str, Enum):
    OPTIMAL = 'optimal'
    HEURISTIC = 'heuristic'
    LIMIT_REACHED = 'limit_reached'
    # best within optimality_tolerance (relative gap) of the optimum
    WITHIN_TOLERANCE = 'within_tolerance'


@dataclass(frozen=True)
class ExactConfig:
    """
    enumeration_limit caps C(n, k) for the exhaustive path; time_limit is in
    seconds (None = unlimited). optimality_tolerance is a relative gap, 0 = exact.
    """
    enumeration_limit: int = 2_000_000
    node_limit: int = 200_000
    time_limit: Optional[float] = None
    optimality_tolerance: float = 0.0
    strategy: str = 'auto'
    workers: int = 1

    def __post_init__(self):
        if self.enumeration_limit < 1:
            raise ValueError("enumeration_limit must be positive")
        if self.node_limit < 1:
            raise ValueError("node_limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.optimality_tolerance < 0:
            raise ValueError("optimality_tolerance must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of: {', '.join(STRATEGIES)}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ExactResult:
    chosen_sites: Tuple[int, ...]
    objective_value: float
    proof: Proof
    nodes_explored: int
    method: str = 'enumerate'


@dataclass(frozen=True)
class PartialSelection:
    """Branch-and-bound node state: committed new sites and excluded candidates"""
    committed: Tuple[int, ...] = ()
    excluded: FrozenSet[int] = field(default_factory=frozenset)


def lower_bound(partial: PartialSelection, instance: Instance, ctx: Optional[KappaContext],
                objective, evaluator: Optional[ObjectiveEvaluator] = None) -> float:
    """
    Every block served by its best site that is not excluded, ignoring the
    budget. Never exceeds the objective of any completion of `partial`.
    """
    ev = evaluator or ObjectiveEvaluator(instance, ctx, objective)
    allowed = [int(s) for s in np.concatenate([ev.existing, ev.candidates])
               if int(s) not in partial.excluded]
    return ev.score(ev.z_allowed(allowed))


def solve_exact(instance: Instance, ctx: Optional[KappaContext], k: int, objective,
                config: Optional[ExactConfig] = None) -> ExactResult:
    """Global minimum over all k-subsets of candidates; ties -> lexicographically smallest set"""
    config = config or ExactConfig()
    check_budget(instance, k)
    ev = ObjectiveEvaluator(instance, ctx, objective)
    n = len(ev.candidates)
    combinations = int(comb(n, k, exact=True))
    strategy = config.strategy
    if strategy == 'auto':
        strategy = 'enumerate' if combinations <= config.enumeration_limit else 'branch_and_bound'
    logger.debug("solve_exact: n=%d k=%d C(n,k)=%d strategy=%s", n, k, combinations, strategy)
    if strategy == 'enumerate':
        return _enumerate(ev, k, config)
    return _branch_and_bound(ev, k, config)


def _score_chunk(ev: ObjectiveEvaluator, combos: np.ndarray) -> Tuple[float, int]:
    # combos: (m, k) rows of candidate site indices
    if combos.shape[1] == 0:
        return ev.score(ev.base), 0
    Z = ev.distances[:, combos].min(axis=2)
    Z = np.minimum(ev.base[:, None], Z)
    scores = ev.score_columns(Z)
    j = int(np.argmin(scores))
    return float(scores[j]), j


def _enumerate(ev: ObjectiveEvaluator, k: int, config: ExactConfig) -> ExactResult:
    candidates = [int(c) for c in ev.candidates]
    iterator = itertools.combinations(candidates, k)

    def chunks():
        while True:
            block = list(itertools.islice(iterator, ENUMERATION_CHUNK))
            if not block:
                return
            yield np.array(block, dtype=int).reshape(len(block), k)

    best_value, best_combo, explored = np.inf, None, 0
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        pending = chunks()
        while True:
            # fixed chunk boundaries keep results identical for any worker count
            batch = list(itertools.islice(pending, max(1, config.workers)))
            if not batch:
                break
            if executor is not None:
                results = list(executor.map(lambda c: _score_chunk(ev, c), batch))
            else:
                results = [_score_chunk(ev, c) for c in batch]
            for combos, (value, j) in zip(batch, results):
                explored += combos.shape[0]
                if value < best_value:
                    best_value, best_combo = value, tuple(int(s) for s in combos[j])
    finally:
        if executor is not None:
            executor.shutdown()

    chosen = tuple(sorted(best_combo))
    return ExactResult(
        chosen_sites=chosen,
        objective_value=ev.score_selection(chosen),
        proof=Proof.OPTIMAL,
        nodes_explored=explored,
        method='enumerate',
    )


def _branch_and_bound(ev: ObjectiveEvaluator, k: int, config: ExactConfig) -> ExactResult:
    candidates = [int(c) for c in ev.candidates]
    started = time.monotonic()

    seed = solve_heuristic(ev.instance, ev.ctx, k, ev.objective,
                           HeuristicConfig(workers=config.workers), evaluator=ev)
    best_sites, best_value = seed.chosen_sites, seed.objective_value

    def prune_above() -> float:
        slack = max(1.0, abs(best_value))
        return best_value - config.optimality_tolerance * abs(best_value) + 1e-12 * slack

    def bound_of(excluded: FrozenSet[int]) -> float:
        return lower_bound(PartialSelection(excluded=excluded), ev.instance, ev.ctx,
                           ev.objective, evaluator=ev)

    counter = itertools.count()
    root_bound = bound_of(frozenset())
    heap = [(root_bound, 0, next(counter), (), frozenset())]
    nodes = 0
    proof = Proof.OPTIMAL if config.optimality_tolerance == 0 else Proof.WITHIN_TOLERANCE

    while heap:
        bound, _, _, committed, excluded = heapq.heappop(heap)
        if bound > prune_above():
            break
        if nodes >= config.node_limit or (
                config.time_limit is not None and time.monotonic() - started > config.time_limit):
            proof = Proof.LIMIT_REACHED
            break
        nodes += 1

        undecided = [c for c in candidates if c not in excluded and c not in committed]
        slots = k - len(committed)
        if slots == 0 or len(undecided) == slots:
            leaf = tuple(sorted(committed + tuple(undecided[:slots])))
            value = ev.score_selection(leaf)
            if value < best_value or (value == best_value and leaf < best_sites):
                best_sites, best_value = leaf, value
            continue

        # branch on the undecided site that most improves the committed selection
        z_committed = ev.z_for(list(committed))
        Z = np.minimum(z_committed[:, None], ev.distances[:, undecided])
        pick = undecided[int(np.argmin(ev.score_columns(Z)))]
        depth = len(committed) + len(excluded) + 1

        # committing keeps the allowed set, so the child inherits the bound
        heapq.heappush(heap, (bound, -depth, next(counter), committed + (pick,), excluded))
        if len(undecided) - 1 >= slots:
            child_excluded = excluded | {pick}
            child_bound = bound_of(child_excluded)
            if child_bound <= prune_above():
                heapq.heappush(heap, (child_bound, -depth, next(counter), committed, child_excluded))

    logger.debug("branch-and-bound: %d nodes, proof=%s", nodes, proof.value)
    return ExactResult(
        chosen_sites=tuple(best_sites),
        objective_value=best_value,
        proof=proof,
        nodes_explored=nodes,
        method='branch_and_bound',
    )
