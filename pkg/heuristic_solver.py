#!/usr/bin/env python3
"""
Greedy + Interchange Siting Heuristic
Greedy addition followed by vertex-substitution local search for instances
beyond the reach of the exact solver
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from city_model import BudgetExceedsCandidates, Instance
from assignment import EmptyOpenSet, ObjectiveEvaluator
from kolm_pollak import KappaContext

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeuristicConfig:
    """restarts > 0 enables the seeded multi-start mode"""
    restarts: int = 0
    seed: int = 0
    workers: int = 1
    max_passes: int = 100_000

    def __post_init__(self):
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


@dataclass(frozen=True)
class HeuristicResult:
    chosen_sites: Tuple[int, ...]
    objective_value: float
    greedy_value: float
    interchange_value: float
    swaps_performed: int

    @property
    def stages(self) -> Tuple[float, float]:
        return (self.greedy_value, self.interchange_value)


def check_budget(instance: Instance, k: int) -> None:
    if k < 0:
        raise ValueError(f"k must be >= 0 (got {k})")
    available = len(instance.candidate_indices)
    if k > available:
        raise BudgetExceedsCandidates(k, available)
    if k == 0 and instance.existing_indices.size == 0:
        raise EmptyOpenSet("instance has no existing sites; k must be at least 1")


def greedy_add(instance: Instance, ctx: Optional[KappaContext], k: int, objective,
               evaluator: Optional[ObjectiveEvaluator] = None) -> Tuple[int, ...]:
    """Add, k times, the candidate with the largest objective decrease (ties: lowest index)"""
    check_budget(instance, k)
    ev = evaluator or ObjectiveEvaluator(instance, ctx, objective)
    z = ev.base.copy()
    remaining = [int(c) for c in ev.candidates]
    chosen = []
    for _ in range(k):
        Z = np.minimum(z[:, None], ev.distances[:, remaining])
        scores = ev.score_columns(Z)
        pick = int(np.argmin(scores))
        chosen.append(remaining.pop(pick))
        z = Z[:, pick]
    return tuple(sorted(chosen))


def _best_two(ev: ObjectiveEvaluator, selection: Sequence[int]):
    """Per-block best and second-best open distances plus the best site index"""
    open_sites = np.array(sorted(set(ev.existing.tolist()) | set(selection)), dtype=int)
    sub = ev.distances[:, open_sites]
    rows = np.arange(sub.shape[0])
    if open_sites.size == 1:
        return sub[:, 0], np.full(sub.shape[0], open_sites[0]), np.full(sub.shape[0], np.inf)
    order = np.argsort(sub, axis=1, kind='stable')
    best = sub[rows, order[:, 0]]
    second = sub[rows, order[:, 1]]
    return best, open_sites[order[:, 0]], second


def _best_swap_for(ev: ObjectiveEvaluator, out_site: int, outside: List[int],
                   best, best_site, second) -> Tuple[float, int]:
    # O(|R|) per (out, in) pair: drop out_site, fall back to the second-best
    base = np.where(best_site == out_site, second, best)
    Z = np.minimum(base[:, None], ev.distances[:, outside])
    scores = ev.score_columns(Z)
    j = int(np.argmin(scores))
    return float(scores[j]), outside[j]


def _local_search(ev: ObjectiveEvaluator, selection: Sequence[int],
                  config: HeuristicConfig) -> Tuple[Tuple[int, ...], float, int]:
    selection = sorted(int(s) for s in selection)
    current = ev.score_selection(selection)
    swaps = 0
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for _ in range(config.max_passes):
            chosen = set(selection)
            outside = [int(c) for c in ev.candidates if int(c) not in chosen]
            if not selection or not outside:
                break
            best, best_site, second = _best_two(ev, selection)
            if executor is not None:
                moves = list(executor.map(
                    lambda o: _best_swap_for(ev, o, outside, best, best_site, second), selection
                ))
            else:
                moves = [_best_swap_for(ev, o, outside, best, best_site, second) for o in selection]
            # ascending out-site order; strict < keeps the first best
            best_value, best_out, best_in = moves[0][0], selection[0], moves[0][1]
            for out_site, (value, in_site) in zip(selection[1:], moves[1:]):
                if value < best_value:
                    best_value, best_out, best_in = value, out_site, in_site
            if not ev.improves(best_value, current):
                break
            selection = sorted((chosen - {best_out}) | {best_in})
            current = ev.score_selection(selection)
            swaps += 1
            logger.debug("swap %d: out %d in %d -> %.6f", swaps, best_out, best_in, current)
    finally:
        if executor is not None:
            executor.shutdown()
    return tuple(selection), current, swaps


def interchange(instance: Instance, ctx: Optional[KappaContext], selection: Sequence[int],
                objective, config: Optional[HeuristicConfig] = None,
                evaluator: Optional[ObjectiveEvaluator] = None) -> HeuristicResult:
    """Apply best improving (out, in) swaps until none improves by more than 1e-12 relative"""
    config = config or HeuristicConfig()
    ev = evaluator or ObjectiveEvaluator(instance, ctx, objective)
    candidates = set(ev.candidates.tolist())
    bad = [s for s in selection if s not in candidates]
    if bad or len(set(selection)) != len(selection):
        raise ValueError(f"selection must be distinct candidate site indices (bad: {bad})")
    start_value = ev.score_selection(sorted(selection))
    chosen, value, swaps = _local_search(ev, selection, config)
    return HeuristicResult(
        chosen_sites=chosen,
        objective_value=value,
        greedy_value=start_value,
        interchange_value=value,
        swaps_performed=swaps,
    )


def solve_heuristic(instance: Instance, ctx: Optional[KappaContext], k: int, objective,
                    config: Optional[HeuristicConfig] = None,
                    evaluator: Optional[ObjectiveEvaluator] = None) -> HeuristicResult:
    """Greedy, then interchange; optional seeded random restarts keep the best result"""
    config = config or HeuristicConfig()
    ev = evaluator or ObjectiveEvaluator(instance, ctx, objective)
    greedy = greedy_add(instance, ctx, k, objective, evaluator=ev)
    result = interchange(instance, ctx, greedy, objective, config=config, evaluator=ev)
    logger.debug("greedy %.6f -> interchange %.6f (%d swaps)",
                 result.greedy_value, result.objective_value, result.swaps_performed)
    if config.restarts == 0 or k == 0:
        return result

    rng = np.random.default_rng(config.seed)
    best_sites, best_value, total_swaps = result.chosen_sites, result.objective_value, result.swaps_performed
    for restart in range(config.restarts):
        start = sorted(int(s) for s in rng.choice(ev.candidates, size=k, replace=False))
        chosen, value, swaps = _local_search(ev, start, config)
        total_swaps += swaps
        if value < best_value or (value == best_value and chosen < best_sites):
            logger.debug("restart %d improved to %.6f", restart, value)
            best_sites, best_value = chosen, value
    return HeuristicResult(
        chosen_sites=best_sites,
        objective_value=best_value,
        greedy_value=result.greedy_value,
        interchange_value=best_value,
        swaps_performed=total_swaps,
    )
