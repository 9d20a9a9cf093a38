#!/usr/bin/env python3
"""
Siting Planner
Answers the two planning questions for a city:
  Q1 - where should k new amenities go to best improve equitable access?
  Q2 - how many new amenities are needed to reach an EDE target?
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from city_model import Instance, baseline_distances, require_valid
from assignment import Objective, OpenSet, assign_nearest
from exact_solver import ExactConfig, Proof, solve_exact
from heuristic_solver import HeuristicConfig, check_budget, solve_heuristic
from kolm_pollak import DEFAULT_EPSILON, AccessProfile, KappaContext, kolm_pollak_ede

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE_M = 1e-6
# auto policy: branch-and-bound (seeded by the heuristic) up to this many candidates
AUTO_BRANCH_AND_BOUND_MAX_CANDIDATES = 30


class SolverPolicy(str, Enum):
    AUTO = 'auto'
    EXACT = 'exact'
    HEURISTIC = 'heuristic'

    @classmethod
    def parse(cls, value) -> 'SolverPolicy':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ', '.join(p.value for p in cls)
            raise ValueError(f"Unknown solver policy '{value}'. Must be one of: {choices}") from None


class Certificate(str, Enum):
    MINIMAL = 'minimal'
    UPPER_BOUND_ONLY = 'upper_bound_only'
    INFEASIBLE = 'infeasible'


@dataclass(frozen=True, eq=False)
class SitingPlan:
    """Answer to Q1: k new sites with before/after access"""
    instance: Instance
    ctx: KappaContext
    k: int
    chosen_sites: Tuple[int, ...]
    before: AccessProfile
    after: AccessProfile
    assigned_sites: np.ndarray
    objective: Objective
    objective_value: float
    solver_used: str
    proof: Proof

    @property
    def chosen_site_ids(self) -> List[str]:
        return [self.instance.sites[i].id for i in self.chosen_sites]

    @property
    def label(self) -> str:
        return f"{self.objective.value} k={self.k}"


@dataclass(frozen=True)
class Trial:
    k: int
    ede: float
    proof: Proof


@dataclass(frozen=True, eq=False)
class TargetPlan:
    """Answer to Q2: minimal store count for an EDE target, or an infeasibility record"""
    instance: Instance
    ctx: KappaContext
    target_ede: float
    minimal_k: Optional[int]
    chosen_sites: Tuple[int, ...]
    achieved_ede: float
    certificate: Certificate
    before: AccessProfile
    all_open_ede: float
    plan: Optional[SitingPlan]
    trials: Tuple[Trial, ...] = ()

    @property
    def is_feasible(self) -> bool:
        return self.certificate is not Certificate.INFEASIBLE

    @property
    def baseline_ede(self) -> float:
        return self.before.ede

    @property
    def chosen_site_ids(self) -> List[str]:
        return [self.instance.sites[i].id for i in self.chosen_sites]


def calibrate(instance: Instance, epsilon: float = DEFAULT_EPSILON) -> KappaContext:
    """Freeze alpha/kappa from baseline access (raises DegenerateDistances on perfect access)"""
    require_valid(instance)
    ctx = KappaContext.from_baseline(baseline_distances(instance), instance.populations, epsilon)
    logger.info("calibrated %s: epsilon=%s alpha=%.6e kappa=%.6e",
                instance.name, ctx.epsilon, ctx.alpha, ctx.kappa)
    return ctx


def current_access(instance: Instance) -> np.ndarray:
    """
    Per-block distance before any new site opens. A greenfield instance has
    no access at all, so every block is at infinity; the nearest-candidate
    fallback of baseline_distances is for calibration only.
    """
    if instance.existing_indices.size == 0:
        return np.full(len(instance.blocks), np.inf)
    return baseline_distances(instance)


def _use_exact(instance: Instance, k: int, policy: SolverPolicy, config: ExactConfig) -> bool:
    if policy is SolverPolicy.EXACT:
        return True
    if policy is SolverPolicy.HEURISTIC:
        return False
    n = len(instance.candidate_indices)
    return int(comb(n, k, exact=True)) <= config.enumeration_limit or \
        n <= AUTO_BRANCH_AND_BOUND_MAX_CANDIDATES


def solve_q1(instance: Instance, epsilon: float = DEFAULT_EPSILON, k: int = 0,
             objective=Objective.KOLM_POLLAK, solver_policy=SolverPolicy.AUTO,
             exact_config: Optional[ExactConfig] = None,
             heuristic_config: Optional[HeuristicConfig] = None,
             ctx: Optional[KappaContext] = None) -> SitingPlan:
    """Place k new sites minimizing the objective; ctx reuses an earlier calibration"""
    require_valid(instance)
    objective = Objective.parse(objective)
    policy = SolverPolicy.parse(solver_policy)
    exact_config = exact_config or ExactConfig()
    heuristic_config = heuristic_config or HeuristicConfig()
    ctx = ctx or calibrate(instance, epsilon)
    check_budget(instance, k)

    if _use_exact(instance, k, policy, exact_config):
        result = solve_exact(instance, ctx, k, objective, exact_config)
        chosen, value, proof, solver = result.chosen_sites, result.objective_value, result.proof, 'exact'
    else:
        result = solve_heuristic(instance, ctx, k, objective, heuristic_config)
        chosen, value, proof, solver = result.chosen_sites, result.objective_value, Proof.HEURISTIC, 'heuristic'
    logger.info("Q1 %s k=%d objective=%s solver=%s proof=%s",
                instance.name, k, objective.value, solver, proof.value)

    assignment = assign_nearest(instance, OpenSet.with_new_sites(instance, chosen))
    return SitingPlan(
        instance=instance,
        ctx=ctx,
        k=k,
        chosen_sites=tuple(chosen),
        before=AccessProfile.build(current_access(instance), instance.populations, ctx),
        after=AccessProfile.build(assignment.distances, instance.populations, ctx),
        assigned_sites=assignment.sites,
        objective=objective,
        objective_value=value,
        solver_used=solver,
        proof=proof,
    )


class _TargetSearch:
    """Shared calibration and trial cache for one or more Q2 targets"""

    def __init__(self, instance: Instance, epsilon: float, solver_policy,
                 exact_config: Optional[ExactConfig], heuristic_config: Optional[HeuristicConfig],
                 ctx: Optional[KappaContext]):
        require_valid(instance)
        self.instance = instance
        self.policy = SolverPolicy.parse(solver_policy)
        self.exact_config = exact_config or ExactConfig()
        self.heuristic_config = heuristic_config or HeuristicConfig()
        self.ctx = ctx or calibrate(instance, epsilon)
        populations = instance.populations
        self.before = AccessProfile.build(current_access(instance), populations, self.ctx)
        self.all_open_ede = kolm_pollak_ede(instance.distances.min(axis=1), populations, self.ctx)
        self.has_existing = instance.existing_indices.size > 0
        self.n_candidates = len(instance.candidate_indices)
        self.cache: Dict[int, SitingPlan] = {}

    def trial(self, k: int) -> SitingPlan:
        if k not in self.cache:
            self.cache[k] = solve_q1(
                self.instance, k=k, objective=Objective.KOLM_POLLAK, solver_policy=self.policy,
                exact_config=self.exact_config, heuristic_config=self.heuristic_config, ctx=self.ctx,
            )
            logger.info("trial k=%d -> EDE %.3f m (%s)", k, self.cache[k].after.ede,
                        self.cache[k].proof.value)
        return self.cache[k]

    def meets(self, ede: float, target: float) -> bool:
        return ede <= target + FEASIBILITY_TOLERANCE_M

    def solve(self, target_ede: float) -> TargetPlan:
        if not target_ede > 0:
            raise ValueError(f"target EDE must be positive (got {target_ede})")
        common = dict(instance=self.instance, ctx=self.ctx, target_ede=float(target_ede),
                      before=self.before, all_open_ede=self.all_open_ede)

        if self.has_existing and self.meets(self.before.ede, target_ede):
            return TargetPlan(minimal_k=0, chosen_sites=(), achieved_ede=self.before.ede,
                              certificate=Certificate.MINIMAL, plan=self.trial(0),
                              trials=self._history([0]), **common)
        if not self.meets(self.all_open_ede, target_ede):
            logger.info("target %.3f m infeasible: all-candidates-open EDE is %.3f m",
                        target_ede, self.all_open_ede)
            return TargetPlan(minimal_k=None, chosen_sites=(), achieved_ede=self.all_open_ede,
                              certificate=Certificate.INFEASIBLE, plan=None, **common)

        tried = []

        def feasible(k: int) -> bool:
            tried.append(k)
            return self.meets(self.trial(k).after.ede, target_ede)

        # galloping: 1, 2, 4, ... then binary search on (lo, hi]
        lo, k = 0, 1
        while True:
            k = min(k, self.n_candidates)
            if feasible(k):
                hi = k
                break
            if k == self.n_candidates:
                raise RuntimeError("all-candidates trial missed a target the pre-check found feasible")
            lo, k = k, k * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if feasible(mid):
                hi = mid
            else:
                lo = mid

        # k = 0 is infeasible by the pre-check; otherwise lo needs an optimal trial
        certified = lo == 0 or self.trial(lo).proof is Proof.OPTIMAL
        plan = self.trial(hi)
        return TargetPlan(
            minimal_k=hi,
            chosen_sites=plan.chosen_sites,
            achieved_ede=plan.after.ede,
            certificate=Certificate.MINIMAL if certified else Certificate.UPPER_BOUND_ONLY,
            plan=plan,
            trials=self._history(tried),
            **common,
        )

    def _history(self, ks: Sequence[int]) -> Tuple[Trial, ...]:
        return tuple(Trial(k, self.cache[k].after.ede, self.cache[k].proof) for k in ks)


def solve_q2(instance: Instance, epsilon: float = DEFAULT_EPSILON, target_ede: float = 1200.0,
             solver_policy=SolverPolicy.AUTO, exact_config: Optional[ExactConfig] = None,
             heuristic_config: Optional[HeuristicConfig] = None,
             ctx: Optional[KappaContext] = None) -> TargetPlan:
    """Fewest new sites whose optimal EDE is within target_ede meters"""
    search = _TargetSearch(instance, epsilon, solver_policy, exact_config, heuristic_config, ctx)
    return search.solve(target_ede)


def sweep_targets(instance: Instance, epsilon: float = DEFAULT_EPSILON,
                  targets: Sequence[float] = (1200.0, 800.0, 400.0),
                  solver_policy=SolverPolicy.AUTO, exact_config: Optional[ExactConfig] = None,
                  heuristic_config: Optional[HeuristicConfig] = None) -> List[TargetPlan]:
    """Q2 for several targets sharing one calibration and one trial cache"""
    search = _TargetSearch(instance, epsilon, solver_policy, exact_config, heuristic_config, None)
    return [search.solve(target) for target in targets]
