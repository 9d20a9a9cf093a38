#!/usr/bin/env python3
"""
Equitable Amenity Siting - command line
Subcommands:
  ede      baseline Kolm-Pollak EDE and distribution summary
  locate   place k new sites (Q1) and write plan exports + comparison report
  target   fewest new sites to reach EDE target(s) (Q2)
  synth    write a synthetic grid city
  rank     rank several cities by baseline EDE

Exit codes: 0 success, 2 input error, 3 budget error, 4 infeasible target.
Set SITING_VERBOSE=1 (info) or 2 (debug) for solver logging.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from city_model import (
    BudgetExceedsCandidates, Instance, MismatchedBaseline, MissingCoordinates,
    ParseError, ValidationError, baseline_distances,
)
from assignment import EmptyOpenSet, Objective
from exact_solver import ExactConfig
from heuristic_solver import HeuristicConfig
from instance_loader import load_instance, load_instance_dir, save_instance
from kolm_pollak import (
    DEFAULT_EPSILON, FOOD_DESERT_DISTANCE_M, AccessProfile, DegenerateDistances, KappaContext,
)
from siting_planner import SolverPolicy, calibrate, solve_q1, sweep_targets
from synthetic_city import POPULATION_MODELS, STORE_PLACEMENTS, SynthSpec, generate_synthetic
from access_report import (
    ComparisonReportGenerator, TargetReportGenerator, compare, export_plan,
    export_sites_csv, rank,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_INFEASIBLE = 4

DEFAULT_WALK_SPEED_M_PER_MIN = 80.0
VERBOSITY_LEVELS = {
    '': logging.WARNING, '0': logging.WARNING, 'false': logging.WARNING,
    '1': logging.INFO, 'true': logging.INFO, 'info': logging.INFO,
    '2': logging.DEBUG, 'debug': logging.DEBUG,
}


@dataclass
class RunConfig:
    """Fully resolved settings for one CLI run; echoed to run_config.json"""
    command: str
    inputs: List[str] = field(default_factory=list)
    epsilon: float = DEFAULT_EPSILON
    walk_speed_m_per_min: float = DEFAULT_WALK_SPEED_M_PER_MIN
    objectives: List[str] = field(default_factory=lambda: [Objective.KOLM_POLLAK.value])
    solver: str = SolverPolicy.AUTO.value
    k: Optional[int] = None
    targets_m: List[float] = field(default_factory=list)
    target_average: bool = False
    enumeration_limit: int = ExactConfig.enumeration_limit
    node_limit: int = ExactConfig.node_limit
    time_limit: Optional[float] = None
    restarts: int = HeuristicConfig.restarts
    seed: int = 0
    workers: int = 1
    out_dir: Optional[str] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        config = cls(command=args.command)
        for name in ('epsilon', 'solver', 'k', 'enumeration_limit', 'node_limit', 'time_limit',
                     'restarts', 'seed', 'workers', 'out_dir'):
            if getattr(args, name, None) is not None:
                setattr(config, name, getattr(args, name))
        if getattr(args, 'walk_speed', None) is not None:
            config.walk_speed_m_per_min = args.walk_speed
        if not config.walk_speed_m_per_min > 0:
            raise ValueError(f"--walk-speed must be positive (got {config.walk_speed_m_per_min})")
        config.inputs = _input_list(args)
        config.objectives = _resolve_objectives(getattr(args, 'objective', None))
        config.solver = SolverPolicy.parse(config.solver).value
        config.targets_m = [float(t) for t in (getattr(args, 'target_m', None) or [])] + [
            float(t) * config.walk_speed_m_per_min for t in (getattr(args, 'target_min', None) or [])
        ]
        config.target_average = bool(getattr(args, 'target_average', False))
        return config

    def exact_config(self) -> ExactConfig:
        return ExactConfig(enumeration_limit=self.enumeration_limit, node_limit=self.node_limit,
                           time_limit=self.time_limit, workers=self.workers)

    def heuristic_config(self) -> HeuristicConfig:
        return HeuristicConfig(restarts=self.restarts, seed=self.seed, workers=self.workers)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        # the file lives in out_dir; leaving it out keeps reruns comparable
        data.pop('out_dir')
        return data


def _input_list(args: argparse.Namespace) -> List[str]:
    if getattr(args, 'instances', None):
        return list(args.instances)
    inputs = []
    for name in ('instance', 'blocks', 'sites', 'distances'):
        value = getattr(args, name, None)
        if value:
            inputs.append(f"{name}={value}")
    return inputs


def _resolve_objectives(values: Optional[Sequence[str]]) -> List[str]:
    """EDE objective always runs; extra objectives follow in the order given"""
    resolved: List[str] = []
    for value in values or []:
        objective = Objective.parse(value).value
        if objective not in resolved:
            resolved.append(objective)
    if Objective.KOLM_POLLAK.value not in resolved:
        resolved.insert(0, Objective.KOLM_POLLAK.value)
    return resolved


def configure_logging() -> None:
    verbosity = os.getenv('SITING_VERBOSE', '0').strip().lower()
    logging.basicConfig(
        level=VERBOSITY_LEVELS.get(verbosity, logging.WARNING),
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )


def write_run_config(config: RunConfig, out_dir: Path) -> Path:
    path = out_dir / 'run_config.json'
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def _write(path: Path, text: str) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)


def _load(args: argparse.Namespace) -> Instance:
    if args.instance:
        return load_instance_dir(args.instance)
    if args.blocks and args.sites:
        return load_instance(args.blocks, args.sites, args.distances)
    raise ValueError("give --instance DIR, or --blocks and --sites (optionally --distances)")


def _baseline_profile(instance: Instance, epsilon: float) -> Tuple[AccessProfile, Optional[KappaContext]]:
    """Baseline profile and its KappaContext (None when access is already perfect)"""
    try:
        ctx = calibrate(instance, epsilon)
    except DegenerateDistances:
        return AccessProfile.build(baseline_distances(instance), instance.populations, None), None
    return AccessProfile.build(baseline_distances(instance), instance.populations, ctx), ctx


def _minutes(meters: float, config: RunConfig) -> float:
    return meters / config.walk_speed_m_per_min


def _meters(value: float) -> str:
    return f"{value:.3f} m" if math.isfinite(value) else "no access"


def cmd_ede(args: argparse.Namespace, config: RunConfig) -> int:
    instance = _load(args)
    profile, ctx = _baseline_profile(instance, config.epsilon)
    print(f"✓ Loaded '{instance.name}': {len(instance.blocks)} blocks, "
          f"{instance.existing_indices.size} existing / {instance.candidate_indices.size} candidate sites")
    if instance.existing_indices.size == 0:
        print("  (no existing sites: distances are to the nearest candidate)")
    if ctx is None:
        print(f"epsilon: {config.epsilon:.3f}  alpha: n/a  kappa: n/a (access already perfect)")
    else:
        print(f"epsilon: {ctx.epsilon:.3f}  alpha: {ctx.alpha:.3e}  kappa: {ctx.kappa:.3e}")
    q1, q2, q3 = profile.quartiles
    print(f"EDE: {profile.ede:.3f} m ({_minutes(profile.ede, config):.3f} min)")
    print(f"Weighted mean: {profile.weighted_mean:.3f} m")
    print(f"Quartiles (25/50/75): {q1:.3f} / {q2:.3f} / {q3:.3f} m")
    print(f"Max: {profile.max:.3f} m")
    print(f"Inequality penalty: {profile.inequality_penalty:.3f} m")
    print(f"Population beyond one mile: {100 * profile.share_beyond(FOOD_DESERT_DISTANCE_M):.3f}%")

    if config.out_dir:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = {
            'name': instance.name,
            'ede_m': round(profile.ede, 3),
            'weighted_mean_m': round(profile.weighted_mean, 3),
            'quartiles_m': [round(q, 3) for q in profile.quartiles],
            'max_m': round(profile.max, 3),
            'inequality_penalty_m': round(profile.inequality_penalty, 3),
            'share_beyond_one_mile': round(profile.share_beyond(FOOD_DESERT_DISTANCE_M), 6),
            'alpha': None if ctx is None else ctx.alpha,
            'kappa': None if ctx is None else ctx.kappa,
        }
        with open(out_dir / 'ede_summary.json', 'w', encoding='utf-8') as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write('\n')
        write_run_config(config, out_dir)
        print(f"✓ Summary written: {out_dir / 'ede_summary.json'}")
    return EXIT_OK


def cmd_locate(args: argparse.Namespace, config: RunConfig) -> int:
    instance = _load(args)
    ctx = calibrate(instance, config.epsilon)
    out_dir = Path(config.out_dir or 'siting_output')
    out_dir.mkdir(parents=True, exist_ok=True)

    plans = []
    for objective in config.objectives:
        plan = solve_q1(
            instance, k=config.k, objective=objective, solver_policy=config.solver,
            exact_config=config.exact_config(), heuristic_config=config.heuristic_config(), ctx=ctx,
        )
        plans.append(plan)
        print(f"✓ {plan.label} ({plan.solver_used}, {plan.proof.value}): "
              f"EDE {_meters(plan.before.ede)} -> {plan.after.ede:.3f} m, "
              f"mean {_meters(plan.before.weighted_mean)} -> {plan.after.weighted_mean:.3f} m")
        print(f"  New sites: {', '.join(plan.chosen_site_ids) or '(none)'}")

        _write(out_dir / f"{objective}_sites.csv", export_sites_csv(plan))
        _write(out_dir / f"{objective}_blocks.csv", export_plan(plan, 'csv'))
        if instance.has_coordinates:
            _write(out_dir / f"{objective}_plan.geojson", export_plan(plan, 'geojson'))

    if not instance.has_coordinates:
        print("  (no coordinates: GeoJSON export skipped)")
    if instance.existing_indices.size:
        report = compare(plans[0].before, plans)
        ComparisonReportGenerator(args.template).generate(report, str(out_dir / 'comparison_report.md'))
        for method in report.methods:
            print(f"  {method.label}: {method.improved} improved, {method.unchanged} unchanged, "
                  f"{method.worsened} worsened blocks")
    else:
        print("  (greenfield instance: comparison report skipped)")
    write_run_config(config, out_dir)
    print(f"✓ Plan files written to {out_dir}")
    return EXIT_OK


def cmd_target(args: argparse.Namespace, config: RunConfig) -> int:
    if not config.targets_m:
        raise ValueError("give at least one --target-m or --target-min")
    instance = _load(args)
    out_dir = Path(config.out_dir or 'siting_output')
    out_dir.mkdir(parents=True, exist_ok=True)

    profile, ctx = _baseline_profile(instance, config.epsilon)
    if ctx is None:
        for target in config.targets_m:
            if not target > 0:
                raise ValueError(f"target EDE must be positive (got {target})")
            print(f"Target {target:.3f} m ({_minutes(target, config):.3f} min): "
                  f"0 additional stores (baseline EDE {profile.ede:.3f} m)")
        write_run_config(config, out_dir)
        return EXIT_OK

    results = sweep_targets(
        instance, config.epsilon, config.targets_m, solver_policy=config.solver,
        exact_config=config.exact_config(), heuristic_config=config.heuristic_config(),
    )
    infeasible = False
    for n, result in enumerate(results, start=1):
        head = f"Target {result.target_ede:.3f} m ({_minutes(result.target_ede, config):.3f} min): "
        if not result.is_feasible:
            infeasible = True
            print(f"✗ {head}INFEASIBLE (every candidate open gives EDE {result.all_open_ede:.3f} m)")
        else:
            print(f"✓ {head}{result.minimal_k} additional stores ({result.certificate.value}), "
                  f"EDE {result.achieved_ede:.3f} m")
            if result.chosen_sites:
                print(f"  New sites: {', '.join(result.chosen_site_ids)}")
        _write(out_dir / f"target{n}_sites.csv", export_sites_csv(result))
        _write(out_dir / f"target{n}_blocks.csv", export_plan(result, 'csv'))
        if instance.has_coordinates:
            _write(out_dir / f"target{n}_plan.geojson", export_plan(result, 'geojson'))

    TargetReportGenerator(args.template).generate(
        results, config.walk_speed_m_per_min, str(out_dir / 'target_report.md'))
    write_run_config(config, out_dir)
    print(f"✓ Target files written to {out_dir}")
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    spec = SynthSpec(
        grid_size=args.grid,
        spacing_m=args.spacing,
        population_model=args.population_model,
        base_population=args.base_population,
        decay_length_m=args.decay_length,
        population_noise=args.noise,
        existing_stores=args.stores,
        store_placement=args.store_placement,
        candidate_every=args.candidate_every,
        periphery_blocks=args.periphery_blocks,
        periphery_distance_m=args.periphery_distance,
        periphery_population=args.periphery_population,
        seed=config.seed,
        name=args.name,
    )
    instance = generate_synthetic(spec)
    out_dir = Path(config.out_dir or 'synthetic_city')
    save_instance(instance, out_dir)
    with open(out_dir / 'run_config.json', 'w', encoding='utf-8') as f:
        json.dump({**config.to_dict(), 'synth': asdict(spec)}, f, indent=2, sort_keys=True)
        f.write('\n')
    print(f"✓ Synthetic city '{spec.name}' written to {out_dir}: {len(instance.blocks)} blocks, "
          f"{instance.existing_indices.size} existing / {instance.candidate_indices.size} candidate sites")
    return EXIT_OK


def _named_instance(entry: str) -> Instance:
    """DIR, or NAME=DIR to rank the same directory under another name"""
    if '=' in entry and not Path(entry).exists():
        name, directory = entry.split('=', 1)
        return load_instance_dir(directory, name=name)
    return load_instance_dir(entry)


def _rank_targets(cities: List[Tuple[Instance, AccessProfile, Optional[KappaContext]]],
                  config: RunConfig) -> List[float]:
    targets = list(config.targets_m)
    if config.target_average:
        edes = [profile.ede for _, profile, _ in cities if math.isfinite(profile.ede)]
        if not edes:
            raise ValueError("--target-average needs at least one city with existing stores")
        targets.append(sum(edes) / len(edes))
    for target in targets:
        if not target > 0:
            raise ValueError(f"target EDE must be positive (got {target})")
    return targets


def _store_counts(instance: Instance, ctx: Optional[KappaContext], targets: List[float],
                  config: RunConfig) -> Tuple[Optional[int], ...]:
    if not targets:
        return ()
    if ctx is None:
        # perfect access already meets every positive target
        return tuple(0 for _ in targets)
    results = sweep_targets(
        instance, config.epsilon, targets, solver_policy=config.solver,
        exact_config=config.exact_config(), heuristic_config=config.heuristic_config(),
    )
    return tuple(result.minimal_k for result in results)


def cmd_rank(args: argparse.Namespace, config: RunConfig) -> int:
    cities = []
    for entry in args.instances:
        instance = _named_instance(entry)
        profile, ctx = _baseline_profile(instance, config.epsilon)
        cities.append((instance, profile, ctx))
    targets = _rank_targets(cities, config)
    stores = [_store_counts(instance, ctx, targets, config) for instance, _, ctx in cities]
    table = rank([(instance.name, profile, instance.total_population) for instance, profile, _ in cities],
                 targets, stores)
    text = table.to_csv()
    print(text, end='')
    summary = table.summary_csv() if targets else None
    if summary:
        print()
        print(summary, end='')
    if config.out_dir:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write(out_dir / 'rank.csv', text)
        if summary:
            _write(out_dir / 'rank_stores.csv', summary)
        write_run_config(config, out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument('--instance', help='Instance directory (blocks.csv, sites.csv, optional distances.csv)')
    inputs.add_argument('--blocks', help='Blocks CSV (id,population,lat,lon)')
    inputs.add_argument('--sites', help='Sites CSV (id,kind,lat,lon) or GeoJSON')
    inputs.add_argument('--distances', help='Distance matrix CSV in meters (optional)')

    metric = argparse.ArgumentParser(add_help=False)
    metric.add_argument('--epsilon', type=float, default=DEFAULT_EPSILON,
                        help='Inequality aversion, negative (default: -1)')
    metric.add_argument('--walk-speed', type=float, default=DEFAULT_WALK_SPEED_M_PER_MIN,
                        help='Walking speed in m/min for minute conversions (default: 80)')
    metric.add_argument('--out-dir', help='Output directory')

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument('--solver', default=SolverPolicy.AUTO.value,
                        choices=[p.value for p in SolverPolicy], help='Solver policy (default: auto)')
    solver.add_argument('--seed', type=int, default=0, help='Seed for heuristic restarts')
    solver.add_argument('--restarts', type=int, default=0, help='Extra randomized heuristic starts')
    solver.add_argument('--workers', type=int, default=1, help='Solver worker threads')
    solver.add_argument('--enumeration-limit', type=int, default=ExactConfig.enumeration_limit,
                        help='Largest C(n, k) solved by enumeration')
    solver.add_argument('--node-limit', type=int, default=ExactConfig.node_limit,
                        help='Branch-and-bound node limit')
    solver.add_argument('--time-limit', type=float, help='Exact solver time limit in seconds')
    solver.add_argument('--template', '-t', help='Custom report template file (optional)')

    parser = argparse.ArgumentParser(
        description='Equitable amenity siting with the Kolm-Pollak EDE'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    ede = sub.add_parser('ede', parents=[inputs, metric], help='Baseline EDE summary')
    ede.set_defaults(handler=cmd_ede)

    locate = sub.add_parser('locate', parents=[inputs, metric, solver], help='Place k new sites')
    locate.add_argument('--k', type=int, required=True, help='Number of new sites')
    locate.add_argument('--objective', action='append',
                        help="Objective: kolm-pollak (always run) and/or mean; repeatable")
    locate.set_defaults(handler=cmd_locate)

    target = sub.add_parser('target', parents=[inputs, metric, solver],
                            help='Fewest new sites reaching an EDE target')
    target.add_argument('--target-m', type=float, action='append', help='EDE target in meters; repeatable')
    target.add_argument('--target-min', type=float, action='append',
                        help='EDE target in walking minutes; repeatable')
    target.set_defaults(handler=cmd_target)

    synth = sub.add_parser('synth', help='Generate a synthetic grid city')
    synth.add_argument('--grid', type=int, default=SynthSpec.grid_size, help='Blocks per side')
    synth.add_argument('--spacing', type=float, default=SynthSpec.spacing_m, help='Block spacing in meters')
    synth.add_argument('--population-model', default=SynthSpec.population_model, choices=POPULATION_MODELS)
    synth.add_argument('--base-population', type=float, default=SynthSpec.base_population)
    synth.add_argument('--decay-length', type=float, default=SynthSpec.decay_length_m,
                       help='Radial-decay length scale in meters')
    synth.add_argument('--noise', type=float, default=SynthSpec.population_noise,
                       help='Relative population noise in [0, 1)')
    synth.add_argument('--stores', type=int, default=SynthSpec.existing_stores, help='Existing stores')
    synth.add_argument('--store-placement', default=SynthSpec.store_placement, choices=STORE_PLACEMENTS)
    synth.add_argument('--candidate-every', type=int, default=SynthSpec.candidate_every,
                       help='Candidate on every n-th row/column')
    synth.add_argument('--periphery-blocks', type=int, default=SynthSpec.periphery_blocks,
                       help='Isolated hamlets on a ring around the grid')
    synth.add_argument('--periphery-distance', type=float, default=SynthSpec.periphery_distance_m,
                       help='Hamlet distance from the grid center in meters')
    synth.add_argument('--periphery-population', type=float, default=SynthSpec.periphery_population)
    synth.add_argument('--seed', type=int, default=SynthSpec.seed)
    synth.add_argument('--name', default=SynthSpec.name)
    synth.add_argument('--out-dir', help='Output directory (default: synthetic_city)')
    synth.set_defaults(handler=cmd_synth)

    ranked = sub.add_parser('rank', parents=[metric, solver],
                            help='Rank cities by baseline EDE, optionally with store counts per target')
    ranked.add_argument('instances', nargs='+', help='Instance directories (or NAME=DIR)')
    ranked.add_argument('--target-m', type=float, action='append', help='EDE target in meters; repeatable')
    ranked.add_argument('--target-min', type=float, action='append',
                        help='EDE target in walking minutes; repeatable')
    ranked.add_argument('--target-average', action='store_true',
                        help="Add the cities' mean baseline EDE as a target")
    ranked.set_defaults(handler=cmd_rank)

    return parser


def _fail(message: str, code: int) -> int:
    print(f"✗ {message}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = RunConfig.from_args(args)
        logger.info("resolved config: %s", config.to_dict())
        return args.handler(args, config)
    except BudgetExceedsCandidates as e:
        return _fail(f"Budget error: {e}", EXIT_BUDGET)
    except ValidationError as e:
        return _fail(f"Validation failed: {e}", EXIT_INPUT)
    except ParseError as e:
        return _fail(f"Could not parse input: {e}", EXIT_INPUT)
    except MissingCoordinates as e:
        return _fail(f"Missing coordinates: {e}", EXIT_INPUT)
    except FileNotFoundError as e:
        return _fail(f"Input file not found: {e.filename or e}", EXIT_INPUT)
    except DegenerateDistances as e:
        return _fail(f"Nothing to optimize: {e}", EXIT_INPUT)
    except (EmptyOpenSet, MismatchedBaseline, ValueError) as e:
        return _fail(f"Error: {e}", EXIT_INPUT)


if __name__ == '__main__':
    sys.exit(main())
