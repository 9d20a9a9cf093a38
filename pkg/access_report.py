#!/usr/bin/env python3
"""
Access Reports
Before/after comparisons of siting plans, city rankings by EDE, and plan
exports (GeoJSON / CSV) for mapping
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Template

from city_model import MismatchedBaseline, MissingCoordinates
from assignment import OpenSet, assign_nearest
from kolm_pollak import FOOD_DESERT_DISTANCE_M, AccessProfile
from siting_planner import SitingPlan, TargetPlan

UNCHANGED_TOLERANCE_M = 1e-9
WORST_SHARE = 0.25
EXPORT_FORMATS = ['geojson', 'csv']


@dataclass(frozen=True, eq=False)
class MethodComparison:
    """One plan's effect on every block relative to the shared baseline"""
    label: str
    plan: SitingPlan
    after: AccessProfile
    improved: int
    unchanged: int
    worsened: int
    improved_share: float
    unchanged_share: float
    worsened_share: float
    worst_quartile_reduction: float

    @property
    def chosen_site_ids(self) -> List[str]:
        return self.plan.chosen_site_ids


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    before: AccessProfile
    block_ids: Tuple[str, ...]
    methods: Tuple[MethodComparison, ...]

    def pairs(self) -> pd.DataFrame:
        """Plot-ready per-block table: before_m plus one after column per method"""
        frame = pd.DataFrame({
            'block_id': list(self.block_ids),
            'population': self.before.populations,
            'before_m': self.before.distances,
        })
        for method in self.methods:
            frame[f"{method.label}_after_m"] = method.after.distances
        return frame


@dataclass(frozen=True)
class RankRow:
    rank: int
    name: str
    ede: float
    weighted_mean: float
    population: float
    # minimal new stores per target; None when even every candidate misses it
    stores: Tuple[Optional[int], ...] = ()


@dataclass(frozen=True)
class RankTable:
    rows: Tuple[RankRow, ...]
    targets_m: Tuple[float, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'rank': [r.rank for r in self.rows],
            'name': [r.name for r in self.rows],
            'ede_m': [r.ede for r in self.rows],
            'weighted_mean_m': [r.weighted_mean for r in self.rows],
            'population': [r.population for r in self.rows],
        })
        for n, target in enumerate(self.targets_m):
            frame[f"stores_{target:g}m"] = [_count(r.stores[n]) for r in self.rows]
        return frame

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format='%.3f', lineterminator='\n')

    def store_summary(self) -> pd.DataFrame:
        """Distribution of minimal store counts across cities, one row per target"""
        records = []
        for n, target in enumerate(self.targets_m):
            counts = [r.stores[n] for r in self.rows if r.stores[n] is not None]
            records.append({
                'target_m': target,
                'cities': len(self.rows),
                'feasible': len(counts),
                'infeasible': len(self.rows) - len(counts),
                'min_stores': _count(min(counts)) if counts else '-',
                'median_stores': f"{np.median(counts):g}" if counts else '-',
                'max_stores': _count(max(counts)) if counts else '-',
            })
        return pd.DataFrame(records, columns=['target_m', 'cities', 'feasible', 'infeasible',
                                              'min_stores', 'median_stores', 'max_stores'])

    def summary_csv(self) -> str:
        return self.store_summary().to_csv(index=False, float_format='%.3f', lineterminator='\n')


def _count(stores: Optional[int]) -> str:
    return '-' if stores is None else str(int(stores))


def worst_quartile_weights(baseline, populations, share: float = WORST_SHARE) -> np.ndarray:
    """
    Population weights for the `share` of residents with the worst baseline
    access; the boundary block contributes a partial weight.
    """
    z = np.asarray(baseline, dtype=float)
    p = np.asarray(populations, dtype=float)
    order = np.lexsort((np.arange(z.size), -z))
    weights = np.zeros_like(p)
    remaining = share * p.sum()
    for i in order:
        if remaining <= 0:
            break
        take = min(p[i], remaining)
        weights[i] = take
        remaining -= take
    return weights


def compare(before: AccessProfile, plans: Sequence[SitingPlan]) -> ComparisonReport:
    """Per-block before/after comparison of plans sharing one instance and baseline"""
    if not plans:
        raise ValueError("compare needs at least one plan")
    instance = plans[0].instance
    for plan in plans:
        if plan.instance is not instance and not plan.instance.equals(instance):
            raise MismatchedBaseline(f"plan '{plan.label}' was built on a different instance")
        if not np.array_equal(plan.before.distances, before.distances):
            raise MismatchedBaseline(f"plan '{plan.label}' has a different baseline")
    if instance.existing_indices.size == 0:
        raise ValueError("greenfield instance: there is no baseline access to compare against")

    populations = before.populations
    total = float(populations.sum())
    worst = worst_quartile_weights(before.distances, populations)
    labels = _unique_labels([plan.label for plan in plans])
    methods = []
    for label, plan in zip(labels, plans):
        delta = plan.after.distances - before.distances
        improved = delta < -UNCHANGED_TOLERANCE_M
        worsened = delta > UNCHANGED_TOLERANCE_M
        unchanged = ~improved & ~worsened
        if worsened.any():
            # adding sites can only shorten nearest distances
            raise AssertionError(f"plan '{label}' worsened {int(worsened.sum())} block(s)")
        methods.append(MethodComparison(
            label=label,
            plan=plan,
            after=plan.after,
            improved=int(improved.sum()),
            unchanged=int(unchanged.sum()),
            worsened=int(worsened.sum()),
            improved_share=float(populations[improved].sum() / total),
            unchanged_share=float(populations[unchanged].sum() / total),
            worsened_share=float(populations[worsened].sum() / total),
            worst_quartile_reduction=float(np.sum(worst * -delta)),
        ))
    return ComparisonReport(before=before, block_ids=tuple(instance.block_ids), methods=tuple(methods))


def _unique_labels(labels: List[str]) -> List[str]:
    seen: Dict[str, int] = {}
    unique = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        unique.append(label if seen[label] == 1 else f"{label} #{seen[label]}")
    return unique


def rank(profiles: Sequence[Tuple[str, AccessProfile, float]], targets_m: Sequence[float] = (),
         stores: Optional[Sequence[Sequence[Optional[int]]]] = None) -> RankTable:
    """
    Rank cities by EDE ascending; ties broken by name. `stores` runs parallel
    to `profiles` and holds each city's minimal store count per target.
    """
    if not profiles:
        raise ValueError("rank needs at least one city")
    targets = tuple(float(t) for t in targets_m)
    if stores is None:
        stores = [()] * len(profiles) if not targets else None
    if stores is None or len(stores) != len(profiles) or any(len(s) != len(targets) for s in stores):
        raise ValueError("stores needs one count per target for every city")
    order = sorted(range(len(profiles)), key=lambda i: (profiles[i][1].ede, profiles[i][0]))
    return RankTable(rows=tuple(
        RankRow(rank=n + 1, name=profiles[i][0], ede=profiles[i][1].ede,
                weighted_mean=profiles[i][1].weighted_mean, population=float(profiles[i][2]),
                stores=tuple(stores[i]))
        for n, i in enumerate(order)
    ), targets_m=targets)


def _plan_view(plan: Union[SitingPlan, TargetPlan]):
    """(instance, before, after, assigned site per block, new site indices)"""
    if isinstance(plan, TargetPlan):
        if plan.plan is not None:
            plan = plan.plan
        else:
            instance = plan.instance
            assigned = None
            if instance.existing_indices.size:
                assigned = assign_nearest(instance, OpenSet.with_new_sites(instance, [])).sites
            return instance, plan.before.distances, plan.before.distances, assigned, ()
    return plan.instance, plan.before.distances, plan.after.distances, plan.assigned_sites, plan.chosen_sites


def export_plan(plan: Union[SitingPlan, TargetPlan], fmt: str = 'csv') -> str:
    """Per-block CSV, or a GeoJSON FeatureCollection of sites and blocks"""
    if fmt not in EXPORT_FORMATS:
        raise ValueError(f"Unknown export format '{fmt}'. Must be one of: {', '.join(EXPORT_FORMATS)}")
    instance, before, after, assigned, new_sites = _plan_view(plan)

    if fmt == 'csv':
        if assigned is None:
            assigned_ids = [''] * len(instance.blocks)
        else:
            assigned_ids = [instance.sites[int(s)].id for s in assigned]
        frame = pd.DataFrame({
            'block_id': instance.block_ids,
            'population': instance.populations,
            'before_m': np.where(np.isfinite(before), before, np.nan),
            'after_m': np.where(np.isfinite(after), after, np.nan),
            'assigned_site_id': assigned_ids,
        })
        return frame.to_csv(index=False, lineterminator='\n')

    if not instance.has_coordinates:
        raise MissingCoordinates(f"instance '{instance.name}' has no coordinates; GeoJSON needs lat/lon")
    features: List[Dict[str, Any]] = []
    new_set = set(new_sites)
    for index, site in enumerate(instance.sites):
        if site.is_existing or index in new_set:
            features.append(_point(site.lat, site.lon, {
                'id': site.id,
                'role': 'existing' if site.is_existing else 'new',
            }))
    for index, block in enumerate(instance.blocks):
        features.append(_point(block.lat, block.lon, {
            'id': block.id,
            'role': 'block',
            'population': block.population,
            'before_m': _meters_or_none(before[index]),
            'after_m': _meters_or_none(after[index]),
        }))
    collection = {'type': 'FeatureCollection', 'name': instance.name, 'features': features}
    return json.dumps(collection, indent=2, ensure_ascii=False) + '\n'


def _meters_or_none(value: float) -> Optional[float]:
    # greenfield baselines are infinite; JSON has no Infinity
    return float(value) if np.isfinite(value) else None


def _point(lat: float, lon: float, properties: Dict[str, Any]) -> Dict[str, Any]:
    # RFC 7946: [longitude, latitude]
    return {'type': 'Feature', 'geometry': {'type': 'Point', 'coordinates': [lon, lat]},
            'properties': properties}


def export_sites_csv(plan: Union[SitingPlan, TargetPlan]) -> str:
    """Existing and newly chosen sites with their role"""
    instance, _, _, _, new_sites = _plan_view(plan)
    new_set = set(new_sites)
    rows = [
        (site.id, 'existing' if site.is_existing else 'new', site.lat, site.lon)
        for index, site in enumerate(instance.sites)
        if site.is_existing or index in new_set
    ]
    frame = pd.DataFrame(rows, columns=['site_id', 'role', 'lat', 'lon'])
    return frame.to_csv(index=False, lineterminator='\n')


def _read_template(path: Path) -> Template:
    with open(path, 'r', encoding='utf-8') as f:
        return Template(f.read(), keep_trailing_newline=True)


class ComparisonReportGenerator:
    """Renders a ComparisonReport as Markdown"""

    def __init__(self, template_path: Optional[str] = None):
        """Initialize generator with optional custom template"""
        if template_path and Path(template_path).exists():
            self.template = _read_template(Path(template_path))
        else:
            self.template = self._get_default_template()

    def generate(self, report: ComparisonReport, output_path: Optional[str] = None) -> str:
        plan = report.methods[0].plan
        text = self.template.render(
            instance=plan.instance,
            ctx=plan.ctx,
            before=report.before,
            methods=report.methods,
            food_desert_m=FOOD_DESERT_DISTANCE_M,
        )
        if output_path:
            with open(output_path, 'w', encoding='utf-8') as f:
                f.write(text)
        return text

    def _get_default_template(self) -> Template:
        template_path = Path(__file__).parent / 'comparison_report_template.md'
        if not template_path.exists():
            raise FileNotFoundError("comparison_report_template.md not found.")
        return _read_template(template_path)


class TargetReportGenerator:
    """Renders one or more TargetPlans (a target sweep) as Markdown"""

    def __init__(self, template_path: Optional[str] = None):
        """Initialize generator with optional custom template"""
        if template_path and Path(template_path).exists():
            self.template = _read_template(Path(template_path))
        else:
            self.template = self._get_default_template()

    def generate(self, plans: Sequence[TargetPlan], walk_speed_m_per_min: float,
                 output_path: Optional[str] = None) -> str:
        first = plans[0]
        text = self.template.render(
            instance=first.instance,
            ctx=first.ctx,
            before=first.before,
            all_open_ede=first.all_open_ede,
            plans=plans,
            walk_speed=walk_speed_m_per_min,
        )
        if output_path:
            with open(output_path, 'w', encoding='utf-8') as f:
                f.write(text)
        return text

    def _get_default_template(self) -> Template:
        template_path = Path(__file__).parent / 'target_report_template.md'
        if not template_path.exists():
            raise FileNotFoundError("target_report_template.md not found.")
        return _read_template(template_path)
