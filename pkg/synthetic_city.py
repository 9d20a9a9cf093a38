#!/usr/bin/env python3
"""
Synthetic City Generator
Builds grid cities with uniform or center-heavy populations, a handful of
existing stores and a lattice of candidate sites, for tests and demos
"""

import math
from dataclasses import dataclass

import numpy as np

from city_model import CANDIDATE, EXISTING, Block, Instance, Site

POPULATION_MODELS = ['uniform', 'radial-decay']
STORE_PLACEMENTS = ['center', 'random']
METERS_PER_DEGREE_LAT = 111_194.93  # 6 371 km sphere


@dataclass(frozen=True)
class SynthSpec:
    """Grid city recipe; identical spec (seed included) gives an identical instance"""
    grid_size: int = 20
    spacing_m: float = 200.0
    population_model: str = 'radial-decay'
    base_population: float = 100.0
    decay_length_m: float = 1500.0
    population_noise: float = 0.0
    existing_stores: int = 3
    store_placement: str = 'center'
    candidate_every: int = 2
    seed: int = 0
    name: str = 'synthetic-city'
    origin_lat: float = 40.0
    origin_lon: float = -75.0
    # isolated hamlets on a ring around the grid, each with its own candidate site
    periphery_blocks: int = 0
    periphery_distance_m: float = 12000.0
    periphery_population: float = 5.0

    def __post_init__(self):
        errors = []
        if self.grid_size < 1:
            errors.append("grid_size must be >= 1")
        if not self.spacing_m > 0:
            errors.append("spacing_m must be positive")
        if self.population_model not in POPULATION_MODELS:
            errors.append(f"population_model must be one of: {', '.join(POPULATION_MODELS)}")
        if self.base_population < 0:
            errors.append("base_population must be >= 0")
        if not self.decay_length_m > 0:
            errors.append("decay_length_m must be positive")
        if not 0 <= self.population_noise < 1:
            errors.append("population_noise must be in [0, 1)")
        if not 0 <= self.existing_stores <= self.grid_size ** 2:
            errors.append("existing_stores must be between 0 and grid_size^2")
        if self.store_placement not in STORE_PLACEMENTS:
            errors.append(f"store_placement must be one of: {', '.join(STORE_PLACEMENTS)}")
        if self.candidate_every < 1:
            errors.append("candidate_every must be >= 1")
        if self.periphery_blocks < 0:
            errors.append("periphery_blocks must be >= 0")
        if not self.periphery_distance_m > 0:
            errors.append("periphery_distance_m must be positive")
        if self.periphery_population < 0:
            errors.append("periphery_population must be >= 0")
        if errors:
            raise ValueError("Invalid synthetic city spec:\n" + "\n".join(f"  - {e}" for e in errors))


def generate_synthetic(spec: SynthSpec) -> Instance:
    """
    Grid of blocks with stores and candidates at block centroids; Euclidean meters.
    Periphery hamlets follow the grid blocks (ids H001...) and their candidate
    sites follow the grid candidates.
    """
    rng = np.random.default_rng(spec.seed)
    g = spec.grid_size
    rows, cols = np.divmod(np.arange(g * g), g)
    x = cols * spec.spacing_m
    y = rows * spec.spacing_m
    center = (g - 1) / 2 * spec.spacing_m
    radius = np.hypot(x - center, y - center)

    if spec.population_model == 'uniform':
        population = np.full(g * g, spec.base_population, dtype=float)
    else:
        population = spec.base_population * np.exp(-radius / spec.decay_length_m)
    if spec.population_noise > 0:
        population = population * rng.uniform(1 - spec.population_noise, 1 + spec.population_noise, g * g)
    population = np.round(population, 3)

    if spec.store_placement == 'center':
        stores = np.argsort(radius, kind='stable')[:spec.existing_stores]
    else:
        stores = rng.choice(g * g, size=spec.existing_stores, replace=False)
    stores = np.sort(stores)
    store_set = set(stores.tolist())
    lattice = (rows % spec.candidate_every == 0) & (cols % spec.candidate_every == 0)
    candidates = [i for i in np.flatnonzero(lattice).tolist() if i not in store_set]

    h = spec.periphery_blocks
    if h:
        angles = 2 * math.pi * np.arange(h) / h
        x = np.concatenate([x, center + spec.periphery_distance_m * np.cos(angles)])
        y = np.concatenate([y, center + spec.periphery_distance_m * np.sin(angles)])
        population = np.concatenate([population, np.full(h, round(spec.periphery_population, 3))])
        candidates += list(range(g * g, g * g + h))

    lon_scale = METERS_PER_DEGREE_LAT * math.cos(math.radians(spec.origin_lat))
    lat = np.round(spec.origin_lat + y / METERS_PER_DEGREE_LAT, 7)
    lon = np.round(spec.origin_lon + x / lon_scale, 7)

    ids = [f"B{i:05d}" for i in range(g * g)] + [f"H{n + 1:03d}" for n in range(h)]
    blocks = [
        Block(id=block_id, population=float(population[i]), lat=float(lat[i]), lon=float(lon[i]))
        for i, block_id in enumerate(ids)
    ]
    site_cells = stores.tolist() + candidates
    sites = [
        Site(id=f"E{n + 1:03d}", kind=EXISTING, lat=float(lat[i]), lon=float(lon[i]))
        for n, i in enumerate(stores.tolist())
    ] + [
        Site(id=f"C{n + 1:04d}", kind=CANDIDATE, lat=float(lat[i]), lon=float(lon[i]))
        for n, i in enumerate(candidates)
    ]
    cells = np.array(site_cells, dtype=int)
    distances = np.hypot(x[:, None] - x[None, cells], y[:, None] - y[None, cells])

    return Instance.build(
        spec.name, blocks, sites, distances,
        metadata={'distance_source': 'grid', 'seed': spec.seed},
    )
