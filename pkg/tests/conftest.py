import itertools
import math
from decimal import Decimal, localcontext

import numpy as np
import pytest

from city_model import CANDIDATE, EXISTING, Block, Instance, Site


def make_instance(name, populations, kinds, distances, coords=None):
    blocks = [
        Block(id=f"b{i + 1}", population=float(p),
              lat=None if coords is None else coords[i][0],
              lon=None if coords is None else coords[i][1])
        for i, p in enumerate(populations)
    ]
    sites = [Site(id=f"s{j + 1}", kind=kind) for j, kind in enumerate(kinds)]
    return Instance.build(name, blocks, sites, distances)


@pytest.fixture
def t1():
    """Three blocks, one existing store (s1), two candidates (s2, s3)"""
    return make_instance(
        't1',
        [100, 50, 10],
        [EXISTING, CANDIDATE, CANDIDATE],
        [[200, 800, 1500],
         [600, 300, 1200],
         [900, 700, 100]],
    )


@pytest.fixture
def sprawl():
    """
    Dense core block A and a small peripheral block B. c1 helps the core,
    c2 rescues the periphery.
    """
    blocks = [Block('A', 1000.0), Block('B', 50.0)]
    sites = [Site('E', EXISTING), Site('c1', CANDIDATE), Site('c2', CANDIDATE)]
    return Instance.build('sprawl', blocks, sites, [[600, 100, 3500], [3000, 3000, 100]])


def random_instance(seed, n_blocks=None, n_existing=None, n_candidates=None, scale=3000.0):
    rng = np.random.default_rng(seed)
    n_blocks = n_blocks or int(rng.integers(5, 31))
    n_existing = int(rng.integers(1, 3)) if n_existing is None else n_existing
    n_candidates = n_candidates or int(rng.integers(4, 13))
    block_xy = rng.uniform(0, scale, (n_blocks, 2))
    site_xy = rng.uniform(0, scale, (n_existing + n_candidates, 2))
    distances = np.hypot(block_xy[:, None, 0] - site_xy[None, :, 0],
                         block_xy[:, None, 1] - site_xy[None, :, 1])
    populations = np.round(rng.uniform(0, 500, n_blocks), 1)
    populations[rng.random(n_blocks) < 0.1] = 0.0
    populations[0] = max(populations[0], 1.0)
    kinds = [EXISTING] * n_existing + [CANDIDATE] * n_candidates
    return make_instance(f"random-{seed}", populations, kinds, distances)


@pytest.fixture
def random_city():
    return random_instance


def brute_force(instance, k, score):
    """(best value, best new-site tuple) over every k-subset of candidates"""
    existing = instance.existing_indices.tolist()
    best = (math.inf, None)
    for combo in itertools.combinations(instance.candidate_indices.tolist(), k):
        z = instance.distances[:, existing + list(combo)].min(axis=1)
        value = score(z)
        if value < best[0]:
            best = (value, combo)
    return best


def decimal_ede(distances, populations, kappa):
    """Kolm-Pollak EDE evaluated with 60-digit decimals"""
    with localcontext() as ctx:
        ctx.prec = 60
        k = Decimal(kappa)
        pairs = [(Decimal(float(p)), Decimal(float(z))) for z, p in zip(distances, populations) if p > 0]
        total = sum(p for p, _ in pairs)
        s = sum(p * (-k * z).exp() for p, z in pairs)
        return float(-(s / total).ln() / k)
