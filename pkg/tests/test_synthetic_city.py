import numpy as np
import pytest

from city_model import baseline_distances, require_valid
from instance_loader import save_instance
from kolm_pollak import AccessProfile
from siting_planner import calibrate
from synthetic_city import SynthSpec, generate_synthetic


def test_single_block_with_its_store():
    instance = generate_synthetic(SynthSpec(grid_size=1, existing_stores=1))
    assert baseline_distances(instance).tolist() == [0.0]
    assert len(instance.candidate_indices) == 0


def test_same_seed_same_instance(tmp_path):
    spec = SynthSpec(grid_size=6, population_noise=0.3, store_placement='random', seed=9)
    first, second = generate_synthetic(spec), generate_synthetic(spec)
    assert first.equals(second)
    save_instance(first, tmp_path / 'a')
    save_instance(second, tmp_path / 'b')
    for name in ('blocks.csv', 'sites.csv', 'distances.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_different_seed_moves_random_stores():
    a = generate_synthetic(SynthSpec(grid_size=10, store_placement='random', seed=1))
    b = generate_synthetic(SynthSpec(grid_size=10, store_placement='random', seed=2))
    assert not a.equals(b)


def test_layout_and_distances():
    instance = generate_synthetic(SynthSpec(grid_size=4, spacing_m=100.0, existing_stores=1,
                                            candidate_every=2))
    require_valid(instance)
    assert len(instance.blocks) == 16
    assert instance.existing_indices.tolist() == [0]
    # lattice cells (0,0) (0,2) (2,0) (2,2); the central store sits off the lattice
    assert len(instance.candidate_indices) == 4
    assert instance.distances.min() == 0.0
    assert instance.distances.max() <= 100.0 * 3 * 2 ** 0.5 + 1e-9
    assert instance.has_coordinates


def test_radial_decay_city_is_unequal():
    instance = generate_synthetic(SynthSpec(grid_size=20, population_model='radial-decay',
                                            existing_stores=3, store_placement='center'))
    ctx = calibrate(instance)
    profile = AccessProfile.build(baseline_distances(instance), instance.populations, ctx)
    assert profile.ede > profile.weighted_mean


def test_uniform_population():
    instance = generate_synthetic(SynthSpec(grid_size=3, population_model='uniform', base_population=7.0))
    assert set(instance.populations.tolist()) == {7.0}


@pytest.mark.parametrize('field, value', [
    ('grid_size', 0),
    ('spacing_m', -1.0),
    ('population_model', 'gaussian'),
    ('existing_stores', 99),
    ('store_placement', 'edge'),
    ('population_noise', 1.5),
    ('periphery_blocks', -1),
    ('periphery_distance_m', 0.0),
    ('periphery_population', -5.0),
])
def test_bad_spec_rejected(field, value):
    settings = {'grid_size': 3}
    settings[field] = value
    with pytest.raises(ValueError):
        SynthSpec(**settings)


def test_periphery_hamlets_get_their_own_candidates():
    spec = SynthSpec(grid_size=5, spacing_m=1000.0, existing_stores=1, candidate_every=1,
                     periphery_blocks=1, periphery_distance_m=12000.0, periphery_population=5.0)
    instance = generate_synthetic(spec)
    require_valid(instance)
    assert len(instance.blocks) == 26
    assert instance.blocks[-1].id == 'H001'
    assert instance.blocks[-1].population == 5.0
    assert len(instance.existing_indices) == 1
    assert len(instance.candidate_indices) == 25
    assert instance.sites[-1].id == 'C0025'
    # hamlet to the central store, and to its own candidate
    assert instance.distances[-1, 0] == 12000.0
    assert instance.distances[-1, -1] == 0.0


def test_periphery_ring_is_evenly_spaced():
    instance = generate_synthetic(SynthSpec(grid_size=3, spacing_m=100.0, existing_stores=1,
                                            periphery_blocks=4, periphery_distance_m=5000.0))
    assert [b.id for b in instance.blocks[-4:]] == ['H001', 'H002', 'H003', 'H004']
    to_store = instance.distances[-4:, 0]
    np.testing.assert_allclose(to_store, 5000.0)
    hamlet_sites = instance.distances[-4:, -4:]
    np.testing.assert_allclose(np.diag(hamlet_sites), 0.0, atol=1e-9)
    np.testing.assert_allclose(hamlet_sites[0, 1], 5000.0 * 2 ** 0.5)
