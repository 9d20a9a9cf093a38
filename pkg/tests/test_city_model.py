import numpy as np
import pytest

from city_model import (
    CANDIDATE, EXISTING, Block, Instance, InstanceValidator, ParseError, Site,
    ValidationError, baseline_distances, require_valid,
)
from conftest import make_instance


def test_valid_instance_passes(t1):
    is_valid, errors = InstanceValidator.validate(t1)
    assert is_valid
    assert errors == []


def test_index_views(t1):
    assert t1.existing_indices.tolist() == [0]
    assert t1.candidate_indices.tolist() == [1, 2]
    assert t1.total_population == 160.0
    assert t1.block_ids == ['b1', 'b2', 'b3']
    assert not t1.has_coordinates


def test_instance_is_read_only(t1):
    with pytest.raises(ValueError):
        t1.distances[0, 0] = 1.0
    with pytest.raises(ValueError):
        t1.populations[0] = 1.0


def test_dimension_mismatch_reported():
    instance = make_instance('bad', [1, 2], [EXISTING], [[100.0], [200.0], [300.0]])
    is_valid, errors = instance.validation
    assert not is_valid
    assert any('dimension mismatch' in e for e in errors)


def test_negative_population_and_duplicate_ids():
    blocks = [Block('b1', -5.0), Block('b1', 10.0)]
    sites = [Site('s1', EXISTING), Site('s1', CANDIDATE)]
    instance = Instance.build('bad', blocks, sites, [[1, 2], [3, 4]])
    _, errors = instance.validation
    assert any('negative population' in e and 'b1' in e for e in errors)
    assert any('duplicate block id' in e for e in errors)
    assert any('duplicate site id' in e for e in errors)


def test_bad_distances_reported():
    instance = make_instance('bad', [1, 1], [EXISTING, CANDIDATE],
                             [[np.nan, 100], [-3.0, 50]])
    _, errors = instance.validation
    assert any('non-finite distance' in e for e in errors)
    assert any('negative distance' in e for e in errors)


def test_zero_total_population():
    instance = make_instance('empty', [0, 0], [EXISTING], [[10], [20]])
    _, errors = instance.validation
    assert "zero total population" in errors


def test_unknown_site_kind():
    instance = Instance.build('bad', [Block('b1', 1.0)], [Site('s1', 'planned')], [[5.0]])
    _, errors = instance.validation
    assert any("kind 'planned'" in e for e in errors)


def test_require_valid_raises_with_every_error():
    instance = make_instance('bad', [-1, 0], [EXISTING], [[1], [-1]])
    with pytest.raises(ValidationError) as excinfo:
        require_valid(instance)
    assert len(excinfo.value.errors) >= 2
    assert "negative population" in str(excinfo.value)


def test_baseline_uses_existing_sites(t1):
    assert baseline_distances(t1).tolist() == [200.0, 600.0, 900.0]


def test_greenfield_baseline_falls_back_to_candidates():
    instance = make_instance('green', [1, 1], [CANDIDATE, CANDIDATE], [[300, 100], [50, 400]])
    assert baseline_distances(instance).tolist() == [100.0, 50.0]


def test_equals_compares_values(t1):
    copy = Instance.build(t1.name, t1.blocks, t1.sites, np.array(t1.distances), {'note': 'x'})
    assert copy.equals(t1)
    changed = Instance.build(t1.name, t1.blocks, t1.sites, np.array(t1.distances) + 1)
    assert not changed.equals(t1)


def test_parse_error_message_has_location():
    error = ParseError('blocks.csv', "could not parse 'x' as a number", line=4, column='population')
    assert str(error) == "blocks.csv line 4, column 'population': could not parse 'x' as a number"
    assert error.line == 4
