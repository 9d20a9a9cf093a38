import json

import numpy as np
import pytest

from city_model import MissingCoordinates, ParseError, ValidationError
from instance_loader import (
    EARTH_RADIUS_M, haversine_matrix, load_instance, load_instance_dir, read_sites,
    save_instance,
)


def write(path, text):
    path.write_text(text, encoding='utf-8')
    return path


def test_minimal_instance_with_matrix(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    distances = write(tmp_path / 'distances.csv', "block_id,s1\nb1,250\n")
    instance = load_instance(blocks, sites, distances, name='mini')
    assert instance.name == 'mini'
    assert instance.distances.tolist() == [[250.0]]
    assert instance.metadata['distance_source'] == 'matrix'


def test_matrix_is_reordered_by_id(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\nb2,20\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\ns2,candidate\n")
    distances = write(tmp_path / 'distances.csv', "block_id,s2,s1\nb2,5,6\nb1,7,8\n")
    instance = load_instance(blocks, sites, distances)
    assert instance.distances.tolist() == [[8.0, 7.0], [6.0, 5.0]]


def test_haversine_fallback_is_flagged(tmp_path, caplog):
    blocks = write(tmp_path / 'blocks.csv', "id,population,lat,lon\nb1,10,0.0,0.0\nb2,5,0.01,0.0\n")
    sites = write(tmp_path / 'sites.csv', "id,kind,lat,lon\ns1,existing,0.0,0.0\n")
    with caplog.at_level('WARNING'):
        instance = load_instance(blocks, sites)
    assert instance.metadata['distance_source'] == 'haversine'
    assert 'approximation' in instance.metadata['approximation']
    assert 'haversine' in caplog.text
    assert instance.distances[0, 0] == 0.0
    assert instance.distances[1, 0] == pytest.approx(1111.95, abs=0.01)


def test_haversine_closed_form():
    d = haversine_matrix([0.0], [0.0], [0.01], [0.0])
    assert d[0, 0] == pytest.approx(EARTH_RADIUS_M * np.radians(0.01), rel=1e-9)
    assert haversine_matrix([45.5], [-73.6], [45.5], [-73.6])[0, 0] == 0.0


def test_haversine_symmetric_in_role():
    lat_p, lon_p, lat_q, lon_q = [40.71], [-74.0], [40.75], [-73.98]
    assert haversine_matrix(lat_p, lon_p, lat_q, lon_q)[0, 0] == pytest.approx(
        haversine_matrix(lat_q, lon_q, lat_p, lon_p)[0, 0], rel=1e-12)


def test_missing_coordinates_without_matrix(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population,lat,lon\nb1,10,,\n")
    sites = write(tmp_path / 'sites.csv', "id,kind,lat,lon\ns1,existing,1.0,2.0\n")
    with pytest.raises(MissingCoordinates):
        load_instance(blocks, sites)


def test_bad_number_reports_line_and_column(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\nb2,lots\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    with pytest.raises(ParseError) as excinfo:
        load_instance(blocks, sites, write(tmp_path / 'd.csv', "id,s1\nb1,1\nb2,2\n"))
    assert excinfo.value.line == 3
    assert excinfo.value.column == 'population'
    assert 'line 3' in str(excinfo.value)


def test_ragged_row_reports_line(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\nb2,5,9,9\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    with pytest.raises(ParseError) as excinfo:
        load_instance(blocks, sites)
    assert excinfo.value.line == 3


def test_unknown_kind_is_a_parse_error(tmp_path):
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\ns2,proposed\n")
    with pytest.raises(ParseError) as excinfo:
        read_sites(sites)
    assert excinfo.value.column == 'kind'


def test_missing_matrix_row(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\nb2,5\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    with pytest.raises(ParseError) as excinfo:
        load_instance(blocks, sites, write(tmp_path / 'd.csv', "id,s1\nb1,1\n"))
    assert 'b2' in str(excinfo.value)


def test_duplicate_matrix_ids_are_parse_errors(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,10\nb2,5\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    with pytest.raises(ParseError) as excinfo:
        load_instance(blocks, sites, write(tmp_path / 'cols.csv', "block_id,s1,s1\nb1,1,9\nb2,2,9\n"))
    assert excinfo.value.line == 1
    assert "'s1'" in str(excinfo.value)
    with pytest.raises(ParseError) as excinfo:
        load_instance(blocks, sites, write(tmp_path / 'rows.csv', "block_id,s1\nb1,1\nb1,4\nb2,2\n"))
    assert excinfo.value.line == 3
    assert "'b1'" in str(excinfo.value)


def test_invalid_values_raise_validation_error(tmp_path):
    blocks = write(tmp_path / 'blocks.csv', "id,population\nb1,-10\n")
    sites = write(tmp_path / 'sites.csv', "id,kind\ns1,existing\n")
    with pytest.raises(ValidationError) as excinfo:
        load_instance(blocks, sites, write(tmp_path / 'd.csv', "id,s1\nb1,-1\n"))
    assert any('negative population' in e for e in excinfo.value.errors)
    assert any('negative distance' in e for e in excinfo.value.errors)


def test_sites_from_geojson(tmp_path):
    collection = {
        'type': 'FeatureCollection',
        'features': [
            {'type': 'Feature', 'geometry': {'type': 'Point', 'coordinates': [-75.1, 40.2]},
             'properties': {'id': 'store-1', 'kind': 'existing'}},
            {'type': 'Feature', 'geometry': {'type': 'Point', 'coordinates': [-75.0, 40.3]},
             'properties': {'id': 'lot-7', 'kind': 'candidate'}},
        ],
    }
    path = write(tmp_path / 'sites.geojson', json.dumps(collection))
    sites = read_sites(path)
    assert [s.id for s in sites] == ['store-1', 'lot-7']
    assert sites[0].lat == 40.2 and sites[0].lon == -75.1
    assert sites[1].kind == 'candidate'


def test_save_and_reload_round_trip(t1, tmp_path):
    save_instance(t1, tmp_path / 't1')
    reloaded = load_instance_dir(tmp_path / 't1', name=t1.name)
    assert reloaded.equals(t1)


def test_round_trip_with_coordinates(tmp_path):
    blocks = write(tmp_path / 'blocks.csv',
                   "id,population,lat,lon\nb1,12.5,40.0011,-75.0021\nb2,3,40.0101,-75.0107\n")
    sites = write(tmp_path / 'sites.csv', "id,kind,lat,lon\ns1,existing,40.0,-75.0\ns2,candidate,40.01,-75.01\n")
    first = load_instance(blocks, sites, name='geo')
    save_instance(first, tmp_path / 'copy')
    again = load_instance_dir(tmp_path / 'copy', name='geo')
    assert again.equals(first)
    assert again.metadata['distance_source'] == 'matrix'
