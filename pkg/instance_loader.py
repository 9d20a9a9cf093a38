#!/usr/bin/env python3
"""
City Instance Loader
Reads blocks / sites / distance-matrix files into a validated Instance and
writes instances back out in the same CSV layout

File formats (UTF-8, comma separated, '.' decimal point):
  blocks.csv     id,population,lat,lon   (lat/lon optional when a matrix is given)
  sites.csv      id,kind,lat,lon         kind is 'existing' or 'candidate'
                 (a GeoJSON FeatureCollection of Points with a 'kind' property also works)
  distances.csv  header row of site ids, first column block ids, meters
"""

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from city_model import (
    SITE_KINDS, Block, Instance, MissingCoordinates, ParseError, Site, ValidationError,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
BLOCK_COLUMNS = ['id', 'population']
SITE_COLUMNS = ['id', 'kind']
COORD_COLUMNS = ['lat', 'lon']
HAVERSINE_NOTE = 'great-circle (haversine) approximation of walking distance'

PathLike = Union[str, Path]


def haversine_matrix(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Great-circle distances in meters between every (lat1, lon1) and every (lat2, lon2)"""
    phi1 = np.radians(np.asarray(lat1, dtype=float))[:, None]
    phi2 = np.radians(np.asarray(lat2, dtype=float))[None, :]
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2, dtype=float))[None, :] - np.radians(np.asarray(lon1, dtype=float))[:, None]
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _read_csv(path: PathLike, required: List[str]) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError:
        raise ParseError(path, "file is empty", line=1) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        match = re.search(r'line (\d+)', str(e))
        raise ParseError(path, str(e).strip(), line=int(match.group(1)) if match else None) from None
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ParseError(path, f"missing column(s): {', '.join(missing)}", line=1)
    return frame


def _number(path: PathLike, row: int, column: str, value: str, optional: bool = False) -> Optional[float]:
    text = value.strip()
    if text == '' and optional:
        return None
    try:
        return float(text)
    except ValueError:
        # +2: header line plus 1-based numbering
        raise ParseError(path, f"could not parse '{value}' as a number", line=row + 2,
                         column=column) from None


def _coords(path: PathLike, frame: pd.DataFrame, row: int) -> Tuple[Optional[float], Optional[float]]:
    if not all(c in frame.columns for c in COORD_COLUMNS):
        return None, None
    lat = _number(path, row, 'lat', frame.at[row, 'lat'], optional=True)
    lon = _number(path, row, 'lon', frame.at[row, 'lon'], optional=True)
    return lat, lon


def read_blocks(path: PathLike) -> List[Block]:
    frame = _read_csv(path, BLOCK_COLUMNS)
    blocks = []
    for row in range(len(frame)):
        lat, lon = _coords(path, frame, row)
        blocks.append(Block(
            id=frame.at[row, 'id'].strip(),
            population=_number(path, row, 'population', frame.at[row, 'population']),
            lat=lat,
            lon=lon,
        ))
    return blocks


def read_sites(path: PathLike) -> List[Site]:
    if Path(path).suffix.lower() in ('.geojson', '.json'):
        return read_sites_geojson(path)
    frame = _read_csv(path, SITE_COLUMNS)
    sites = []
    for row in range(len(frame)):
        kind = frame.at[row, 'kind'].strip().lower()
        if kind not in SITE_KINDS:
            raise ParseError(path, f"kind must be one of: {', '.join(SITE_KINDS)} (got '{kind}')",
                             line=row + 2, column='kind')
        lat, lon = _coords(path, frame, row)
        sites.append(Site(id=frame.at[row, 'id'].strip(), kind=kind, lat=lat, lon=lon))
    return sites


def read_sites_geojson(path: PathLike) -> List[Site]:
    """Sites from a FeatureCollection of Point features with 'id' and 'kind' properties"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            collection = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(path, f"invalid JSON: {e.msg}", line=e.lineno) from None
    if collection.get('type') != 'FeatureCollection':
        raise ParseError(path, "expected a GeoJSON FeatureCollection")
    sites = []
    for n, feature in enumerate(collection.get('features', [])):
        geometry = feature.get('geometry') or {}
        props = feature.get('properties') or {}
        if geometry.get('type') != 'Point':
            raise ParseError(path, f"feature {n}: only Point geometries are supported")
        kind = str(props.get('kind', '')).strip().lower()
        if kind not in SITE_KINDS:
            raise ParseError(path, f"feature {n}: kind must be one of: {', '.join(SITE_KINDS)}")
        site_id = props.get('id', feature.get('id'))
        if site_id is None:
            raise ParseError(path, f"feature {n}: missing 'id'")
        lon, lat = geometry['coordinates'][:2]
        sites.append(Site(id=str(site_id), kind=kind, lat=float(lat), lon=float(lon)))
    return sites


def read_distance_matrix(path: PathLike, blocks: List[Block], sites: List[Site]) -> np.ndarray:
    """Matrix CSV reordered to block/site order; empty cells become NaN"""
    frame = _read_csv(path, [])
    if frame.shape[1] < 2:
        raise ParseError(path, "expected a block id column followed by one column per site", line=1)
    row_ids = [r.strip() for r in frame.iloc[:, 0]]
    # pandas renames repeated headers (s1, s1.1); read them raw
    header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False, encoding='utf-8')
    col_ids = [str(c).strip() for c in header.iloc[0].tolist()[1:]]
    col_index: Dict[str, int] = {}
    for j, cid in enumerate(col_ids):
        if cid in col_index:
            raise ParseError(path, f"duplicate site column '{cid}'", line=1)
        col_index[cid] = j
    row_index: Dict[str, int] = {}
    for i, rid in enumerate(row_ids):
        if rid in row_index:
            raise ParseError(path, f"duplicate block row '{rid}'", line=i + 2)
        row_index[rid] = i
    missing_rows = [b.id for b in blocks if b.id not in row_index]
    missing_cols = [s.id for s in sites if s.id not in col_index]
    if missing_rows or missing_cols:
        problems = []
        if missing_rows:
            problems.append(f"block id(s) without a row: {', '.join(missing_rows[:5])}")
        if missing_cols:
            problems.append(f"site id(s) without a column: {', '.join(missing_cols[:5])}")
        raise ParseError(path, '; '.join(problems))

    values = np.empty((len(row_ids), len(col_ids)))
    for i in range(len(row_ids)):
        for j, column in enumerate(col_ids):
            cell = frame.iat[i, j + 1]
            parsed = _number(path, i, column, cell, optional=True)
            values[i, j] = np.nan if parsed is None else parsed
    rows = [row_index[b.id] for b in blocks]
    cols = [col_index[s.id] for s in sites]
    return values[np.ix_(rows, cols)]


def load_instance(blocks_path: PathLike, sites_path: PathLike,
                  distances_path: Optional[PathLike] = None,
                  name: Optional[str] = None) -> Instance:
    """Load and validate an instance; without a matrix, distances come from haversine"""
    blocks = read_blocks(blocks_path)
    sites = read_sites(sites_path)
    name = name or Path(blocks_path).resolve().parent.name
    metadata: Dict[str, str] = {}

    if distances_path is not None:
        matrix = read_distance_matrix(distances_path, blocks, sites)
        metadata['distance_source'] = 'matrix'
    else:
        lacking = [b.id for b in blocks if b.coord is None] + [s.id for s in sites if s.coord is None]
        if lacking:
            raise MissingCoordinates(
                f"no distance matrix given and {len(lacking)} row(s) lack lat/lon "
                f"(first: {', '.join(lacking[:5])})"
            )
        matrix = haversine_matrix([b.lat for b in blocks], [b.lon for b in blocks],
                                  [s.lat for s in sites], [s.lon for s in sites])
        metadata['distance_source'] = 'haversine'
        metadata['approximation'] = HAVERSINE_NOTE
        logger.warning("%s: %s", name, HAVERSINE_NOTE)

    instance = Instance.build(name, blocks, sites, matrix, metadata)
    is_valid, errors = instance.validation
    if not is_valid:
        raise ValidationError(errors, source=f"instance '{name}'")
    return instance


def load_instance_dir(directory: PathLike, name: Optional[str] = None) -> Instance:
    """Load blocks.csv, sites.csv (or sites.geojson) and, if present, distances.csv"""
    directory = Path(directory)
    sites_path = directory / 'sites.csv'
    if not sites_path.exists() and (directory / 'sites.geojson').exists():
        sites_path = directory / 'sites.geojson'
    distances_path = directory / 'distances.csv'
    return load_instance(
        directory / 'blocks.csv',
        sites_path,
        distances_path if distances_path.exists() else None,
        name=name or directory.resolve().name,
    )


def save_instance(instance: Instance, directory: PathLike) -> Dict[str, Path]:
    """Write blocks.csv, sites.csv and distances.csv; floats keep full precision"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        'blocks': directory / 'blocks.csv',
        'sites': directory / 'sites.csv',
        'distances': directory / 'distances.csv',
    }
    blocks = pd.DataFrame({
        'id': [b.id for b in instance.blocks],
        'population': [b.population for b in instance.blocks],
        'lat': [b.lat for b in instance.blocks],
        'lon': [b.lon for b in instance.blocks],
    })
    sites = pd.DataFrame({
        'id': [s.id for s in instance.sites],
        'kind': [s.kind for s in instance.sites],
        'lat': [s.lat for s in instance.sites],
        'lon': [s.lon for s in instance.sites],
    })
    matrix = pd.DataFrame(instance.distances, columns=instance.site_ids)
    matrix.insert(0, 'block_id', instance.block_ids)

    blocks.to_csv(paths['blocks'], index=False, lineterminator='\n')
    sites.to_csv(paths['sites'], index=False, lineterminator='\n')
    matrix.to_csv(paths['distances'], index=False, lineterminator='\n')
    return paths
