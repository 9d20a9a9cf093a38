#!/usr/bin/env python3
"""
City Instance Data Model
Demand blocks, amenity sites and the block x site walking-distance matrix
shared by every other module of the siting engine
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


EXISTING = 'existing'
CANDIDATE = 'candidate'
SITE_KINDS = (EXISTING, CANDIDATE)


class ValidationError(ValueError):
    """Instance failed validation; carries every violation found"""

    def __init__(self, errors: Sequence[str], source: str = 'instance'):
        self.errors = list(errors)
        self.source = source
        super().__init__(
            f"Invalid {source}:\n" + "\n".join(f"  - {e}" for e in self.errors)
        )


class ParseError(ValueError):
    """Input file could not be parsed; line is 1-based and counts the header"""

    def __init__(self, path: str, message: str, line: Optional[int] = None,
                 column: Optional[str] = None):
        self.path = str(path)
        self.line = line
        self.column = column
        location = self.path
        if line is not None:
            location += f" line {line}"
        if column is not None:
            location += f", column '{column}'"
        super().__init__(f"{location}: {message}")


class MissingCoordinates(ValueError):
    """Geometry was required but some blocks or sites have no lat/lon"""


class BudgetExceedsCandidates(ValueError):
    """Requested more new sites than there are candidate locations"""

    def __init__(self, k: int, available: int):
        self.k = k
        self.available = available
        super().__init__(
            f"Budget k={k} exceeds the {available} candidate site(s) available"
        )


class MismatchedBaseline(ValueError):
    """Plans being compared were not built from the same baseline access"""


@dataclass(frozen=True)
class Block:
    """A Census-block-like demand unit"""
    id: str
    population: float
    lat: Optional[float] = None
    lon: Optional[float] = None

    @property
    def coord(self) -> Optional[Tuple[float, float]]:
        if self.lat is None or self.lon is None:
            return None
        return (self.lat, self.lon)


@dataclass(frozen=True)
class Site:
    """An existing amenity or a candidate location for a new one"""
    id: str
    kind: str
    lat: Optional[float] = None
    lon: Optional[float] = None

    @property
    def coord(self) -> Optional[Tuple[float, float]]:
        if self.lat is None or self.lon is None:
            return None
        return (self.lat, self.lon)

    @property
    def is_existing(self) -> bool:
        return self.kind == EXISTING


@dataclass(frozen=True, eq=False)
class Instance:
    """
    One city: blocks, sites and a dense |blocks| x |sites| distance matrix in meters.

    Row order of `distances` follows `blocks`, column order follows `sites`.
    Instances are read-only once built.
    """
    name: str
    blocks: Tuple[Block, ...]
    sites: Tuple[Site, ...]
    distances: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(cls, name: str, blocks: Sequence[Block], sites: Sequence[Site],
              distances: Any, metadata: Optional[Dict[str, Any]] = None) -> 'Instance':
        """Freeze inputs into an Instance (does not validate)"""
        matrix = np.array(distances, dtype=float, copy=True)
        if matrix.ndim == 1 and matrix.size == 0:
            matrix = matrix.reshape(len(blocks), len(sites))
        matrix.setflags(write=False)
        return cls(
            name=name,
            blocks=tuple(blocks),
            sites=tuple(sites),
            distances=matrix,
            metadata=dict(metadata or {}),
        )

    @cached_property
    def populations(self) -> np.ndarray:
        values = np.array([b.population for b in self.blocks], dtype=float)
        values.setflags(write=False)
        return values

    @cached_property
    def existing_indices(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.sites) if s.kind == EXISTING], dtype=int)

    @cached_property
    def candidate_indices(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.sites) if s.kind == CANDIDATE], dtype=int)

    @property
    def total_population(self) -> float:
        return float(self.populations.sum())

    @property
    def block_ids(self) -> List[str]:
        return [b.id for b in self.blocks]

    @property
    def site_ids(self) -> List[str]:
        return [s.id for s in self.sites]

    @property
    def has_coordinates(self) -> bool:
        return all(b.coord is not None for b in self.blocks) and \
            all(s.coord is not None for s in self.sites)

    @cached_property
    def validation(self) -> 'ValidationReport':
        return InstanceValidator.validate(self)

    def equals(self, other: 'Instance') -> bool:
        """Value equality (name, blocks, sites and matrix; metadata ignored)"""
        return (
            self.name == other.name
            and self.blocks == other.blocks
            and self.sites == other.sites
            and self.distances.shape == other.distances.shape
            and bool(np.array_equal(self.distances, other.distances))
        )


class ValidationReport(NamedTuple):
    is_valid: bool
    errors: List[str]


class InstanceValidator:
    """Validates a city instance before any metric or solver touches it"""

    @staticmethod
    def validate(instance: Instance) -> ValidationReport:
        """Validate instance and return (is_valid, errors)"""
        errors = []
        n_blocks = len(instance.blocks)
        n_sites = len(instance.sites)

        if n_blocks == 0:
            errors.append("instance has no blocks")
        if n_sites == 0:
            errors.append("instance has no sites (existing or candidate)")

        shape = instance.distances.shape
        if len(shape) != 2 or shape != (n_blocks, n_sites):
            errors.append(
                f"dimension mismatch: distance matrix is {shape}, "
                f"expected ({n_blocks}, {n_sites}) for blocks x sites"
            )

        seen_blocks = set()
        for block in instance.blocks:
            if block.id in seen_blocks:
                errors.append(f"duplicate block id: {block.id}")
            seen_blocks.add(block.id)
            if not np.isfinite(block.population):
                errors.append(f"non-finite population for block {block.id}")
            elif block.population < 0:
                errors.append(f"negative population for block {block.id}: {block.population}")

        seen_sites = set()
        for site in instance.sites:
            if site.id in seen_sites:
                errors.append(f"duplicate site id: {site.id}")
            seen_sites.add(site.id)
            if site.kind not in SITE_KINDS:
                errors.append(
                    f"site {site.id} has kind '{site.kind}'; must be one of: {', '.join(SITE_KINDS)}"
                )

        populations = np.array([b.population for b in instance.blocks], dtype=float)
        if n_blocks and np.all(np.isfinite(populations)) and populations.sum() <= 0:
            errors.append("zero total population")

        matrix = instance.distances
        if matrix.size:
            bad = ~np.isfinite(matrix)
            if bad.any():
                r, c = np.argwhere(bad)[0]
                errors.append(
                    f"non-finite distance: {int(bad.sum())} entr(y/ies), first at "
                    f"block row {int(r)}, site column {int(c)}"
                )
            negative = np.isfinite(matrix) & (matrix < 0)
            if negative.any():
                r, c = np.argwhere(negative)[0]
                errors.append(
                    f"negative distance: {int(negative.sum())} entr(y/ies), first at "
                    f"block row {int(r)}, site column {int(c)}"
                )

        return ValidationReport(len(errors) == 0, errors)


def require_valid(instance: Instance) -> Instance:
    """Raise ValidationError unless the instance passes validation"""
    report = instance.validation
    if not report.is_valid:
        raise ValidationError(report.errors, source=f"instance '{instance.name}'")
    return instance


def baseline_distances(instance: Instance) -> np.ndarray:
    """
    Distance from each block to its nearest existing site.

    Greenfield instances (no existing sites) fall back to the nearest
    candidate; this is only used to calibrate alpha.
    """
    require_valid(instance)
    columns = instance.existing_indices
    if columns.size == 0:
        columns = instance.candidate_indices
    return instance.distances[:, columns].min(axis=1)
