"""Local geodetic helpers: equirectangular projection, cells, bearings.

Fields are at most a few hundred meters across, so a flat-earth
equirectangular projection around the field origin is accurate to well
under GPS error.  The origin sits at the corner of cell (0, 0); rows grow
northward, columns grow eastward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutOfFieldError
from .grid import Cell, GridSpec

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class GeoOrigin:
    """Field anchor: the geodetic location of the corner of cell (0, 0)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")

    @property
    def meters_per_deg_lon(self) -> float:
        return METERS_PER_DEG_LAT * math.cos(math.radians(self.lat))


def project_to_meters(origin: GeoOrigin, lat: float, lon: float) -> tuple[float, float]:
    """(north_m, east_m) of a fix relative to the origin."""
    north = (lat - origin.lat) * METERS_PER_DEG_LAT
    east = (lon - origin.lon) * origin.meters_per_deg_lon
    return north, east


def meters_to_geo(origin: GeoOrigin, north_m: float, east_m: float) -> tuple[float, float]:
    """Inverse of project_to_meters."""
    lat = origin.lat + north_m / METERS_PER_DEG_LAT
    lon = origin.lon + east_m / origin.meters_per_deg_lon
    return lat, lon


def cell_of_meters(spec: GridSpec, north_m: float, east_m: float) -> Cell:
    """Cell containing a local position, with a one-cell tolerance band.

    Positions up to one cell outside the field clamp to the border cell;
    anything farther raises OutOfFieldError.
    """
    row = math.floor(north_m / spec.cell_size_m)
    col = math.floor(east_m / spec.cell_size_m)
    if not (-1 <= row <= spec.rows and -1 <= col <= spec.cols):
        raise OutOfFieldError(
            f"position ({north_m:.1f} m N, {east_m:.1f} m E) beyond the field margin"
        )
    return Cell(min(max(row, 0), spec.rows - 1), min(max(col, 0), spec.cols - 1))


def geo_to_cell(origin: GeoOrigin, spec: GridSpec, lat: float, lon: float) -> Cell:
    north, east = project_to_meters(origin, lat, lon)
    return cell_of_meters(spec, north, east)


def cell_center_meters(spec: GridSpec, cell: Cell) -> tuple[float, float]:
    return (
        (cell.row + 0.5) * spec.cell_size_m,
        (cell.col + 0.5) * spec.cell_size_m,
    )


def cell_center_geo(origin: GeoOrigin, spec: GridSpec, cell: Cell) -> tuple[float, float]:
    north, east = cell_center_meters(spec, cell)
    return meters_to_geo(origin, north, east)


def bearing_deg(
    from_ne: tuple[float, float], to_ne: tuple[float, float]
) -> float:
    """Compass bearing of travel, degrees clockwise from true north."""
    d_north = to_ne[0] - from_ne[0]
    d_east = to_ne[1] - from_ne[1]
    return math.degrees(math.atan2(d_east, d_north)) % 360.0
