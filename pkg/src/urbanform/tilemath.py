"""Spherical web-Mercator tile arithmetic.

Follows the common tile-server convention: 256 px tiles, earth radius
6378137 m, latitudes clamped at +-85.05112878 degrees.  Quadkeys address
tiles the way aerial imagery endpoints expect them, interleaving the bits
of y and x from the most significant level down.
"""

import math
from dataclasses import dataclass, replace

EARTH_RADIUS_M = 6378137.0
TILE_SIZE = 256
MIN_LATITUDE = -85.05112878
MAX_LATITUDE = 85.05112878
MIN_ZOOM = 0
MAX_ZOOM = 23


def _clip(value, lo, hi):
    return min(max(value, lo), hi)


def map_size(zoom: int) -> int:
    """World width/height in pixels at a zoom level."""
    if not MIN_ZOOM <= zoom <= MAX_ZOOM:
        raise ValueError(f"zoom {zoom} outside [{MIN_ZOOM}, {MAX_ZOOM}]")
    return TILE_SIZE << zoom


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic point, clamped/wrapped into the web-Mercator validity range."""

    lat: float
    lon: float

    def __post_init__(self):
        object.__setattr__(self, "lat", _clip(self.lat, MIN_LATITUDE, MAX_LATITUDE))
        object.__setattr__(self, "lon", ((self.lon + 180.0) % 360.0) - 180.0)


@dataclass(frozen=True, order=True)
class TileCoord:
    """Tile address; x and y must lie inside the zoom level's tile grid."""

    x: int
    y: int
    zoom: int

    def __post_init__(self):
        if not 1 <= self.zoom <= MAX_ZOOM:
            raise ValueError(f"zoom {self.zoom} outside [1, {MAX_ZOOM}]")
        n = 1 << self.zoom
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise ValueError(f"tile ({self.x}, {self.y}) outside zoom-{self.zoom} grid")


@dataclass(frozen=True)
class GeoTransform:
    """Maps raster pixel (0, 0) to a global pixel position at a zoom level.

    ``scale_m_per_px`` is the ground resolution at the raster's center
    latitude, recorded for area/length bookkeeping.
    """

    origin_px: float
    origin_py: float
    zoom: int
    scale_m_per_px: float

    def __post_init__(self):
        if self.scale_m_per_px <= 0:
            raise ValueError("scale must be positive")

    def shifted(self, dx: float, dy: float) -> "GeoTransform":
        """Transform for a sub-raster whose (0,0) sits at (dx, dy) of this one."""
        return replace(self, origin_px=self.origin_px + dx, origin_py=self.origin_py + dy)


def ground_resolution(lat: float, zoom: int) -> float:
    """Meters of ground sampled by one pixel at a latitude and zoom level."""
    lat = _clip(lat, MIN_LATITUDE, MAX_LATITUDE)
    return (
        math.cos(lat * math.pi / 180.0)
        * 2.0
        * math.pi
        * EARTH_RADIUS_M
        / map_size(zoom)
    )


def latlon_to_global_pixel(point: GeoPoint, zoom: int) -> tuple[float, float]:
    """Project a point to continuous global pixel coordinates.

    Both coordinates are clamped to [0, map_size - 1].
    """
    size = map_size(zoom)
    x = (point.lon + 180.0) / 360.0
    sin_lat = math.sin(point.lat * math.pi / 180.0)
    y = 0.5 - math.log((1.0 + sin_lat) / (1.0 - sin_lat)) / (4.0 * math.pi)
    px = _clip(x * size, 0.0, size - 1.0)
    py = _clip(y * size, 0.0, size - 1.0)
    return px, py


def global_pixel_to_latlon(px: float, py: float, zoom: int) -> GeoPoint:
    """Inverse projection of :func:`latlon_to_global_pixel`."""
    size = map_size(zoom)
    x = _clip(px, 0.0, size) / size - 0.5
    y = 0.5 - _clip(py, 0.0, size) / size
    lat = 90.0 - 360.0 * math.atan(math.exp(-y * 2.0 * math.pi)) / math.pi
    lon = 360.0 * x
    return GeoPoint(lat, lon)


def global_pixel_to_tile(px: float, py: float, zoom: int) -> TileCoord:
    """Tile containing a global pixel."""
    n = 1 << zoom
    tx = int(_clip(px // TILE_SIZE, 0, n - 1))
    ty = int(_clip(py // TILE_SIZE, 0, n - 1))
    return TileCoord(tx, ty, zoom)


def tile_origin_pixel(tile: TileCoord) -> tuple[int, int]:
    """Global pixel of a tile's top-left corner."""
    return tile.x * TILE_SIZE, tile.y * TILE_SIZE


def tile_to_quadkey(tile: TileCoord) -> str:
    """Base-4 tile address, one digit per zoom level from the top."""
    digits = []
    for i in range(tile.zoom, 0, -1):
        mask = 1 << (i - 1)
        digit = 0
        if tile.x & mask:
            digit += 1
        if tile.y & mask:
            digit += 2
        digits.append(str(digit))
    return "".join(digits)


def quadkey_to_tile(quadkey: str) -> TileCoord:
    """Inverse of :func:`tile_to_quadkey`."""
    if not quadkey:
        raise ValueError("empty quadkey")
    x = y = 0
    for ch in quadkey:
        if ch not in "0123":
            raise ValueError(f"invalid quadkey digit {ch!r} in {quadkey!r}")
        d = int(ch)
        x = (x << 1) | (d & 1)
        y = (y << 1) | (d >> 1)
    return TileCoord(x, y, len(quadkey))


def bbox_to_tile_range(
    corner1: GeoPoint, corner2: GeoPoint, zoom: int
) -> tuple[TileCoord, TileCoord]:
    """Minimal inclusive tile rectangle covering a bounding box.

    Returns (top-left tile, bottom-right tile).  Corners may be given in
    any order; a zero-area box is rejected.
    """
    if corner1.lat == corner2.lat or corner1.lon == corner2.lon:
        raise ValueError("degenerate bounding box (zero area)")
    x1, y1 = latlon_to_global_pixel(corner1, zoom)
    x2, y2 = latlon_to_global_pixel(corner2, zoom)
    min_tile = global_pixel_to_tile(min(x1, x2), min(y1, y2), zoom)
    max_tile = global_pixel_to_tile(max(x1, x2), max(y1, y2), zoom)
    return min_tile, max_tile


def _snap(value: float, eps: float = 1e-6) -> float:
    """Collapse projection round-trip noise onto exact pixel boundaries."""
    nearest = round(value)
    return float(nearest) if abs(value - nearest) < eps else value


def bbox_pixel_rect(
    corner1: GeoPoint, corner2: GeoPoint, zoom: int
) -> tuple[int, int, int, int]:
    """Integer global pixel rectangle (x0, y0, x1, y1) spanned by a bbox.

    x1/y1 are exclusive; the rectangle is the bbox's pixel span at the zoom
    level, with fractional edges widened outward.
    """
    if corner1.lat == corner2.lat or corner1.lon == corner2.lon:
        raise ValueError("degenerate bounding box (zero area)")
    x1, y1 = latlon_to_global_pixel(corner1, zoom)
    x2, y2 = latlon_to_global_pixel(corner2, zoom)
    x0 = int(math.floor(_snap(min(x1, x2))))
    y0 = int(math.floor(_snap(min(y1, y2))))
    x1e = int(math.ceil(_snap(max(x1, x2))))
    y1e = int(math.ceil(_snap(max(y1, y2))))
    return x0, y0, x1e, y1e


def transform_for_bbox(corner1: GeoPoint, corner2: GeoPoint, zoom: int) -> GeoTransform:
    """GeoTransform anchored at the bbox's top-left pixel, scaled at its center."""
    x0, y0, x1, y1 = bbox_pixel_rect(corner1, corner2, zoom)
    center = global_pixel_to_latlon((x0 + x1) / 2.0, (y0 + y1) / 2.0, zoom)
    return GeoTransform(x0, y0, zoom, ground_resolution(center.lat, zoom))
