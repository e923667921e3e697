"""Overlap gridding, spatial train/test split, and tile stitching.

Training windows slide with a stride of (1 - overlap) * size, clamped so
the final window ends exactly at the raster edge; every training pixel is
real imagery and nothing is padded.  Test windows use overlap 0.  Stitching
reverses extraction; where windows overlap, pixels are resolved by majority
vote with ties going to the lowest class index.
"""

from dataclasses import dataclass, field

import numpy as np

from .raster import GeoRaster, LabelRaster, apply_unrecognized_mask

DEFAULT_WINDOW = 513
DEFAULT_TRAIN_OVERLAP = 0.70
DEFAULT_TRAIN_FRACTION = 0.70


@dataclass(frozen=True)
class WindowSpec:
    size: int = DEFAULT_WINDOW
    overlap: float = DEFAULT_TRAIN_OVERLAP

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("window size must be >= 1")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must be in [0, 1)")

    @property
    def stride(self) -> int:
        return max(1, int(round(self.size * (1.0 - self.overlap))))


def _axis_origins(dimension: int, spec: WindowSpec) -> list[int]:
    if dimension < spec.size:
        raise ValueError(
            f"dimension {dimension} smaller than window {spec.size}; "
            "pad the mosaic before gridding"
        )
    origins = list(range(0, dimension - spec.size + 1, spec.stride))
    last = dimension - spec.size
    if origins[-1] != last:
        origins.append(last)
    return origins


@dataclass(frozen=True)
class WindowGrid:
    """Window origins along both axes for one source raster."""

    origins_x: tuple
    origins_y: tuple
    width: int
    height: int
    spec: WindowSpec = field(default_factory=WindowSpec)

    @property
    def count(self) -> int:
        return len(self.origins_x) * len(self.origins_y)

    def origins(self):
        """(ox, oy) pairs in row-major order."""
        for oy in self.origins_y:
            for ox in self.origins_x:
                yield ox, oy


def grid_windows(width: int, height: int, spec: WindowSpec) -> WindowGrid:
    """Compute the overlap grid covering a width x height raster."""
    return WindowGrid(
        origins_x=tuple(_axis_origins(width, spec)),
        origins_y=tuple(_axis_origins(height, spec)),
        width=width,
        height=height,
        spec=spec,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Horizontal split: the top ``train_fraction`` of rows train the model."""

    train_fraction: float = DEFAULT_TRAIN_FRACTION

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")

    def train_rows(self, height: int) -> int:
        return int(round(height * self.train_fraction))


def _region(raster, row0, row1):
    if isinstance(raster, LabelRaster):
        transform = raster.transform.shifted(0, row0) if raster.transform else None
        return LabelRaster(raster.classes[row0:row1].copy(), raster.palette, transform)
    transform = raster.transform.shifted(0, row0) if raster.transform else None
    return GeoRaster(raster.data[row0:row1].copy(), transform, raster.nodata)


def split_train_test(raster, spec: SplitSpec):
    """Split rows into (train, test) regions with adjusted geotransforms."""
    height = raster.height
    if height < 2:
        raise ValueError("raster too short to split")
    rows = spec.train_rows(height)
    if rows < 1 or rows >= height:
        raise ValueError(
            f"train_fraction {spec.train_fraction} leaves an empty region for "
            f"height {height}"
        )
    return _region(raster, 0, rows), _region(raster, rows, height)


@dataclass
class TileRecord:
    """One extracted window plus the provenance needed to stitch it back."""

    origin: tuple
    size: int
    role: str
    image: GeoRaster
    labels: LabelRaster | None = None


def extract_tiles(image: GeoRaster, labels, grid: WindowGrid, role: str) -> list:
    """Cut the grid's windows out of an image (and labels, when given).

    When labels are present the image is first masked with their
    UNRECOGNIZED region, so extracted tiles match what a model should see.
    """
    if (image.height, image.width) != (grid.height, grid.width):
        raise ValueError(
            f"image {image.width}x{image.height} does not match grid "
            f"{grid.width}x{grid.height}"
        )
    if labels is not None and (labels.height, labels.width) != (grid.height, grid.width):
        raise ValueError("labels do not match grid dimensions")
    if labels is not None:
        image = apply_unrecognized_mask(image, labels)
    size = grid.spec.size
    records = []
    for ox, oy in grid.origins():
        img_tile = GeoRaster(
            image.data[oy:oy + size, ox:ox + size].copy(),
            image.transform.shifted(ox, oy) if image.transform else None,
        )
        lbl_tile = None
        if labels is not None:
            lbl_tile = LabelRaster(
                labels.classes[oy:oy + size, ox:ox + size].copy(),
                labels.palette,
                labels.transform.shifted(ox, oy) if labels.transform else None,
            )
        records.append(TileRecord((ox, oy), size, role, img_tile, lbl_tile))
    return records


class CoverageError(ValueError):
    """Stitch input does not cover the output raster."""


def stitch(tiles, width: int, height: int, merge_policy: str = "majority") -> LabelRaster:
    """Reassemble (origin, LabelRaster) tiles into a width x height raster.

    Non-overlapping covers reproduce tile pixels exactly.  Overlaps resolve
    by per-pixel majority vote (ties to the lowest class index) or, with
    ``merge_policy="last"``, by the latest tile in the list.
    """
    if merge_policy not in ("majority", "last"):
        raise ValueError(f"unknown merge policy {merge_policy!r}")
    if not tiles:
        raise CoverageError("no tiles to stitch")
    palette = tiles[0][1].palette
    if merge_policy == "last":
        out = np.zeros((height, width), dtype=np.uint8)
        covered = np.zeros((height, width), dtype=bool)
        for (ox, oy), tile in tiles:
            _check_bounds(ox, oy, tile, width, height)
            out[oy:oy + tile.height, ox:ox + tile.width] = tile.classes
            covered[oy:oy + tile.height, ox:ox + tile.width] = True
    else:
        from .raster import NUM_CLASSES

        votes = np.zeros((height, width, NUM_CLASSES), dtype=np.uint16)
        eye = np.eye(NUM_CLASSES, dtype=np.uint16)
        for (ox, oy), tile in tiles:
            _check_bounds(ox, oy, tile, width, height)
            votes[oy:oy + tile.height, ox:ox + tile.width] += eye[tile.classes]
        covered = votes.sum(axis=2) > 0
        out = votes.argmax(axis=2).astype(np.uint8)  # argmax ties -> lowest index
    if not covered.all():
        ys, xs = np.nonzero(~covered)
        raise CoverageError(
            f"{(~covered).sum()} pixels uncovered, e.g. (x={int(xs[0])}, y={int(ys[0])})"
        )
    return LabelRaster(out, palette)


def _check_bounds(ox, oy, tile, width, height):
    if ox < 0 or oy < 0 or ox + tile.width > width or oy + tile.height > height:
        raise CoverageError(
            f"tile at ({ox}, {oy}) sized {tile.width}x{tile.height} exceeds "
            f"{width}x{height} output"
        )
