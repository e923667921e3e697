"""Raster model and label encoding.

Imagery is held as uint8 numpy arrays, (h, w, 3) for RGB and (h, w) for
class indices, with an optional web-Mercator geotransform.  Files go to
disk as plain PNG plus a ``<name>.meta.json`` sidecar carrying the
geotransform and palette; the round trip is bit-exact.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .tilemath import GeoTransform
from .typology import ClassLabel, ColorMap, ColorMapError, REAL_CLASSES

NUM_CLASSES = len(ClassLabel)
IGNORE_INDEX = int(ClassLabel.UNRECOGNIZED)

#: Absorbs compression artifacts in hand-painted ground truth.
DEFAULT_COLOR_TOLERANCE = 8


@dataclass
class GeoRaster:
    """RGB (h, w, 3) or single-band (h, w) pixel grid with geo metadata."""

    data: np.ndarray
    transform: GeoTransform | None = None
    nodata: int | None = None

    def __post_init__(self):
        if self.data.ndim not in (2, 3) or (self.data.ndim == 3 and self.data.shape[2] != 3):
            raise ValueError(f"expected (h, w) or (h, w, 3) data, got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("raster must have positive dimensions")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return 1 if self.data.ndim == 2 else 3


@dataclass
class LabelRaster:
    """Per-pixel class indices (0-4) plus the palette they decode with."""

    classes: np.ndarray
    palette: ColorMap = None
    transform: GeoTransform | None = None

    def __post_init__(self):
        if self.classes.ndim != 2:
            raise ValueError(f"expected (h, w) class indices, got {self.classes.shape}")
        self.classes = np.ascontiguousarray(self.classes, dtype=np.uint8)
        if self.classes.size and int(self.classes.max()) >= NUM_CLASSES:
            raise ValueError(f"class index {int(self.classes.max())} out of range")
        if self.palette is None:
            self.palette = ColorMap()

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]


def _palette_lut(colormap: ColorMap) -> np.ndarray:
    lut = np.zeros((NUM_CLASSES, 3), dtype=np.uint8)
    for label in ClassLabel:
        lut[int(label)] = colormap.color(label)
    return lut


def encode_labels(
    rgb: GeoRaster,
    colormap: ColorMap | None = None,
    tolerance: int = DEFAULT_COLOR_TOLERANCE,
) -> LabelRaster:
    """Map each RGB pixel to the palette color within a Chebyshev ball.

    Pixels matching no palette color (per-channel distance > ``tolerance``
    for all of them) become UNRECOGNIZED.  Palette colors must be pairwise
    farther apart than 2*tolerance so a pixel can match at most one color.
    """
    if rgb.bands != 3:
        raise ValueError("encode_labels needs an RGB raster")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    cm = colormap or ColorMap()
    if cm.min_pairwise_distance() <= 2 * tolerance:
        raise ColorMapError(
            f"palette colors within 2*tolerance={2 * tolerance} of each other; "
            "matches would be ambiguous"
        )
    lut = _palette_lut(cm)
    data = rgb.data.astype(np.int16)
    out = np.full(rgb.data.shape[:2], IGNORE_INDEX, dtype=np.uint8)
    for idx in range(NUM_CLASSES):
        dist = np.abs(data - lut[idx].astype(np.int16)).max(axis=2)
        out[dist <= tolerance] = idx
    return LabelRaster(out, cm, rgb.transform)


def decode_labels(labels: LabelRaster) -> GeoRaster:
    """Expand class indices back to their palette colors."""
    lut = _palette_lut(labels.palette)
    return GeoRaster(lut[labels.classes], labels.transform)


def apply_unrecognized_mask(image: GeoRaster, labels: LabelRaster) -> GeoRaster:
    """Black out image pixels wherever the labels say UNRECOGNIZED.

    Keeps masked regions from contributing texture: a model only ever sees
    black there, so it learns to call black "unrecognized" and nothing else.
    """
    if (image.height, image.width) != (labels.height, labels.width):
        raise ValueError(
            f"dimension mismatch: image {image.width}x{image.height} vs "
            f"labels {labels.width}x{labels.height}"
        )
    out = image.data.copy()
    mask = labels.classes == IGNORE_INDEX
    out[mask] = 0
    return GeoRaster(out, image.transform, image.nodata)


@dataclass(frozen=True)
class ClassHistogram:
    """Pixel counts per class label."""

    counts: tuple

    def __post_init__(self):
        if len(self.counts) != NUM_CLASSES:
            raise ValueError(f"expected {NUM_CLASSES} counts")

    def count(self, label) -> int:
        return self.counts[int(label)]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def total_real(self) -> int:
        return int(sum(self.counts[int(c)] for c in REAL_CLASSES))


def class_histogram(labels: LabelRaster, region=None) -> ClassHistogram:
    """Exact per-class pixel counts, optionally over an (x, y, w, h) window."""
    arr = labels.classes
    if region is not None:
        x, y, w, h = region
        if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > labels.width or y + h > labels.height:
            raise ValueError(f"region {region} outside {labels.width}x{labels.height} raster")
        arr = arr[y:y + h, x:x + w]
    counts = np.bincount(arr.ravel(), minlength=NUM_CLASSES)
    return ClassHistogram(tuple(int(c) for c in counts))


@dataclass(frozen=True)
class ClassWeights:
    """Per-real-class loss weights, rescaled so their mean is 1."""

    weights: dict

    def __post_init__(self):
        if set(self.weights) != set(REAL_CLASSES):
            raise ValueError("weights must cover exactly the 4 real classes")
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("weights must be positive")

    def weight(self, label) -> float:
        return self.weights[ClassLabel(label)]

    def to_json(self) -> dict:
        return {str(int(k)): v for k, v in sorted(self.weights.items())}


def class_weights(hist: ClassHistogram, scheme: str = "inverse_freq") -> ClassWeights:
    """Balance weights over the real classes from a pixel histogram.

    ``inverse_freq`` gives raw_c = N / (4 * count_c); ``median_freq`` gives
    raw_c = median(freq) / freq_c; ``none`` gives 1 everywhere.  Classes with
    zero pixels get the largest finite raw weight so losses stay finite, and
    every scheme is rescaled to mean 1 across the 4 classes.
    """
    counts = {c: hist.count(c) for c in REAL_CLASSES}
    n_real = sum(counts.values())
    if n_real == 0:
        raise ValueError("no real-class pixels to weight")
    if scheme == "none":
        return ClassWeights({c: 1.0 for c in REAL_CLASSES})
    if scheme == "inverse_freq":
        raw = {c: n_real / (len(REAL_CLASSES) * n) for c, n in counts.items() if n > 0}
    elif scheme == "median_freq":
        freqs = {c: n / n_real for c, n in counts.items() if n > 0}
        med = float(np.median(list(freqs.values())))
        raw = {c: med / f for c, f in freqs.items()}
    else:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    top = max(raw.values())
    full = {c: raw.get(c, top) for c in REAL_CLASSES}
    mean = sum(full.values()) / len(full)
    return ClassWeights({c: w / mean for c, w in full.items()})


def _meta_for(transform, palette=None, kind="rgb") -> dict:
    meta = {"kind": kind}
    if transform is not None:
        meta["origin_px"] = [transform.origin_px, transform.origin_py]
        meta["zoom"] = transform.zoom
        meta["scale_m_per_px"] = transform.scale_m_per_px
    if palette is not None:
        meta["palette"] = palette.to_json()
    return meta


def _transform_from_meta(meta) -> GeoTransform | None:
    if "origin_px" not in meta:
        return None
    ox, oy = meta["origin_px"]
    return GeoTransform(ox, oy, meta["zoom"], meta["scale_m_per_px"])


def save_raster(raster, path) -> Path:
    """Write a GeoRaster or LabelRaster as PNG + ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(raster, LabelRaster):
        Image.fromarray(raster.classes, mode="L").save(path, format="PNG")
        meta = _meta_for(raster.transform, raster.palette, kind="labels")
    else:
        mode = "RGB" if raster.bands == 3 else "L"
        Image.fromarray(raster.data, mode=mode).save(path, format="PNG")
        meta = _meta_for(raster.transform, kind="rgb")
    sidecar = path.with_suffix(path.suffix + ".meta.json").with_name(path.stem + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_raster(path):
    """Load a PNG written by :func:`save_raster`; kind comes from the sidecar."""
    path = Path(path)
    img = Image.open(path)
    sidecar = path.with_name(path.stem + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    transform = _transform_from_meta(meta)
    if meta.get("kind") == "labels" or (not meta and img.mode == "L"):
        palette = ColorMap.from_json(meta["palette"]) if "palette" in meta else ColorMap()
        return LabelRaster(np.asarray(img.convert("L")), palette, transform)
    return GeoRaster(np.asarray(img.convert("RGB")), transform)
