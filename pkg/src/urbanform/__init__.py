"""Urban environment mapping toolkit.

Acquires web-Mercator satellite imagery, supports expert annotation on a
400 m grid with a two-axis typology, encodes labels into the four
formal/informal classes, produces overlap-gridded training tiles and
non-overlapping test tiles, runs pluggable segmentation backends, stitches
predictions and scores them with pixel-wise metrics.
"""

from .typology import (
    BuildingDiversity,
    ClassLabel,
    ColorMap,
    StreetPattern,
    TypologyCode,
    class_color,
    classify_code,
    parse_code,
)
from .tilemath import (
    GeoPoint,
    GeoTransform,
    TileCoord,
    ground_resolution,
    latlon_to_global_pixel,
    quadkey_to_tile,
    tile_to_quadkey,
)
from .raster import (
    ClassHistogram,
    ClassWeights,
    GeoRaster,
    LabelRaster,
    apply_unrecognized_mask,
    class_histogram,
    class_weights,
    decode_labels,
    encode_labels,
    load_raster,
    save_raster,
)
from .windowing import (
    SplitSpec,
    TileRecord,
    WindowGrid,
    WindowSpec,
    extract_tiles,
    grid_windows,
    split_train_test,
    stitch,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    accuracy,
    confusion,
    iou,
    miou,
    precision,
    recall,
)
from .manifest import DatasetManifest, HyperparameterRecord, load_manifest
from .pipeline import build_dataset, evaluate_run, run_inference

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
