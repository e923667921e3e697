"""Dataset manifest: the JSON contract between gridding, training and eval.

A dataset directory holds tile PNGs under ``train/`` and ``test/`` plus a
``manifest.json`` describing the source raster, split, window grids, class
table, balance weights and training hyperparameters.  Export is
deterministic: re-exporting an unchanged dataset is byte-identical.
"""

import json
from dataclasses import dataclass, asdict, field
from importlib import resources
from pathlib import Path

import jsonschema

from .raster import ClassWeights
from .typology import ClassLabel, ColorMap
from .windowing import SplitSpec, WindowSpec

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HyperparameterRecord:
    """Training settings recorded with every dataset."""

    optimizer: str = "SGD"
    learning_rate: float = 0.007
    epochs: int = 26
    num_classes: int = 5
    crop: int = 513
    backbone: str = "resnet"
    output_stride: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.crop <= 0:
            raise ValueError("hyperparameters must be positive")
        if self.backbone not in ("resnet", "xception"):
            raise ValueError(f"unknown backbone {self.backbone!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "HyperparameterRecord":
        return cls(**doc)


@dataclass(frozen=True)
class TileEntry:
    role: str
    origin: tuple
    image: str
    labels: str | None = None

    def to_json(self) -> dict:
        doc = {"role": self.role, "origin": list(self.origin), "image": self.image}
        if self.labels is not None:
            doc["labels"] = self.labels
        return doc


@dataclass
class DatasetManifest:
    width: int
    height: int
    zoom: int | None
    origin_px: tuple | None
    scale_m_per_px: float | None
    split: SplitSpec
    train_rows: int
    train_window: WindowSpec
    test_window: WindowSpec
    palette: ColorMap
    class_weights: ClassWeights | None
    hyperparameters: HyperparameterRecord
    tiles: list = field(default_factory=list)

    def entries(self, role: str) -> list:
        return [t for t in self.tiles if t.role == role]

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "raster": {
                "width": self.width,
                "height": self.height,
                "zoom": self.zoom,
                "origin_px": list(self.origin_px) if self.origin_px else None,
                "scale_m_per_px": self.scale_m_per_px,
            },
            "split": {
                "train_fraction": self.split.train_fraction,
                "orientation": "top-for-train",
                "train_rows": self.train_rows,
                "test_rows": self.height - self.train_rows,
            },
            "windows": {
                "train": {"size": self.train_window.size,
                          "overlap": self.train_window.overlap,
                          "stride": self.train_window.stride},
                "test": {"size": self.test_window.size,
                         "overlap": self.test_window.overlap,
                         "stride": self.test_window.stride},
            },
            "classes": [
                {"index": int(label), "name": label.display_name,
                 "color": list(self.palette.color(label))}
                for label in ClassLabel
            ],
            "class_weights": self.class_weights.to_json() if self.class_weights else None,
            "hyperparameters": self.hyperparameters.to_json(),
            "tiles": [t.to_json() for t in self._sorted_tiles()],
        }

    def _sorted_tiles(self):
        return sorted(self.tiles, key=lambda t: (t.role, t.origin[1], t.origin[0]))


def manifest_schema() -> dict:
    text = resources.files("urbanform.schemas").joinpath("manifest.schema.json").read_text()
    return json.loads(text)


def validate_manifest_doc(doc: dict):
    jsonschema.validate(doc, manifest_schema())


class ManifestError(ValueError):
    pass


def export_manifest(manifest: DatasetManifest, dataset_dir) -> Path:
    """Validate tile files exist, then write ``manifest.json`` deterministically."""
    dataset_dir = Path(dataset_dir)
    for entry in manifest.tiles:
        for rel in (entry.image, entry.labels):
            if rel is not None and not (dataset_dir / rel).exists():
                raise ManifestError(f"manifest references missing file: {rel}")
    doc = manifest.to_json()
    validate_manifest_doc(doc)
    path = dataset_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path) -> tuple[DatasetManifest, Path]:
    """Read and validate a manifest; returns it plus the dataset root."""
    path = Path(path)
    doc = json.loads(path.read_text())
    validate_manifest_doc(doc)
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema_version {doc['schema_version']}")
    raster = doc["raster"]
    palette = ColorMap.from_json(
        {str(c["index"]): c["color"] for c in doc["classes"]}
    )
    weights = None
    if doc.get("class_weights"):
        weights = ClassWeights(
            {ClassLabel(int(k)): float(v) for k, v in doc["class_weights"].items()}
        )
    manifest = DatasetManifest(
        width=raster["width"],
        height=raster["height"],
        zoom=raster.get("zoom"),
        origin_px=tuple(raster["origin_px"]) if raster.get("origin_px") else None,
        scale_m_per_px=raster.get("scale_m_per_px"),
        split=SplitSpec(doc["split"]["train_fraction"]),
        train_rows=doc["split"]["train_rows"],
        train_window=WindowSpec(doc["windows"]["train"]["size"],
                                doc["windows"]["train"]["overlap"]),
        test_window=WindowSpec(doc["windows"]["test"]["size"],
                               doc["windows"]["test"]["overlap"]),
        palette=palette,
        class_weights=weights,
        hyperparameters=HyperparameterRecord.from_json(doc["hyperparameters"]),
        tiles=[
            TileEntry(t["role"], tuple(t["origin"]), t["image"], t.get("labels"))
            for t in doc["tiles"]
        ],
    )
    return manifest, path.parent
