import json

import numpy as np
import pytest

from urbanform.manifest import (
    DatasetManifest,
    HyperparameterRecord,
    ManifestError,
    TileEntry,
    export_manifest,
    load_manifest,
    validate_manifest_doc,
)
from urbanform.pipeline import build_dataset
from urbanform.raster import GeoRaster, decode_labels
from urbanform.typology import ColorMap
from urbanform.windowing import SplitSpec, WindowSpec

from conftest import blocky_labels


@pytest.fixture
def small_dataset(tmp_path, rng):
    # 1026 wide, 1710 tall: train 1197 rows, test 513 rows.
    labels = blocky_labels(rng, 1026, 1710, block=171)
    image = GeoRaster(decode_labels(labels).data)
    manifest = build_dataset(image, labels, tmp_path / "ds")
    return manifest, tmp_path / "ds"


class TestHyperparameters:
    def test_defaults(self):
        h = HyperparameterRecord()
        assert h.optimizer == "SGD"
        assert h.learning_rate == 0.007
        assert h.epochs == 26
        assert h.num_classes == 5
        assert h.crop == 513
        assert h.backbone in ("resnet", "xception")
        assert h.output_stride == 16

    def test_json_roundtrip(self):
        h = HyperparameterRecord(backbone="xception", epochs=3)
        assert HyperparameterRecord.from_json(h.to_json()) == h

    def test_validation(self):
        with pytest.raises(ValueError):
            HyperparameterRecord(learning_rate=0)
        with pytest.raises(ValueError):
            HyperparameterRecord(backbone="vgg")


class TestExport:
    def test_train_tile_count_matches_grid_formula(self, small_dataset):
        manifest, _ = small_dataset
        # Train region 1026x1197, stride 154: x origins {0,154,308,462,513},
        # y origins {0,154,308,462,616,684} -> 5 * 6 = 30 tiles.
        assert len(manifest.entries("train")) == 30
        # Test region 1026x513, overlap 0: {0,513} x {0} -> 2 tiles.
        assert len(manifest.entries("test")) == 2

    def test_reexport_is_byte_identical(self, small_dataset):
        manifest, ds = small_dataset
        first = (ds / "manifest.json").read_bytes()
        export_manifest(manifest, ds)
        assert (ds / "manifest.json").read_bytes() == first
        # And through a full load/export cycle.
        loaded, root = load_manifest(ds / "manifest.json")
        export_manifest(loaded, root)
        assert (ds / "manifest.json").read_bytes() == first

    def test_missing_file_errors_with_path(self, small_dataset):
        manifest, ds = small_dataset
        victim = manifest.entries("train")[0].labels
        (ds / victim).unlink()
        with pytest.raises(ManifestError, match=victim):
            export_manifest(manifest, ds)

    def test_schema_validation(self, small_dataset):
        manifest, ds = small_dataset
        doc = json.loads((ds / "manifest.json").read_text())
        validate_manifest_doc(doc)
        bad = dict(doc)
        bad["split"] = dict(doc["split"], orientation="left-for-train")
        with pytest.raises(Exception):
            validate_manifest_doc(bad)

    def test_loaded_manifest_matches(self, small_dataset):
        manifest, ds = small_dataset
        loaded, _ = load_manifest(ds / "manifest.json")
        assert loaded.width == manifest.width
        assert loaded.train_rows == manifest.train_rows
        assert loaded.hyperparameters == manifest.hyperparameters
        assert loaded.palette == manifest.palette
        assert [t.origin for t in loaded.entries("test")] == [
            t.origin for t in manifest.entries("test")
        ]
        assert loaded.class_weights.weights == pytest.approx(manifest.class_weights.weights)

    def test_weights_recorded_for_train_region(self, small_dataset):
        manifest, _ = small_dataset
        w = manifest.class_weights
        assert w is not None
        mean = sum(w.weight(c) for c in (1, 2, 3, 4)) / 4
        assert mean == pytest.approx(1.0)
