"""Dataset access through the manifest wire format.

The trainer never links the data-plane toolkit; it reads ``manifest.json``
and the tile PNGs directly.  Images come out as float tensors in [0, 1],
labels as long tensors of class indices with 0 the ignore class.
"""

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

IGNORE_INDEX = 0


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    doc = json.loads(path.read_text())
    for key in ("tiles", "hyperparameters", "classes"):
        if key not in doc:
            raise ValueError(f"manifest missing {key!r}")
    return doc, path.parent


def hyperparameters(doc: dict, overrides: dict | None = None) -> dict:
    hp = dict(doc["hyperparameters"])
    for key, value in (overrides or {}).items():
        if value is not None:
            hp[key] = value
    return hp


def class_weight_tensor(doc: dict, num_classes: int) -> torch.Tensor:
    """Loss weights from the manifest; the ignore class gets weight 0."""
    weights = torch.ones(num_classes)
    weights[IGNORE_INDEX] = 0.0
    for key, value in (doc.get("class_weights") or {}).items():
        weights[int(key)] = float(value)
    return weights


def _load_image(path) -> torch.Tensor:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)


def _load_labels(path) -> torch.Tensor:
    img = Image.open(path)
    if img.mode not in ("L", "P"):
        raise ValueError(f"{path}: labels must be a class-index PNG")
    return torch.from_numpy(np.asarray(img, dtype=np.int64))


class TileDataset(Dataset):
    """Tiles of one role; yields (image CxHxW, labels HxW, entry index)."""

    def __init__(self, manifest_path, role, require_labels=True, crop=None):
        self.doc, self.root = load_manifest(manifest_path)
        self.role = role
        self.crop = crop
        self.entries = [t for t in self.doc["tiles"] if t["role"] == role]
        if require_labels and any("labels" not in t for t in self.entries):
            raise ValueError(f"{role} tiles lack label paths")
        if not self.entries:
            raise ValueError(f"manifest has no {role} tiles")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, idx):
        entry = self.entries[idx]
        image = _load_image(self.root / entry["image"])
        labels = _load_labels(self.root / entry["labels"]) if "labels" in entry else None
        if self.crop and image.shape[-1] > self.crop:
            # Deterministic center crop; tiles normally arrive at crop size.
            top = (image.shape[-2] - self.crop) // 2
            left = (image.shape[-1] - self.crop) // 2
            image = image[:, top:top + self.crop, left:left + self.crop]
            if labels is not None:
                labels = labels[top:top + self.crop, left:left + self.crop]
        if labels is None:
            return image, idx
        return image, labels, idx
