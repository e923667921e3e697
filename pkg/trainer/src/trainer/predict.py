"""Prediction per the backend wire contract.

Writes one class-index PNG per test tile into the output directory, named
after the tile's image file, exactly what the pipeline's external-backend
runner expects.
"""

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import TileDataset, _load_image
from .train import load_checkpoint


def predict(ckpt_path, manifest_path, outdir, device="cpu") -> list:
    """Run the checkpointed model over the manifest's test tiles."""
    model, hp = load_checkpoint(ckpt_path, device)
    dataset = TileDataset(manifest_path, "test", require_labels=False)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with torch.no_grad():
        for entry in dataset.entries:
            image = _load_image(dataset.root / entry["image"]).unsqueeze(0).to(device)
            logits = model(image)
            classes = logits.argmax(dim=1).squeeze(0).to(torch.uint8).cpu().numpy()
            if classes.shape != image.shape[-2:]:
                raise RuntimeError(
                    f"prediction shape {classes.shape} does not match input"
                )
            target = outdir / Path(entry["image"]).name
            Image.fromarray(np.ascontiguousarray(classes), mode="L").save(
                target, format="PNG"
            )
            written.append(target)
    return written
