"""Fine-tuning loop: SGD over class-weighted cross-entropy, ignore class out."""

import json
import time
from pathlib import Path

import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import IGNORE_INDEX, TileDataset, class_weight_tensor, hyperparameters, load_manifest
from .model import SegmentationModel


def build_loss(doc, num_classes, use_class_weights=True):
    weight = class_weight_tensor(doc, num_classes) if use_class_weights else None
    return nn.CrossEntropyLoss(weight=weight, ignore_index=IGNORE_INDEX)


def train(manifest_path, out_ckpt, overrides=None, batch_size=2, seed=0,
          use_class_weights=True, log_path=None, device="cpu",
          aspp_channels=256, resnet_depth=18, momentum=0.9):
    """Train per the manifest's hyper-parameters; returns the checkpoint path.

    ``overrides`` may replace individual hyperparameters (e.g. a short
    smoke run with fewer epochs); everything else comes from the manifest.
    """
    doc, _ = load_manifest(manifest_path)
    hp = hyperparameters(doc, overrides)
    torch.manual_seed(seed)

    if batch_size < 2:
        # The ASPP pooling branch batch-normalizes a 1x1 map; it needs at
        # least two samples per training batch.
        raise ValueError("batch_size must be >= 2")
    dataset = TileDataset(manifest_path, "train", crop=hp["crop"])
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=True,
                        num_workers=0, drop_last=len(dataset) % batch_size == 1,
                        generator=torch.Generator().manual_seed(seed))
    model = SegmentationModel(
        num_classes=hp["num_classes"],
        backbone=hp["backbone"],
        output_stride=hp["output_stride"],
        aspp_channels=aspp_channels,
        resnet_depth=resnet_depth,
    ).to(device)
    criterion = build_loss(doc, hp["num_classes"], use_class_weights).to(device)
    optimizer = torch.optim.SGD(model.parameters(), lr=hp["learning_rate"],
                                momentum=momentum)

    log = []
    model.train()
    for epoch in range(hp["epochs"]):
        epoch_loss = 0.0
        batches = 0
        t0 = time.monotonic()
        for images, labels, _ in loader:
            images, labels = images.to(device), labels.to(device)
            optimizer.zero_grad()
            logits = model(images)
            loss = criterion(logits, labels)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1
        entry = {
            "epoch": epoch,
            "mean_loss": epoch_loss / max(batches, 1),
            "batches": batches,
            "seconds": round(time.monotonic() - t0, 3),
        }
        log.append(entry)

    # Short runs leave batch-norm running statistics far behind the
    # trained weights; recompute them over the training set so eval-mode
    # inference sees the same normalization training did.
    torch.optim.swa_utils.update_bn(loader, model, device=device)

    out_ckpt = Path(out_ckpt)
    out_ckpt.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "model_state": model.state_dict(),
            "hyperparameters": hp,
            "aspp_channels": aspp_channels,
            "resnet_depth": resnet_depth,
            "seed": seed,
            "loss_log": log,
        },
        out_ckpt,
    )
    if log_path is not None:
        Path(log_path).write_text(json.dumps(log, indent=2) + "\n")
    return out_ckpt, log


def load_checkpoint(ckpt_path, device="cpu"):
    ckpt = torch.load(ckpt_path, map_location=device, weights_only=False)
    hp = ckpt["hyperparameters"]
    model = SegmentationModel(
        num_classes=hp["num_classes"],
        backbone=hp["backbone"],
        output_stride=hp["output_stride"],
        aspp_channels=ckpt.get("aspp_channels", 256),
        resnet_depth=ckpt.get("resnet_depth", 18),
    ).to(device)
    model.load_state_dict(ckpt["model_state"])
    model.eval()
    return model, hp
