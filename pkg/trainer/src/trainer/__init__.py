"""Reference segmentation backend: trains on and predicts over the dataset
manifest contract, with an ASPP encoder-decoder network."""

from .model import SegmentationModel
from .predict import predict
from .train import load_checkpoint, train

__all__ = ["SegmentationModel", "train", "predict", "load_checkpoint"]
