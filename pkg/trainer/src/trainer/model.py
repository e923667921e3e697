"""Encoder-decoder segmentation network with atrous spatial pyramid pooling.

Composed from standard torchvision building blocks: a ResNet trunk with the
last stage dilated for an output stride of 16, the stock ASPP block (one
1x1 branch, three atrous branches, global pooling), and a light decoder
that upsamples the ASPP output 4x, concatenates reduced low-level features
and refines with 3x3 convolutions before the final 4x upsample.
"""

import torch
from torch import nn
from torch.nn import functional as F
from torchvision.models import resnet18, resnet50
from torchvision.models._utils import IntermediateLayerGetter
from torchvision.models.segmentation.deeplabv3 import ASPP


class SeparableConv2d(nn.Module):
    """Depthwise 3x3 + pointwise 1x1, the separable unit used throughout."""

    def __init__(self, in_ch, out_ch, stride=1, dilation=1):
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_ch, in_ch, 3, stride=stride, padding=dilation,
            dilation=dilation, groups=in_ch, bias=False,
        )
        self.pointwise = nn.Conv2d(in_ch, out_ch, 1, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.bn(self.pointwise(self.depthwise(x))))


class SeparableBackbone(nn.Module):
    """Small separable-convolution trunk (entry 1/4, exit 1/16)."""

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            SeparableConv2d(32, 64, stride=2),
        )
        self.low = nn.Sequential(SeparableConv2d(64, 64), SeparableConv2d(64, 64))
        self.high = nn.Sequential(
            SeparableConv2d(64, 128, stride=2),
            SeparableConv2d(128, 128),
            SeparableConv2d(128, 256, stride=2),
            SeparableConv2d(256, 256, dilation=2),
        )
        self.low_channels = 64
        self.out_channels = 256

    def forward(self, x):
        low = self.low(self.stem(x))
        return {"low": low, "out": self.high(low)}


def _resnet_backbone(depth=18):
    if depth == 50:
        # Dilate the last stage: nominal stride 32 becomes the required 16.
        net = resnet50(weights=None, replace_stride_with_dilation=[False, False, True])
        body = IntermediateLayerGetter(net, return_layers={"layer1": "low", "layer4": "out"})
        return body, 256, 2048
    # BasicBlock nets cannot dilate; layer3 is already at stride 16.
    net = resnet18(weights=None)
    body = IntermediateLayerGetter(net, return_layers={"layer1": "low", "layer3": "out"})
    return body, 64, 256


class Decoder(nn.Module):
    def __init__(self, low_channels, aspp_channels, num_classes):
        super().__init__()
        self.reduce = nn.Sequential(
            nn.Conv2d(low_channels, 48, 1, bias=False),
            nn.BatchNorm2d(48),
            nn.ReLU(inplace=True),
        )
        self.refine = nn.Sequential(
            nn.Conv2d(aspp_channels + 48, aspp_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(aspp_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(aspp_channels, aspp_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(aspp_channels),
            nn.ReLU(inplace=True),
        )
        self.classifier = nn.Conv2d(aspp_channels, num_classes, 1)

    def forward(self, encoded, low):
        x = F.interpolate(encoded, size=low.shape[-2:], mode="bilinear",
                          align_corners=False)
        x = torch.cat([x, self.reduce(low)], dim=1)
        return self.classifier(self.refine(x))


class SegmentationModel(nn.Module):
    def __init__(self, num_classes=5, backbone="resnet", output_stride=16,
                 aspp_channels=256, resnet_depth=18):
        super().__init__()
        if output_stride != 16:
            raise ValueError("only output stride 16 is supported")
        if backbone == "resnet":
            self.backbone, low_ch, out_ch = _resnet_backbone(resnet_depth)
        elif backbone == "xception":
            self.backbone = SeparableBackbone()
            low_ch = self.backbone.low_channels
            out_ch = self.backbone.out_channels
        else:
            raise ValueError(f"unknown backbone {backbone!r}")
        self.aspp = ASPP(out_ch, [6, 12, 18], out_channels=aspp_channels)
        self.decoder = Decoder(low_ch, aspp_channels, num_classes)

    def forward(self, x):
        features = self.backbone(x)
        encoded = self.aspp(features["out"])
        logits = self.decoder(encoded, features["low"])
        return F.interpolate(logits, size=x.shape[-2:], mode="bilinear",
                             align_corners=False)
