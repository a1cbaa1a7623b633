"""Torch definitions of the two deployed architectures plus extraction.

Both nets use TF-style "same" padding (asymmetric, extra on bottom/right)
so their arithmetic matches the deployed engine layer for layer. Extraction
folds batch norms into the preceding convolutions and rewrites weights into
container layout (NHWC activations): conv (kh, kw, in, out), depthwise
(kh, kw, ch), fully connected (in, out) with rows permuted from torch's
channel-major flatten to the engine's row-major NHWC flatten.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .quant import FloatLayer
from .tmlf import ACT_NONE, ACT_RELU6, KIND_AVGPOOL, KIND_CONV, KIND_DEPTHWISE, \
    KIND_FC, KIND_SOFTMAX

KWS_INPUT_HW = (49, 43)
PERSON_INPUT_HW = (96, 96)

# (out_channels, stride) per depthwise-separable block at depth multiplier 0.25
MOBILENET_BLOCKS_025 = [
    (16, 1), (32, 2), (32, 1), (64, 2), (64, 1), (128, 2),
    (128, 1), (128, 1), (128, 1), (128, 1), (128, 1), (256, 2), (256, 1),
]


def tf_same_pad(x: torch.Tensor, kh: int, kw: int, sh: int, sw: int) -> torch.Tensor:
    h, w = x.shape[2], x.shape[3]
    ph = max((-(-h // sh) - 1) * sh + kh - h, 0)
    pw = max((-(-w // sw) - 1) * sw + kw - w, 0)
    return F.pad(x, (pw // 2, pw - pw // 2, ph // 2, ph - ph // 2))


class TinyConvNet(nn.Module):
    """Depthwise 10x8 s2 + pointwise->8 + FC->6 over 49x43 features."""

    def __init__(self):
        super().__init__()
        self.dw = nn.Conv2d(1, 1, (10, 8), stride=2)
        self.pw = nn.Conv2d(1, 8, 1)
        oh, ow = -(-KWS_INPUT_HW[0] // 2), -(-KWS_INPUT_HW[1] // 2)
        self.fc = nn.Linear(oh * ow * 8, 6)
        self._pooled_hw = (oh, ow)

    def forward(self, x):  # (N, 1, 49, 43)
        x = F.relu6(self.dw(tf_same_pad(x, 10, 8, 2, 2)))
        x = F.relu6(self.pw(x))
        return self.fc(x.flatten(1))


class MobileNet025(nn.Module):
    """MobileNetV1 at depth multiplier 0.25, grayscale 96x96, 2 classes."""

    def __init__(self):
        super().__init__()
        self.stem = nn.Conv2d(1, 8, 3, stride=2, bias=False)
        self.stem_bn = nn.BatchNorm2d(8)
        self.dw = nn.ModuleList()
        self.dw_bn = nn.ModuleList()
        self.pw = nn.ModuleList()
        self.pw_bn = nn.ModuleList()
        self.strides = []
        cin = 8
        for cout, stride in MOBILENET_BLOCKS_025:
            self.dw.append(nn.Conv2d(cin, cin, 3, stride=stride, groups=cin, bias=False))
            self.dw_bn.append(nn.BatchNorm2d(cin))
            self.pw.append(nn.Conv2d(cin, cout, 1, bias=False))
            self.pw_bn.append(nn.BatchNorm2d(cout))
            self.strides.append(stride)
            cin = cout
        self.fc = nn.Linear(cin, 2)

    def forward(self, x):  # (N, 1, 96, 96)
        x = F.relu6(self.stem_bn(self.stem(tf_same_pad(x, 3, 3, 2, 2))))
        for dw, dw_bn, pw, pw_bn, stride in zip(self.dw, self.dw_bn, self.pw,
                                                self.pw_bn, self.strides):
            x = F.relu6(dw_bn(dw(tf_same_pad(x, 3, 3, stride, stride))))
            x = F.relu6(pw_bn(pw(x)))
        x = x.mean(dim=(2, 3))
        return self.fc(x)


def _fold_bn(conv: nn.Conv2d, bn: nn.BatchNorm2d) -> tuple[np.ndarray, np.ndarray]:
    w = conv.weight.detach().numpy().astype(np.float64)
    gamma = bn.weight.detach().numpy().astype(np.float64)
    beta = bn.bias.detach().numpy().astype(np.float64)
    mu = bn.running_mean.numpy().astype(np.float64)
    var = bn.running_var.numpy().astype(np.float64)
    s = gamma / np.sqrt(var + bn.eps)
    folded_w = w * s[:, None, None, None]
    bias = conv.bias.detach().numpy().astype(np.float64) if conv.bias is not None \
        else np.zeros(w.shape[0])
    folded_b = beta + (bias - mu) * s
    return folded_w, folded_b


def _conv_to_layout(w: np.ndarray) -> np.ndarray:
    return np.transpose(w, (2, 3, 1, 0))  # (out,in,kh,kw) -> (kh,kw,in,out)


def _dw_to_layout(w: np.ndarray) -> np.ndarray:
    return np.transpose(w, (2, 3, 0, 1))[..., 0]  # (ch,1,kh,kw) -> (kh,kw,ch)


def _fc_to_layout(w: np.ndarray, feature_hw: tuple[int, int] | None,
                  channels: int) -> np.ndarray:
    """(out, in) torch Linear -> (in, out) with NHWC row order."""
    wt = w.T  # (in, out), rows in torch flatten order (c, h, w)
    if feature_hw is None:
        return wt
    h, wd = feature_hw
    nhwc_rows = np.empty(h * wd * channels, dtype=np.int64)
    for y in range(h):
        for x in range(wd):
            for c in range(channels):
                nhwc_rows[y * wd * channels + x * channels + c] = c * h * wd + y * wd + x
    return wt[nhwc_rows]


def extract_tiny_conv(model: TinyConvNet) -> list[FloatLayer]:
    model.eval()
    dw_w = model.dw.weight.detach().numpy().astype(np.float64)
    pw_w = model.pw.weight.detach().numpy().astype(np.float64)
    fc_w = model.fc.weight.detach().numpy().astype(np.float64)
    return [
        FloatLayer(KIND_DEPTHWISE, _dw_to_layout(dw_w),
                   model.dw.bias.detach().numpy().astype(np.float64),
                   stride=(2, 2), activation=ACT_RELU6),
        FloatLayer(KIND_CONV, _conv_to_layout(pw_w),
                   model.pw.bias.detach().numpy().astype(np.float64),
                   activation=ACT_RELU6),
        FloatLayer(KIND_FC, _fc_to_layout(fc_w, model._pooled_hw, 8),
                   model.fc.bias.detach().numpy().astype(np.float64),
                   activation=ACT_NONE),
        FloatLayer(KIND_SOFTMAX),
    ]


def extract_mobilenet(model: MobileNet025) -> list[FloatLayer]:
    model.eval()
    layers = []
    w, b = _fold_bn(model.stem, model.stem_bn)
    layers.append(FloatLayer(KIND_CONV, _conv_to_layout(w), b, stride=(2, 2),
                             activation=ACT_RELU6))
    for dw, dw_bn, pw, pw_bn, stride in zip(model.dw, model.dw_bn, model.pw,
                                            model.pw_bn, model.strides):
        w, b = _fold_bn(dw, dw_bn)
        layers.append(FloatLayer(KIND_DEPTHWISE, _dw_to_layout(w), b,
                                 stride=(stride, stride), activation=ACT_RELU6))
        w, b = _fold_bn(pw, pw_bn)
        layers.append(FloatLayer(KIND_CONV, _conv_to_layout(w), b, activation=ACT_RELU6))
    layers.append(FloatLayer(KIND_AVGPOOL))
    layers.append(FloatLayer(KIND_FC,
                             model.fc.weight.detach().numpy().astype(np.float64).T,
                             model.fc.bias.detach().numpy().astype(np.float64),
                             activation=ACT_NONE))
    layers.append(FloatLayer(KIND_SOFTMAX))
    return layers
