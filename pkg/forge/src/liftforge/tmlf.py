"""TMLF writer: serializes quantized models into the engine's wire format.

Independent of the engine's own serializer; the format contract is the
byte layout documented with the engine (little-endian, magic "TMLF",
version 1). Layer kinds: 1 Conv2D, 2 DepthwiseConv2D, 3 FullyConnected,
4 AvgPool2D, 5 Softmax, 6 Reshape; padding 0 Valid / 1 Same; activation
0 None / 1 ReLU / 2 ReLU6.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FlashBudgetExceeded, UnsupportedLayer

MAGIC = b"TMLF"
VERSION = 1
FLASH_BUDGET = 250 * 1024

KIND_CONV = 1
KIND_DEPTHWISE = 2
KIND_FC = 3
KIND_AVGPOOL = 4
KIND_SOFTMAX = 5
KIND_RESHAPE = 6

PAD_VALID = 0
PAD_SAME = 1

ACT_NONE = 0
ACT_RELU = 1
ACT_RELU6 = 2

SOFTMAX_SCALE = 1.0 / 256.0
SOFTMAX_ZP = -128

_KNOWN_KINDS = {KIND_CONV, KIND_DEPTHWISE, KIND_FC, KIND_AVGPOOL, KIND_SOFTMAX,
                KIND_RESHAPE}


@dataclass
class QLayer:
    """One quantized layer as the container stores it."""

    kind: int
    out_scale: float
    out_zp: int
    stride: tuple[int, int] = (1, 1)
    padding: int = PAD_SAME
    activation: int = ACT_NONE
    mantissa: int = 0
    shift: int = 0
    weight: np.ndarray | None = None   # int8, container layout
    w_scale: float = 1.0
    w_zp: int = 0
    bias: np.ndarray | None = None     # int32


@dataclass
class QModel:
    name: str
    input_shape: tuple[int, ...]
    in_scale: float
    in_zp: int
    layers: list[QLayer] = field(default_factory=list)


def _qparams(scale: float, zp: int) -> bytes:
    return struct.pack("<fb", np.float32(scale), zp)


def write_tmlf(model: QModel) -> bytes:
    """Serialize; raises UnsupportedLayer / FlashBudgetExceeded."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    name = model.name.encode("utf-8")
    out += struct.pack("<B", len(name)) + name
    out += struct.pack("<B", len(model.input_shape))
    out += struct.pack(f"<{len(model.input_shape)}I", *model.input_shape)
    out += _qparams(model.in_scale, model.in_zp)
    out += struct.pack("<H", len(model.layers))
    for i, layer in enumerate(model.layers):
        if layer.kind not in _KNOWN_KINDS:
            raise UnsupportedLayer(f"layer {i}: kind {layer.kind!r} has no container encoding")
        out += struct.pack("<BBBBB", layer.kind, layer.stride[0], layer.stride[1],
                           layer.padding, layer.activation)
        out += _qparams(layer.out_scale, layer.out_zp)
        out += struct.pack("<iB", layer.mantissa, layer.shift)
        if layer.weight is None:
            out += struct.pack("<B", 0) + _qparams(1.0, 0)
        else:
            w = np.ascontiguousarray(layer.weight, dtype=np.int8)
            out += struct.pack("<B", w.ndim)
            out += struct.pack(f"<{w.ndim}I", *w.shape)
            out += _qparams(layer.w_scale, layer.w_zp)
            out += w.tobytes()
        bias = layer.bias if layer.bias is not None else np.zeros(0, np.int32)
        out += struct.pack("<I", len(bias))
        out += np.ascontiguousarray(bias, dtype="<i4").tobytes()
    if len(out) > FLASH_BUDGET:
        raise FlashBudgetExceeded(f"{len(out)} bytes exceeds the {FLASH_BUDGET}-byte budget")
    return bytes(out)


def save_tmlf(model: QModel, path: str | Path) -> int:
    data = write_tmlf(model)
    Path(path).write_bytes(data)
    return len(data)
