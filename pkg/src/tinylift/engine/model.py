"""Quantized model graph: types, validation, and the TMLF container format.

TMLF is a little-endian stream:

    magic   "TMLF"
    u16     version (1)
    u8      name length, then name bytes (utf-8)
    u8      input rank, u32 x rank input dims
    f32     input scale, i8 input zero_point
    u16     layer count
    per layer:
        u8   kind        1=Conv2D 2=DepthwiseConv2D 3=FullyConnected
                         4=AvgPool2D 5=Softmax 6=Reshape
        u8   stride_h, u8 stride_w
        u8   padding     0=Valid 1=Same
        u8   activation  0=None 1=ReLU 2=ReLU6
        f32  output scale, i8 output zero_point
        i32  requant mantissa, u8 requant shift (mantissa 0 = no multiplier)
        u8   weight rank, u32 x rank dims, f32 scale, i8 zero_point, i8 x n data
        u32  bias count, i32 x count values

Bytes after the last layer are ignored (streams may be padded), but the
total stream length still counts against the flash budget. Weight layouts:
Conv2D (kh, kw, in_ch, out_ch); DepthwiseConv2D (kh, kw, ch);
FullyConnected (in_features, out_features). Bias values are int32 at scale
input_scale * weight_scale. AvgPool2D is a global average over H and W;
Reshape flattens to (N, -1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from ..errors import (
    BadMagic,
    FlashBudgetExceeded,
    InvalidLayer,
    ShapeMismatch,
    TruncatedStream,
    UnsupportedVersion,
)

MAGIC = b"TMLF"
VERSION = 1
FLASH_BUDGET_BYTES = 250 * 1024      # 256,000
ARENA_CAPACITY_BYTES = 256 * 1024    # 262,144

SOFTMAX_SCALE = 1.0 / 256.0
SOFTMAX_ZERO_POINT = -128


class LayerKind(IntEnum):
    CONV2D = 1
    DEPTHWISE_CONV2D = 2
    FULLY_CONNECTED = 3
    AVG_POOL2D = 4
    SOFTMAX = 5
    RESHAPE = 6


class Padding(IntEnum):
    VALID = 0
    SAME = 1


class Activation(IntEnum):
    NONE = 0
    RELU = 1
    RELU6 = 2


# kinds that carry weights and a requant multiplier
WEIGHTED_KINDS = frozenset({LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D, LayerKind.FULLY_CONNECTED})


@dataclass(frozen=True)
class QuantParams:
    """Per-tensor affine quantization: real = (q - zero_point) * scale."""

    scale: float
    zero_point: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not -128 <= self.zero_point <= 127:
            raise ValueError(f"zero_point must fit int8, got {self.zero_point}")


@dataclass(frozen=True)
class QuantTensor:
    """Shaped int8 buffer with quantization parameters (NHWC order)."""

    shape: tuple[int, ...]
    data: np.ndarray
    qparams: QuantParams

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.int8)
        if data.size != int(np.prod(self.shape)):
            raise ShapeMismatch(f"data size {data.size} != prod{self.shape}")
        object.__setattr__(self, "data", data.reshape(self.shape))
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))

    def dequantize(self) -> np.ndarray:
        return (self.data.astype(np.float64) - self.qparams.zero_point) * self.qparams.scale


@dataclass
class LayerDesc:
    """One executable layer of a model graph."""

    kind: LayerKind
    stride: tuple[int, int] = (1, 1)
    padding: Padding = Padding.VALID
    activation: Activation = Activation.NONE
    out_qparams: QuantParams = field(default_factory=lambda: QuantParams(1.0, 0))
    mantissa: int = 0        # fixed-point requant multiplier, [2^30, 2^31) when used
    shift: int = 0           # right shift, >= 0
    weight: QuantTensor | None = None
    bias: np.ndarray | None = None  # int32, scale = in_scale * w_scale

    def __post_init__(self):
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.int32)


@dataclass
class ModelGraph:
    """Parsed, validated, topologically ordered model. Immutable after load."""

    name: str
    input_shape: tuple[int, ...]
    input_qparams: QuantParams
    layers: list[LayerDesc]
    flash_size: int = 0
    # filled by validate(): per-tensor shapes/qparams, index i = input of layer i
    tensor_shapes: list[tuple[int, ...]] = field(default_factory=list)
    tensor_qparams: list[QuantParams] = field(default_factory=list)

    def validate(self) -> "ModelGraph":
        if self.flash_size > FLASH_BUDGET_BYTES:
            raise FlashBudgetExceeded(
                f"{self.flash_size} bytes exceeds flash budget {FLASH_BUDGET_BYTES}")
        self.tensor_shapes, self.tensor_qparams = infer_shapes(
            self.input_shape, self.input_qparams, self.layers)
        if not self.layers or self.layers[-1].kind is not LayerKind.SOFTMAX:
            raise InvalidLayer("output layer must be Softmax")
        return self

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.tensor_shapes[-1]

    @property
    def output_qparams(self) -> QuantParams:
        return self.tensor_qparams[-1]


def _same_axis(in_size: int, kernel: int, stride: int) -> int:
    return -(-in_size // stride)


def _valid_axis(in_size: int, kernel: int, stride: int) -> int:
    if in_size < kernel:
        raise InvalidLayer(f"kernel {kernel} larger than input {in_size} with Valid padding")
    return (in_size - kernel) // stride + 1


def _conv_spatial(shape, kernel_hw, stride, padding):
    n, h, w, _ = shape
    axis = _same_axis if padding is Padding.SAME else _valid_axis
    return n, axis(h, kernel_hw[0], stride[0]), axis(w, kernel_hw[1], stride[1])


def infer_shapes(input_shape, input_qparams, layers) -> tuple[list, list]:
    """Walk the layer chain, producing per-tensor shapes and qparams.

    Raises InvalidLayer on any structural inconsistency (fail closed).
    """
    shapes: list[tuple[int, ...]] = [tuple(int(d) for d in input_shape)]
    qparams: list[QuantParams] = [input_qparams]
    for i, layer in enumerate(layers):
        shape = shapes[-1]
        prev_qp = qparams[-1]
        try:
            out_shape = _infer_one(shape, prev_qp, layer)
        except InvalidLayer as exc:
            raise InvalidLayer(f"layer {i} ({layer.kind.name}): {exc}") from None
        shapes.append(out_shape)
        qparams.append(layer.out_qparams)
    return shapes, qparams


def _infer_one(shape, prev_qp: QuantParams, layer: LayerDesc) -> tuple[int, ...]:
    kind = layer.kind
    if kind in WEIGHTED_KINDS:
        if layer.weight is None:
            raise InvalidLayer("missing weight tensor")
        if not (2 ** 30 <= layer.mantissa < 2 ** 31):
            raise InvalidLayer(f"requant mantissa {layer.mantissa} outside [2^30, 2^31)")
        if layer.shift < 0:
            raise InvalidLayer("requant shift must be >= 0")
        if layer.stride[0] < 1 or layer.stride[1] < 1:
            raise InvalidLayer(f"stride must be >= 1, got {layer.stride}")

    if kind is LayerKind.CONV2D:
        if len(shape) != 4 or len(layer.weight.shape) != 4:
            raise InvalidLayer(f"Conv2D needs 4-D input/weight, got {shape}/{layer.weight.shape}")
        kh, kw, cin, cout = layer.weight.shape
        if cin != shape[3]:
            raise InvalidLayer(f"weight in_ch {cin} != input channels {shape[3]}")
        _check_bias(layer, cout)
        n, oh, ow = _conv_spatial(shape, (kh, kw), layer.stride, layer.padding)
        return (n, oh, ow, cout)

    if kind is LayerKind.DEPTHWISE_CONV2D:
        if len(shape) != 4 or len(layer.weight.shape) != 3:
            raise InvalidLayer(f"Depthwise needs 4-D input, 3-D weight, got {shape}/{layer.weight.shape}")
        kh, kw, ch = layer.weight.shape
        if ch != shape[3]:
            raise InvalidLayer(f"weight channels {ch} != input channels {shape[3]}")
        _check_bias(layer, ch)
        n, oh, ow = _conv_spatial(shape, (kh, kw), layer.stride, layer.padding)
        return (n, oh, ow, ch)

    if kind is LayerKind.FULLY_CONNECTED:
        if len(layer.weight.shape) != 2:
            raise InvalidLayer(f"FullyConnected weight must be 2-D, got {layer.weight.shape}")
        in_features, out_features = layer.weight.shape
        flat = int(np.prod(shape[1:]))
        if flat != in_features:
            raise InvalidLayer(f"flattened input {flat} != weight rows {in_features}")
        _check_bias(layer, out_features)
        return (shape[0], out_features)

    if kind is LayerKind.AVG_POOL2D:
        if len(shape) != 4:
            raise InvalidLayer(f"AvgPool2D needs 4-D input, got {shape}")
        _check_qparams_preserved(prev_qp, layer)
        return (shape[0], 1, 1, shape[3])

    if kind is LayerKind.SOFTMAX:
        if shape[-1] < 2:
            raise InvalidLayer("Softmax needs at least 2 classes")
        qp = layer.out_qparams
        if qp.scale != SOFTMAX_SCALE or qp.zero_point != SOFTMAX_ZERO_POINT:
            raise InvalidLayer(
                f"Softmax output must be scale 1/256, zero_point -128, got {qp}")
        return shape

    if kind is LayerKind.RESHAPE:
        _check_qparams_preserved(prev_qp, layer)
        return (shape[0], int(np.prod(shape[1:])))

    raise InvalidLayer(f"unknown kind {kind}")


def _check_bias(layer: LayerDesc, out_channels: int) -> None:
    if layer.bias is not None and layer.bias.size not in (0, out_channels):
        raise InvalidLayer(f"bias length {layer.bias.size} != output channels {out_channels}")


def _check_qparams_preserved(prev_qp: QuantParams, layer: LayerDesc) -> None:
    if layer.out_qparams != prev_qp:
        raise InvalidLayer(
            f"{layer.kind.name} must preserve qparams: {prev_qp} -> {layer.out_qparams}")


# --- binary container ---

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStream(f"needed {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def _read_qparams(r: _Reader) -> QuantParams:
    scale, zp = r.unpack("fb")
    if not scale > 0:
        raise InvalidLayer(f"nonpositive scale {scale}")
    return QuantParams(float(scale), int(zp))


def _read_weight(r: _Reader) -> QuantTensor | None:
    (rank,) = r.unpack("B")
    dims = tuple(int(d) for d in r.unpack(f"{rank}I")) if rank else ()
    qp = _read_qparams(r)
    count = int(np.prod(dims)) if dims else 0
    data = np.frombuffer(r.take(count), dtype=np.int8)
    if rank == 0:
        return None
    if count == 0:
        raise InvalidLayer("weight tensor with a zero dimension")
    return QuantTensor(dims, data.copy(), qp)


def parse_model(data: bytes) -> ModelGraph:
    """Parse and validate a TMLF stream; fails closed on any malformed field."""
    if len(data) > FLASH_BUDGET_BYTES:
        raise FlashBudgetExceeded(
            f"stream is {len(data)} bytes, flash budget is {FLASH_BUDGET_BYTES}")
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagic("missing TMLF magic")
    (version,) = r.unpack("H")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}, engine supports {VERSION}")
    (name_len,) = r.unpack("B")
    name = r.take(name_len).decode("utf-8", errors="replace")
    (rank,) = r.unpack("B")
    if rank == 0:
        raise InvalidLayer("input rank must be >= 1")
    input_shape = tuple(int(d) for d in r.unpack(f"{rank}I"))
    if any(d < 1 for d in input_shape):
        raise InvalidLayer(f"nonpositive input dim in {input_shape}")
    input_qp = _read_qparams(r)
    (layer_count,) = r.unpack("H")
    layers = []
    for _ in range(layer_count):
        kind_v, sh, sw, pad_v, act_v = r.unpack("BBBBB")
        try:
            kind = LayerKind(kind_v)
            padding = Padding(pad_v)
            activation = Activation(act_v)
        except ValueError as exc:
            raise InvalidLayer(str(exc)) from None
        out_qp = _read_qparams(r)
        mantissa, shift = r.unpack("iB")
        weight = _read_weight(r)
        (bias_count,) = r.unpack("I")
        bias = np.frombuffer(r.take(4 * bias_count), dtype="<i4").astype(np.int32) \
            if bias_count else None
        layers.append(LayerDesc(kind=kind, stride=(sh, sw), padding=padding,
                                activation=activation, out_qparams=out_qp,
                                mantissa=int(mantissa), shift=int(shift),
                                weight=weight, bias=bias))
    graph = ModelGraph(name=name, input_shape=input_shape, input_qparams=input_qp,
                       layers=layers, flash_size=len(data))
    return graph.validate()


def _pack_qparams(qp: QuantParams) -> bytes:
    return struct.pack("<fb", np.float32(qp.scale), qp.zero_point)


def serialize_model(graph: ModelGraph) -> bytes:
    """Encode a graph as a TMLF stream (inverse of parse_model)."""
    name = graph.name.encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    out += struct.pack("<B", len(name)) + name
    out += struct.pack("<B", len(graph.input_shape))
    out += struct.pack(f"<{len(graph.input_shape)}I", *graph.input_shape)
    out += _pack_qparams(graph.input_qparams)
    out += struct.pack("<H", len(graph.layers))
    for layer in graph.layers:
        out += struct.pack("<BBBBB", layer.kind, layer.stride[0], layer.stride[1],
                           layer.padding, layer.activation)
        out += _pack_qparams(layer.out_qparams)
        out += struct.pack("<iB", layer.mantissa, layer.shift)
        if layer.weight is None:
            out += struct.pack("<B", 0) + _pack_qparams(QuantParams(1.0, 0))
        else:
            w = layer.weight
            out += struct.pack("<B", len(w.shape))
            out += struct.pack(f"<{len(w.shape)}I", *w.shape)
            out += _pack_qparams(w.qparams)
            out += w.data.tobytes()
        bias = layer.bias if layer.bias is not None else np.zeros(0, dtype=np.int32)
        out += struct.pack("<I", bias.size)
        out += bias.astype("<i4").tobytes()
    return bytes(out)


def load_model(path: str | Path) -> ModelGraph:
    return parse_model(Path(path).read_bytes())


def save_model(graph: ModelGraph, path: str | Path) -> int:
    data = serialize_model(graph)
    Path(path).write_bytes(data)
    return len(data)
