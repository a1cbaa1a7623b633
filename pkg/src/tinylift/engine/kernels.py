"""Integer kernels for the six supported layer kinds.

All accumulation is exact 64-bit integer arithmetic over zero-point-shifted
operands; results return to int8 through a fixed-point multiplier
(round-half-away-from-zero) followed by the fused activation clamp. The
softmax path is integer end to end: a Q16 exp table per input scale plus
exact rational rounding, so repeated invocations are byte-identical.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ShapeMismatch
from .model import Activation, LayerDesc, LayerKind, Padding, QuantParams, QuantTensor

SOFTMAX_QPARAMS = QuantParams(1.0 / 256.0, -128)


def requantize(acc: int, mantissa: int, shift: int, zero_point: int) -> int:
    """int32 accumulator -> int8: rhaz(acc * mantissa * 2^-(31+shift)) + zp, clamped.

    Exact big-integer arithmetic; the vectorized twin below must match this
    bit for bit (int64 products stay below 2^62 for int32 x [2^30, 2^31)).
    """
    prod = int(acc) * int(mantissa)
    s = 31 + shift
    q = (abs(prod) + (1 << (s - 1))) >> s
    if prod < 0:
        q = -q
    return max(-128, min(127, q + zero_point))


def _requantize_array(acc: np.ndarray, mantissa: int, shift: int, zero_point: int) -> np.ndarray:
    prod = acc.astype(np.int64) * np.int64(mantissa)
    s = 31 + shift
    q = (np.abs(prod) + (np.int64(1) << np.int64(s - 1))) >> np.int64(s)
    q = np.where(prod < 0, -q, q) + zero_point
    return np.clip(q, -128, 127)


def _activation_bounds(activation: Activation, qp: QuantParams) -> tuple[int, int]:
    lo, hi = -128, 127
    if activation in (Activation.RELU, Activation.RELU6):
        lo = max(lo, qp.zero_point)
    if activation is Activation.RELU6:
        six = int(6.0 / qp.scale + 0.5) + qp.zero_point  # round half away (arg > 0)
        hi = min(hi, six)
    return lo, hi


def _finish(acc: np.ndarray, layer: LayerDesc, out_shape: tuple[int, ...]) -> QuantTensor:
    q = _requantize_array(acc, layer.mantissa, layer.shift, layer.out_qparams.zero_point)
    lo, hi = _activation_bounds(layer.activation, layer.out_qparams)
    return QuantTensor(out_shape, np.clip(q, lo, hi).astype(np.int8), layer.out_qparams)


def _pad_amounts(in_size: int, kernel: int, stride: int, padding: Padding) -> tuple[int, int, int]:
    if padding is Padding.SAME:
        out = -(-in_size // stride)
        total = max((out - 1) * stride + kernel - in_size, 0)
        return out, total // 2, total - total // 2
    out = (in_size - kernel) // stride + 1
    return out, 0, 0


def _shifted_input(x: QuantTensor) -> np.ndarray:
    return x.data.astype(np.int64) - x.qparams.zero_point


def _check_kind(layer: LayerDesc, kind: LayerKind) -> None:
    if layer.kind is not kind:
        raise ShapeMismatch(f"layer kind {layer.kind.name}, kernel expects {kind.name}")


def _conv_windows(xp: np.ndarray, dy: int, dx: int, stride: tuple[int, int],
                  out_h: int, out_w: int) -> np.ndarray:
    sh, sw = stride
    return xp[:, dy:dy + sh * (out_h - 1) + 1:sh, dx:dx + sw * (out_w - 1) + 1:sw, :]


def conv2d(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Standard convolution, weight layout (kh, kw, in_ch, out_ch)."""
    _check_kind(layer, LayerKind.CONV2D)
    w = layer.weight
    if len(x.shape) != 4 or w is None or len(w.shape) != 4 or w.shape[2] != x.shape[3]:
        raise ShapeMismatch(f"conv2d input {x.shape} vs weight {w.shape if w else None}")
    n, h, width, cin = x.shape
    kh, kw, _, cout = w.shape
    out_h, pad_t, pad_b = _pad_amounts(h, kh, layer.stride[0], layer.padding)
    out_w, pad_l, pad_r = _pad_amounts(width, kw, layer.stride[1], layer.padding)
    xp = np.pad(_shifted_input(x), ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    wi = w.data.astype(np.int64) - w.qparams.zero_point
    acc = np.zeros((n, out_h, out_w, cout), dtype=np.int64)
    for dy in range(kh):
        for dx in range(kw):
            window = _conv_windows(xp, dy, dx, layer.stride, out_h, out_w)
            acc += (window.reshape(-1, cin) @ wi[dy, dx]).reshape(n, out_h, out_w, cout)
    if layer.bias is not None:
        acc += layer.bias.astype(np.int64)
    return _finish(acc, layer, (n, out_h, out_w, cout))


def depthwise_conv2d(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Per-channel convolution (no cross-channel sum), weight (kh, kw, ch)."""
    _check_kind(layer, LayerKind.DEPTHWISE_CONV2D)
    w = layer.weight
    if len(x.shape) != 4 or w is None or len(w.shape) != 3 or w.shape[2] != x.shape[3]:
        raise ShapeMismatch(f"depthwise input {x.shape} vs weight {w.shape if w else None}")
    n, h, width, ch = x.shape
    kh, kw, _ = w.shape
    out_h, pad_t, pad_b = _pad_amounts(h, kh, layer.stride[0], layer.padding)
    out_w, pad_l, pad_r = _pad_amounts(width, kw, layer.stride[1], layer.padding)
    xp = np.pad(_shifted_input(x), ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    wi = w.data.astype(np.int64) - w.qparams.zero_point
    acc = np.zeros((n, out_h, out_w, ch), dtype=np.int64)
    for dy in range(kh):
        for dx in range(kw):
            acc += _conv_windows(xp, dy, dx, layer.stride, out_h, out_w) * wi[dy, dx]
    if layer.bias is not None:
        acc += layer.bias.astype(np.int64)
    return _finish(acc, layer, (n, out_h, out_w, ch))


def fully_connected(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Integer matvec over the flattened input, weight (in_features, out)."""
    _check_kind(layer, LayerKind.FULLY_CONNECTED)
    w = layer.weight
    n = x.shape[0]
    flat = int(np.prod(x.shape[1:]))
    if w is None or len(w.shape) != 2 or w.shape[0] != flat:
        raise ShapeMismatch(f"fully_connected input {x.shape} vs weight {w.shape if w else None}")
    xi = _shifted_input(x).reshape(n, flat)
    wi = w.data.astype(np.int64) - w.qparams.zero_point
    acc = xi @ wi
    if layer.bias is not None:
        acc = acc + layer.bias.astype(np.int64)
    return _finish(acc, layer, (n, w.shape[1]))


def avg_pool2d(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Global average over H and W, round-half-away-from-zero, qparams kept."""
    _check_kind(layer, LayerKind.AVG_POOL2D)
    if len(x.shape) != 4:
        raise ShapeMismatch(f"avg_pool2d needs 4-D input, got {x.shape}")
    n, h, w, ch = x.shape
    count = h * w
    total = x.data.astype(np.int64).sum(axis=(1, 2))
    q = (2 * np.abs(total) + count) // (2 * count)
    q = np.where(total < 0, -q, q)
    lo, hi = _activation_bounds(layer.activation, layer.out_qparams)
    out = np.clip(q, lo, hi).astype(np.int8).reshape(n, 1, 1, ch)
    return QuantTensor((n, 1, 1, ch), out, layer.out_qparams)


@lru_cache(maxsize=32)
def _exp_table_q16(scale: float) -> np.ndarray:
    """table[d] = round(exp(-d * scale) * 2^16) for d = 0..255."""
    d = np.arange(256, dtype=np.float64)
    table = np.floor(np.exp(-d * scale) * 65536.0 + 0.5).astype(np.int64)
    table.setflags(write=False)
    return table


def softmax_int8(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Fixed-point softmax over the last axis.

    Probabilities land on the (scale 1/256, zero_point -128) grid and are
    clamped to the reportable -127..+127 score range.
    """
    _check_kind(layer, LayerKind.SOFTMAX)
    table = _exp_table_q16(x.qparams.scale)
    rows = x.data.reshape(-1, x.shape[-1]).astype(np.int64)
    out = np.empty_like(rows)
    for i, row in enumerate(rows):
        d = row.max() - row                      # 0..255
        exps = table[d]
        total = int(exps.sum())
        # round-half-away of p*256 with p = e/total (all nonnegative)
        scores = (2 * 256 * exps + total) // (2 * total) - 128
        out[i] = np.clip(scores, -127, 127)
    return QuantTensor(x.shape, out.reshape(x.shape).astype(np.int8), SOFTMAX_QPARAMS)


def reshape(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    """Metadata-only flatten to (N, -1)."""
    _check_kind(layer, LayerKind.RESHAPE)
    n = x.shape[0]
    return QuantTensor((n, int(np.prod(x.shape[1:]))), x.data, x.qparams)


KERNELS = {
    LayerKind.CONV2D: conv2d,
    LayerKind.DEPTHWISE_CONV2D: depthwise_conv2d,
    LayerKind.FULLY_CONNECTED: fully_connected,
    LayerKind.AVG_POOL2D: avg_pool2d,
    LayerKind.SOFTMAX: softmax_int8,
    LayerKind.RESHAPE: reshape,
}


def run_layer(x: QuantTensor, layer: LayerDesc) -> QuantTensor:
    return KERNELS[layer.kind](x, layer)
