"""Post-training quantization and the trainer's own quantized inference.

The quantization scheme matches the engine contract: per-tensor affine
activations, symmetric int8 weights, int32 bias at in_scale*w_scale, and a
[2^30, 2^31) fixed-point multiplier with round-half-away-from-zero. The
executor here is the trainer's half of the cross-implementation check: it
shares no code with the engine, and golden fixtures record its outputs so
the engine must reproduce them within +-1 LSB (the only intentional slack
is the softmax, computed here in float64 instead of the engine's Q16
table).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tmlf import (
    ACT_NONE,
    ACT_RELU,
    ACT_RELU6,
    KIND_AVGPOOL,
    KIND_CONV,
    KIND_DEPTHWISE,
    KIND_FC,
    KIND_RESHAPE,
    KIND_SOFTMAX,
    PAD_SAME,
    QLayer,
    QModel,
    SOFTMAX_SCALE,
    SOFTMAX_ZP,
)


def f32(x: float) -> float:
    """Scales live as float32 in the container; freeze early."""
    return float(np.float32(x))


def rhaz(x: np.ndarray) -> np.ndarray:
    """Round half away from zero."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def weight_scale(w: np.ndarray) -> float:
    return f32(max(float(np.abs(w).max()), 1e-6) / 127.0)


def quantize_weights(w: np.ndarray) -> tuple[np.ndarray, float]:
    scale = weight_scale(w)
    q = np.clip(rhaz(w / scale), -127, 127).astype(np.int8)
    return q, scale


def activation_qparams(values: np.ndarray, activation: int) -> tuple[float, int]:
    """Output grid from calibration values: asymmetric for rectified layers."""
    if activation in (ACT_RELU, ACT_RELU6):
        return f32(max(float(values.max()), 1e-3) / 255.0), -128
    return f32(max(float(np.abs(values).max()), 1e-3) / 127.0), 0


def derive_multiplier(m: float) -> tuple[int, int]:
    """Real multiplier in (0, 1) -> (mantissa, right shift)."""
    if not 0.0 < m < 1.0:
        raise ValueError(f"multiplier {m} out of (0, 1)")
    shift = 0
    while m < 0.5:
        m *= 2.0
        shift += 1
    mantissa = int(round(m * (1 << 31)))
    if mantissa >= 1 << 31:
        mantissa = (1 << 31) - 1
    return mantissa, shift


def quantize_bias(b: np.ndarray, in_scale: float, w_scale: float) -> np.ndarray:
    q = np.round(np.asarray(b, np.float64) / (in_scale * w_scale))
    return np.clip(q, -(2 ** 31), 2 ** 31 - 1).astype(np.int32)


# --- float layer graph used for calibration and torch cross-checks ---

@dataclass
class FloatLayer:
    """Folded float layer in container weight layout (NHWC activations)."""

    kind: int
    weight: np.ndarray | None = None   # conv (kh,kw,cin,cout); dw (kh,kw,ch); fc (in,out)
    bias: np.ndarray | None = None
    stride: tuple[int, int] = (1, 1)
    activation: int = ACT_NONE


def _same_pads(size: int, k: int, s: int) -> tuple[int, int, int]:
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def _act(values: np.ndarray, activation: int) -> np.ndarray:
    if activation == ACT_RELU:
        return np.maximum(values, 0.0)
    if activation == ACT_RELU6:
        return np.clip(values, 0.0, 6.0)
    return values


def _conv_float(x: np.ndarray, layer: FloatLayer, depthwise: bool) -> np.ndarray:
    w = layer.weight
    kh, kw = w.shape[0], w.shape[1]
    n, h, wd, cin = x.shape
    sh, sw = layer.stride
    oh, pt, pb = _same_pads(h, kh, sh)
    ow, pl, pr = _same_pads(wd, kw, sw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cout = cin if depthwise else w.shape[3]
    acc = np.zeros((n, oh, ow, cout))
    for dy in range(kh):
        for dx in range(kw):
            win = xp[:, dy:dy + sh * (oh - 1) + 1:sh, dx:dx + sw * (ow - 1) + 1:sw, :]
            if depthwise:
                acc += win * w[dy, dx]
            else:
                acc += (win.reshape(-1, cin) @ w[dy, dx]).reshape(n, oh, ow, cout)
    if layer.bias is not None:
        acc += layer.bias
    return _act(acc, layer.activation)


def run_float(layers: list[FloatLayer], x: np.ndarray,
              keep_intermediates: bool = False):
    """Float forward pass in NHWC; optionally returns every layer output."""
    outs = []
    for layer in layers:
        if layer.kind == KIND_CONV:
            x = _conv_float(x, layer, depthwise=False)
        elif layer.kind == KIND_DEPTHWISE:
            x = _conv_float(x, layer, depthwise=True)
        elif layer.kind == KIND_FC:
            x = x.reshape(x.shape[0], -1) @ layer.weight
            if layer.bias is not None:
                x = x + layer.bias
            x = _act(x, layer.activation)
        elif layer.kind == KIND_AVGPOOL:
            x = x.mean(axis=(1, 2), keepdims=True)
        elif layer.kind == KIND_SOFTMAX:
            e = np.exp(x - x.max(axis=-1, keepdims=True))
            x = e / e.sum(axis=-1, keepdims=True)
        elif layer.kind == KIND_RESHAPE:
            x = x.reshape(x.shape[0], -1)
        outs.append(x)
    return (x, outs) if keep_intermediates else x


def quantize_model(name: str, layers: list[FloatLayer], input_shape,
                   in_scale: float, in_zp: int, calibration: np.ndarray) -> QModel:
    """Calibrate per-layer output grids and emit the quantized model."""
    model = QModel(name=name, input_shape=tuple(input_shape),
                   in_scale=f32(in_scale), in_zp=in_zp)
    scale = model.in_scale
    zp = in_zp
    x = calibration
    for layer in layers:
        if layer.kind in (KIND_CONV, KIND_DEPTHWISE, KIND_FC):
            wq, w_scale = quantize_weights(layer.weight)
            bias = quantize_bias(layer.bias if layer.bias is not None
                                 else np.zeros(wq.shape[-1]), scale, w_scale)
            folded = FloatLayer(layer.kind, (wq.astype(np.float64)) * w_scale,
                                bias.astype(np.float64) * (scale * w_scale),
                                layer.stride, layer.activation)
            x = run_float([folded], x)
            out_scale, out_zp = activation_qparams(x, layer.activation)
            m = scale * w_scale / out_scale
            while m >= 0.9999:
                out_scale = f32(out_scale * 2.0)
                m = scale * w_scale / out_scale
            mantissa, shift = derive_multiplier(m)
            model.layers.append(QLayer(kind=layer.kind, out_scale=out_scale,
                                       out_zp=out_zp, stride=layer.stride,
                                       padding=PAD_SAME, activation=layer.activation,
                                       mantissa=mantissa, shift=shift, weight=wq,
                                       w_scale=w_scale, w_zp=0, bias=bias))
            scale, zp = out_scale, out_zp
        elif layer.kind == KIND_AVGPOOL:
            x = run_float([layer], x)
            model.layers.append(QLayer(kind=KIND_AVGPOOL, out_scale=scale, out_zp=zp))
        elif layer.kind == KIND_RESHAPE:
            x = run_float([layer], x)
            model.layers.append(QLayer(kind=KIND_RESHAPE, out_scale=scale, out_zp=zp))
        elif layer.kind == KIND_SOFTMAX:
            x = run_float([layer], x)
            model.layers.append(QLayer(kind=KIND_SOFTMAX, out_scale=SOFTMAX_SCALE,
                                       out_zp=SOFTMAX_ZP))
            scale, zp = SOFTMAX_SCALE, SOFTMAX_ZP
        else:
            raise ValueError(f"cannot quantize kind {layer.kind}")
    return model


# --- quantized executor (the trainer's half of the golden cross-check) ---

def _requant(acc: np.ndarray, mantissa: int, shift: int, zp: int) -> np.ndarray:
    prod = acc.astype(np.int64) * np.int64(mantissa)
    s = 31 + shift
    q = (np.abs(prod) + (np.int64(1) << np.int64(s - 1))) >> np.int64(s)
    return np.clip(np.where(prod < 0, -q, q) + zp, -128, 127)


def _act_bounds(activation: int, scale: float, zp: int) -> tuple[int, int]:
    lo, hi = -128, 127
    if activation in (ACT_RELU, ACT_RELU6):
        lo = max(lo, zp)
    if activation == ACT_RELU6:
        hi = min(hi, int(6.0 / scale + 0.5) + zp)
    return lo, hi


def quantize_input(model: QModel, real: np.ndarray) -> np.ndarray:
    q = rhaz(np.asarray(real, np.float64) / model.in_scale) + model.in_zp
    return np.clip(q, -128, 127).astype(np.int8)


def run_quantized(model: QModel, x_q: np.ndarray) -> np.ndarray:
    """int8 in, int8 scores out; integer arithmetic except the softmax."""
    x = np.asarray(x_q, np.int8)
    scale, zp = model.in_scale, model.in_zp
    for layer in model.layers:
        if layer.kind in (KIND_CONV, KIND_DEPTHWISE):
            xi = x.astype(np.int64) - zp
            w = layer.weight.astype(np.int64) - layer.w_zp
            kh, kw = w.shape[0], w.shape[1]
            n, h, wd, cin = x.shape
            sh, sw = layer.stride
            oh, pt, pb = _same_pads(h, kh, sh)
            ow, pl, pr = _same_pads(wd, kw, sw)
            xp = np.pad(xi, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
            cout = cin if layer.kind == KIND_DEPTHWISE else w.shape[3]
            acc = np.zeros((n, oh, ow, cout), np.int64)
            for dy in range(kh):
                for dx in range(kw):
                    win = xp[:, dy:dy + sh * (oh - 1) + 1:sh,
                             dx:dx + sw * (ow - 1) + 1:sw, :]
                    if layer.kind == KIND_DEPTHWISE:
                        acc += win * w[dy, dx]
                    else:
                        acc += (win.reshape(-1, cin) @ w[dy, dx]).reshape(n, oh, ow, cout)
            acc += layer.bias.astype(np.int64)
            q = _requant(acc, layer.mantissa, layer.shift, layer.out_zp)
            lo, hi = _act_bounds(layer.activation, layer.out_scale, layer.out_zp)
            x = np.clip(q, lo, hi).astype(np.int8)
        elif layer.kind == KIND_FC:
            xi = x.reshape(x.shape[0], -1).astype(np.int64) - zp
            w = layer.weight.astype(np.int64) - layer.w_zp
            acc = xi @ w + layer.bias.astype(np.int64)
            q = _requant(acc, layer.mantissa, layer.shift, layer.out_zp)
            lo, hi = _act_bounds(layer.activation, layer.out_scale, layer.out_zp)
            x = np.clip(q, lo, hi).astype(np.int8)
        elif layer.kind == KIND_AVGPOOL:
            total = x.astype(np.int64).sum(axis=(1, 2), keepdims=True)
            count = x.shape[1] * x.shape[2]
            q = (2 * np.abs(total) + count) // (2 * count)
            x = np.where(total < 0, -q, q).astype(np.int8)
        elif layer.kind == KIND_RESHAPE:
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == KIND_SOFTMAX:
            logits = (x.astype(np.float64) - zp) * scale
            e = np.exp(logits - logits.max(axis=-1, keepdims=True))
            p = e / e.sum(axis=-1, keepdims=True)
            x = np.clip(rhaz(p * 256.0) - 128, -127, 127).astype(np.int8)
        scale, zp = layer.out_scale, layer.out_zp
    return x
