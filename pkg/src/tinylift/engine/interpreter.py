"""Graph execution: the int8 production path and the float64 oracle."""

from __future__ import annotations

import time

import numpy as np

from ..errors import ShapeMismatch
from .arena import Arena
from .kernels import run_layer
from .model import Activation, LayerKind, ModelGraph, QuantTensor


def _check_input(graph: ModelGraph, x: QuantTensor) -> None:
    if x.shape != graph.input_shape:
        raise ShapeMismatch(f"input shape {x.shape} != model input {graph.input_shape}")
    if x.qparams != graph.input_qparams:
        raise ShapeMismatch(f"input qparams {x.qparams} != model input {graph.input_qparams}")


def execute_planned(graph: ModelGraph, arena: Arena, x: QuantTensor) -> QuantTensor:
    """Run the layer chain with activations at their planned arena offsets.

    The caller must already hold the arena (``invoke`` below, or an event
    loop that models inference latency around begin/end_inference). Running
    inside the real buffer means a bad plan corrupts outputs instead of
    hiding: aliased live tensors fail the oracle tests.
    """
    _check_input(graph, x)
    plan, buffer = arena.plan, arena.buffer

    def view(idx: int) -> np.ndarray:
        off, size = plan.offsets[idx], plan.sizes[idx]
        return buffer[off:off + size].reshape(graph.tensor_shapes[idx])

    view(0)[...] = x.data
    current = QuantTensor(graph.tensor_shapes[0], view(0), graph.tensor_qparams[0])
    for i, layer in enumerate(graph.layers):
        result = run_layer(current, layer)
        out = view(i + 1)
        out[...] = result.data
        current = QuantTensor(result.shape, out, result.qparams)
    return QuantTensor(current.shape, current.data.copy(), current.qparams)


def invoke(graph: ModelGraph, arena: Arena, x: QuantTensor) -> QuantTensor:
    """Synchronous inference: holds the arena for the duration of the call."""
    with arena.inference(graph):
        started = time.perf_counter()
        result = execute_planned(graph, arena, x)
        arena.last_invoke_wall_ms = (time.perf_counter() - started) * 1000.0
        return result


def invoke_standalone(graph: ModelGraph, x: QuantTensor) -> QuantTensor:
    """Same layer math without an arena (CLI one-shots, fixture tooling)."""
    _check_input(graph, x)
    current = x
    for layer in graph.layers:
        current = run_layer(current, layer)
    return current


def _float_activation(act: Activation, x: np.ndarray) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(x, 0.0)
    if act is Activation.RELU6:
        return np.clip(x, 0.0, 6.0)
    return x


def reference_invoke_float(graph: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Float64 oracle: the same graph on dequantized weights, real-valued I/O.

    Input is in real units (dequantized); output of the softmax head sums
    to 1 within 1e-12. Never a production path.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != graph.input_shape:
        raise ShapeMismatch(f"input shape {x.shape} != model input {graph.input_shape}")
    in_scale = graph.input_qparams.scale
    for layer in graph.layers:
        if layer.kind is LayerKind.CONV2D:
            x = _float_conv(x, layer, in_scale, depthwise=False)
        elif layer.kind is LayerKind.DEPTHWISE_CONV2D:
            x = _float_conv(x, layer, in_scale, depthwise=True)
        elif layer.kind is LayerKind.FULLY_CONNECTED:
            w = layer.weight.dequantize()
            acc = x.reshape(x.shape[0], -1) @ w
            acc = acc + _float_bias(layer, in_scale)
            x = _float_activation(layer.activation, acc)
        elif layer.kind is LayerKind.AVG_POOL2D:
            x = x.mean(axis=(1, 2), keepdims=True)
        elif layer.kind is LayerKind.SOFTMAX:
            shifted = x - x.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            x = e / e.sum(axis=-1, keepdims=True)
        elif layer.kind is LayerKind.RESHAPE:
            x = x.reshape(x.shape[0], -1)
        in_scale = layer.out_qparams.scale
    return x


def _float_bias(layer, in_scale: float) -> np.ndarray | float:
    if layer.bias is None:
        return 0.0
    return layer.bias.astype(np.float64) * (in_scale * layer.weight.qparams.scale)


def _float_conv(x: np.ndarray, layer, in_scale: float, depthwise: bool) -> np.ndarray:
    from .kernels import _pad_amounts  # same padding arithmetic as the int path

    w = layer.weight.dequantize()
    kh, kw = w.shape[0], w.shape[1]
    n, h, width, cin = x.shape
    out_h, pad_t, pad_b = _pad_amounts(h, kh, layer.stride[0], layer.padding)
    out_w, pad_l, pad_r = _pad_amounts(width, kw, layer.stride[1], layer.padding)
    xp = np.pad(x, ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    sh, sw = layer.stride
    cout = cin if depthwise else w.shape[3]
    acc = np.zeros((n, out_h, out_w, cout), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            window = xp[:, dy:dy + sh * (out_h - 1) + 1:sh, dx:dx + sw * (out_w - 1) + 1:sw, :]
            if depthwise:
                acc += window * w[dy, dx]
            else:
                acc += (window.reshape(-1, cin) @ w[dy, dx]).reshape(n, out_h, out_w, cout)
    acc += _float_bias(layer, in_scale)
    return _float_activation(layer.activation, acc)
