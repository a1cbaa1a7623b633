"""Canonical model builders.

Two families live here:

  - reference configurations (``person_detection_reference``,
    ``keyword_spotting_reference``): the repo's canonical MobileNetV1
    depth-0.25 person detector and the depthwise-separable keyword model,
    randomly initialized but fully calibrated, used for budget/shape checks.
  - stub models (``stub_person_model``, ``stub_keyword_model``): hand-built
    deterministic graphs with engineered weights, so scenario runs never
    depend on trained weights. The person stub fires on bright frames; the
    keyword stub maps four pure tones to the four floor classes.

All builders freeze scales to float32 (the container stores f32) and emit
graphs that pass ``parse_model(serialize_model(g))`` unchanged.
"""

from __future__ import annotations

import numpy as np

from ..dsp import MEL_FMAX_HZ, MEL_FMIN_HZ, N_BANDS, N_FRAMES, _hz_to_mel, _mel_to_hz
from .interpreter import _float_conv, _float_bias, _float_activation
from .model import (
    Activation,
    LayerDesc,
    LayerKind,
    ModelGraph,
    Padding,
    QuantParams,
    QuantTensor,
    SOFTMAX_SCALE,
    SOFTMAX_ZERO_POINT,
    serialize_model,
)

SOFTMAX_QP = QuantParams(SOFTMAX_SCALE, SOFTMAX_ZERO_POINT)

# tone frequency (Hz) per keyword class used by the stub fixtures; all are
# multiples of 50 Hz so every 320-sample hop lands on a whole cycle and the
# spectrogram rows of a steady tone are bit-identical
STUB_TONES_HZ = {"one": 400.0, "two": 700.0, "three": 1000.0, "four": 1300.0}

KWS_INPUT_QPARAMS = QuantParams(float(np.float32(0.15)), 0)
IMAGE_INPUT_QPARAMS = QuantParams(float(np.float32(1.0 / 256.0)), -128)


def quantize_multiplier(m: float) -> tuple[int, int]:
    """Real multiplier in (0, 1) -> (mantissa in [2^30, 2^31), right shift)."""
    if not 0 < m < 1:
        raise ValueError(f"multiplier must be in (0, 1), got {m}")
    shift = 0
    while m < 0.5:
        m *= 2.0
        shift += 1
    mantissa = int(round(m * (1 << 31)))
    if mantissa == 1 << 31:
        mantissa = (1 << 31) - 1
    return mantissa, shift


def _f32(x: float) -> float:
    return float(np.float32(x))


def _symmetric_weight(w: np.ndarray) -> QuantTensor:
    scale = _f32(max(float(np.abs(w).max()), 1e-6) / 127.0)
    q = np.clip(np.floor(np.abs(w) / scale + 0.5) * np.sign(w), -127, 127)
    return QuantTensor(w.shape, q.astype(np.int8), QuantParams(scale, 0))


def _post_activation_qparams(y: np.ndarray, activation: Activation) -> QuantParams:
    if activation in (Activation.RELU, Activation.RELU6):
        hi = max(float(y.max()), 1e-3)
        return QuantParams(_f32(hi / 255.0), -128)
    hi = max(float(np.abs(y).max()), 1e-3)
    return QuantParams(_f32(hi / 127.0), 0)


class GraphAssembler:
    """Builds calibrated quantized graphs layer by layer.

    Keeps float64 calibration activations alongside so each layer's output
    scale reflects the values the quantized net will actually see.
    """

    def __init__(self, name: str, input_shape: tuple[int, ...],
                 input_qparams: QuantParams, calibration: np.ndarray):
        self.name = name
        self.input_shape = tuple(input_shape)
        self.input_qparams = input_qparams
        self.layers: list[LayerDesc] = []
        self.calib = np.asarray(calibration, dtype=np.float64)
        self.in_scale = input_qparams.scale

    def _push_weighted(self, kind: LayerKind, w: np.ndarray, b: np.ndarray,
                       stride, padding, activation) -> None:
        wq = _symmetric_weight(w)
        bias_scale = self.in_scale * wq.qparams.scale
        bias = np.round(b / bias_scale).astype(np.int64)
        bias = np.clip(bias, -(2 ** 31), 2 ** 31 - 1).astype(np.int32)
        layer = LayerDesc(kind=kind, stride=stride, padding=padding,
                          activation=activation, weight=wq, bias=bias)
        if kind is LayerKind.FULLY_CONNECTED:
            acc = self.calib.reshape(self.calib.shape[0], -1) @ wq.dequantize()
            acc = acc + _float_bias(layer, self.in_scale)
            y = _float_activation(activation, acc)
        else:
            y = _float_conv(self.calib, layer, self.in_scale,
                            depthwise=kind is LayerKind.DEPTHWISE_CONV2D)
        out_qp = _post_activation_qparams(y, activation)
        m = bias_scale / out_qp.scale
        while m >= 0.9999:  # keep the fixed-point multiplier representable
            out_qp = QuantParams(_f32(out_qp.scale * 2.0), out_qp.zero_point)
            m = bias_scale / out_qp.scale
        layer.out_qparams = out_qp
        layer.mantissa, layer.shift = quantize_multiplier(m)
        self.layers.append(layer)
        self.calib = y
        self.in_scale = out_qp.scale

    def conv(self, w, b, stride=(1, 1), padding=Padding.SAME,
             activation=Activation.RELU6) -> "GraphAssembler":
        self._push_weighted(LayerKind.CONV2D, w, b, stride, padding, activation)
        return self

    def depthwise(self, w, b, stride=(1, 1), padding=Padding.SAME,
                  activation=Activation.RELU6) -> "GraphAssembler":
        self._push_weighted(LayerKind.DEPTHWISE_CONV2D, w, b, stride, padding, activation)
        return self

    def fully_connected(self, w, b, activation=Activation.NONE) -> "GraphAssembler":
        self._push_weighted(LayerKind.FULLY_CONNECTED, w, b, (1, 1), Padding.VALID, activation)
        return self

    def avg_pool(self) -> "GraphAssembler":
        qp = QuantParams(self.in_scale, self.layers[-1].out_qparams.zero_point
                         if self.layers else self.input_qparams.zero_point)
        self.layers.append(LayerDesc(kind=LayerKind.AVG_POOL2D, out_qparams=qp))
        self.calib = self.calib.mean(axis=(1, 2), keepdims=True)
        return self

    def reshape(self) -> "GraphAssembler":
        qp = self.layers[-1].out_qparams if self.layers else self.input_qparams
        self.layers.append(LayerDesc(kind=LayerKind.RESHAPE, out_qparams=qp))
        self.calib = self.calib.reshape(self.calib.shape[0], -1)
        return self

    def softmax(self) -> "GraphAssembler":
        self.layers.append(LayerDesc(kind=LayerKind.SOFTMAX, out_qparams=SOFTMAX_QP))
        return self

    def build(self) -> ModelGraph:
        graph = ModelGraph(name=self.name, input_shape=self.input_shape,
                           input_qparams=self.input_qparams, layers=self.layers)
        graph.flash_size = len(serialize_model(graph))
        return graph.validate()


# (out_channels, stride) of each depthwise-separable block at depth 0.25
_MOBILENET_BLOCKS_025 = [
    (16, 1), (32, 2), (32, 1), (64, 2), (64, 1), (128, 2),
    (128, 1), (128, 1), (128, 1), (128, 1), (128, 1), (256, 2), (256, 1),
]


def person_detection_reference(seed: int = 0) -> ModelGraph:
    """MobileNetV1 depth 0.25, 96x96x1 input, 2-class softmax head."""
    rng = np.random.default_rng(seed)
    calib = rng.integers(-128, 128, size=(4, 96, 96, 1)).astype(np.float64)
    calib = (calib - IMAGE_INPUT_QPARAMS.zero_point) * IMAGE_INPUT_QPARAMS.scale
    g = GraphAssembler("person-mobilenet-0.25", (1, 96, 96, 1), IMAGE_INPUT_QPARAMS,
                       calib)

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    g.conv(he((3, 3, 1, 8), 9), rng.normal(0, 0.05, 8), stride=(2, 2))
    cin = 8
    for cout, stride in _MOBILENET_BLOCKS_025:
        g.depthwise(he((3, 3, cin), 9), rng.normal(0, 0.05, cin), stride=(stride, stride))
        g.conv(he((1, 1, cin, cout), cin), rng.normal(0, 0.05, cout))
        cin = cout
    g.avg_pool()
    g.fully_connected(he((cin, 2), cin), rng.normal(0, 0.05, 2))
    g.softmax()
    return g.build()


def keyword_spotting_reference(seed: int = 0) -> ModelGraph:
    """Depthwise-separable block (10x8 s2 + pointwise->8) + FC to 6 classes."""
    rng = np.random.default_rng(seed)
    calib = rng.uniform(-13.8155, 16.0, size=(4, N_FRAMES, N_BANDS, 1))
    g = GraphAssembler("kws-tiny-conv", (1, N_FRAMES, N_BANDS, 1), KWS_INPUT_QPARAMS,
                       calib)
    g.depthwise(rng.normal(0, 0.05, (10, 8, 1)), rng.normal(0, 0.05, 1), stride=(2, 2))
    g.conv(rng.normal(0, 0.3, (1, 1, 1, 8)), rng.normal(0, 0.05, 8))
    flat = int(np.prod(g.calib.shape[1:]))
    g.fully_connected(rng.normal(0, 0.02, (flat, 6)) / np.sqrt(flat) * 20,
                      rng.normal(0, 0.05, 6))
    g.softmax()
    return g.build()


def _finalize(name, input_shape, input_qp, layers) -> ModelGraph:
    graph = ModelGraph(name=name, input_shape=input_shape, input_qparams=input_qp,
                       layers=layers)
    graph.flash_size = len(serialize_model(graph))
    return graph.validate()


def stub_person_model() -> ModelGraph:
    """Deterministic detector stub: 'person' iff mean brightness > 128.

    One FC layer sums pixel brightness against a midpoint bias, so bright
    frames yield a saturated person score and dark frames the opposite.
    """
    n_px = 96 * 96
    w = np.zeros((n_px, 2), dtype=np.int8)
    w[:, 0] = -1   # no_person
    w[:, 1] = +1   # person
    w_qp = QuantParams(_f32(1.0 / 128.0), 0)
    threshold = 128 * n_px
    bias = np.array([threshold, -threshold], dtype=np.int32)
    out_qp = QuantParams(_f32(0.28), 0)
    m = IMAGE_INPUT_QPARAMS.scale * w_qp.scale / out_qp.scale
    mantissa, shift = quantize_multiplier(m)
    fc = LayerDesc(kind=LayerKind.FULLY_CONNECTED, out_qparams=out_qp,
                   mantissa=mantissa, shift=shift,
                   weight=QuantTensor((n_px, 2), w, w_qp), bias=bias)
    sm = LayerDesc(kind=LayerKind.SOFTMAX, out_qparams=SOFTMAX_QP)
    return _finalize("stub-person", (1, 96, 96, 1), IMAGE_INPUT_QPARAMS, [fc, sm])


def mel_band_for_frequency(freq_hz: float) -> int:
    """Index of the mel band whose triangle is tallest at freq_hz."""
    edges = _mel_to_hz(np.linspace(_hz_to_mel(MEL_FMIN_HZ), _hz_to_mel(MEL_FMAX_HZ),
                                   N_BANDS + 2))
    best, best_w = 0, -1.0
    for m in range(N_BANDS):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        w = min((freq_hz - lo) / (center - lo), (hi - freq_hz) / (hi - center))
        if w > best_w:
            best, best_w = m, w
    return best


def stub_keyword_model() -> ModelGraph:
    """Deterministic keyword stub keyed to the four fixture tones.

    Each floor class sums the 49 cells of the mel band (plus immediate
    neighbors) centered on its tone; 'silence' wins by default at zero and
    'unknown' carries a constant losing bias.
    """
    n_in = N_FRAMES * N_BANDS
    w = np.zeros((n_in, 6), dtype=np.int8)
    for cls, freq in enumerate(STUB_TONES_HZ.values()):
        band = mel_band_for_frequency(freq)
        for b in (band - 1, band, band + 1):
            if 0 <= b < N_BANDS:
                weight = 2 if b == band else 1
                for row in range(N_FRAMES):
                    w[row * N_BANDS + b, cls] = weight
    w_qp = QuantParams(_f32(1.0 / 64.0), 0)
    bias = np.array([0, 0, 0, 0, -2048, 0], dtype=np.int32)  # unknown never wins
    out_qp = QuantParams(_f32(0.32), 0)
    m = KWS_INPUT_QPARAMS.scale * w_qp.scale / out_qp.scale
    mantissa, shift = quantize_multiplier(m)
    fc = LayerDesc(kind=LayerKind.FULLY_CONNECTED, out_qparams=out_qp,
                   mantissa=mantissa, shift=shift,
                   weight=QuantTensor((n_in, 6), w, w_qp), bias=bias)
    sm = LayerDesc(kind=LayerKind.SOFTMAX, out_qparams=SOFTMAX_QP)
    return _finalize("stub-kws", (1, N_FRAMES, N_BANDS, 1), KWS_INPUT_QPARAMS, [fc, sm])
