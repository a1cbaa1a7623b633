"""Shared oracles and graph generators for the engine test suite.

Everything here is deliberately independent of the production kernels:
pure-Python loops, Fractions, and hand-computed padding.
"""

from fractions import Fraction

import numpy as np

from tinylift.engine.model import (
    Activation,
    LayerDesc,
    LayerKind,
    Padding,
    QuantParams,
    QuantTensor,
)
from tinylift.engine.zoo import GraphAssembler


def random_controller_events(rng, length):
    """Pre-generated event tape so a sequence can be replayed exactly."""
    from tinylift.controller import (
        CameraFrame,
        InferenceDone,
        SpectrogramReady,
        Tick,
    )

    tape = []
    now = 0
    for _ in range(length):
        now += int(rng.integers(0, 400))
        roll = int(rng.integers(0, 5))
        if roll == 0:
            event = CameraFrame(image=None)
        elif roll == 1:
            event = SpectrogramReady(features=None)
        elif roll == 2:
            event = InferenceDone("person", tuple(int(v) for v in rng.integers(-127, 128, 2)))
        elif roll == 3:
            event = InferenceDone("kws", tuple(int(v) for v in rng.integers(-127, 128, 6)))
        else:
            event = Tick()
        tape.append((now, event))
    return tape


def replay_controller(tape, cfg=None):
    """Fold an event tape through the state machine, checking invariants.

    Returns transcript lines; asserts light/mode coupling and that no
    dispatch happens outside a detection window.
    """
    from tinylift.controller import (
        ControllerConfig,
        ControllerState,
        EmitFrame,
        Light,
        Mode,
        step,
    )

    cfg = cfg or ControllerConfig()
    state = ControllerState()
    lines = []
    in_detection_window = False
    coupling = {Mode.IDLE: Light.RED, Mode.LISTENING: Light.GREEN,
                Mode.DISPATCHING: Light.BLUE}
    for now, event in tape:
        state, actions = step(state, event, now, cfg)
        assert state.light is coupling[state.mode], "light/mode coupling violated"
        if state.mode is Mode.LISTENING:
            in_detection_window = True
        for action in actions:
            if isinstance(action, EmitFrame):
                assert in_detection_window, "dispatch without prior detection"
        if state.mode is Mode.IDLE:
            in_detection_window = False
        lines.append(f"t={now} {type(event).__name__} -> {state.mode.value}"
                     f"/{state.light.value} {[type(a).__name__ for a in actions]}")
    return lines


def weighted_layer(kind, weight_q, w_scale, w_zp, in_scale, out_scale, out_zp,
                   bias=None, stride=(1, 1), padding=Padding.SAME,
                   activation=Activation.NONE):
    """Hand-build one weighted layer with a multiplier derived from scales."""
    from tinylift.engine.zoo import quantize_multiplier

    mantissa, shift = quantize_multiplier(in_scale * w_scale / out_scale)
    return LayerDesc(kind=kind, stride=stride, padding=padding, activation=activation,
                     out_qparams=QuantParams(out_scale, out_zp),
                     mantissa=mantissa, shift=shift,
                     weight=QuantTensor(weight_q.shape, weight_q, QuantParams(w_scale, w_zp)),
                     bias=bias)


def check_plan_sound(plan):
    """Brute-force interference check: live-overlapping tensors never share bytes."""
    n = len(plan.sizes)
    for i in range(n):
        for j in range(i + 1, n):
            (a0, a1), (b0, b1) = plan.lifetimes[i], plan.lifetimes[j]
            if a1 < b0 or b1 < a0:
                continue  # lifetimes disjoint: aliasing is allowed
            lo_i, hi_i = plan.offsets[i], plan.offsets[i] + plan.sizes[i]
            lo_j, hi_j = plan.offsets[j], plan.offsets[j] + plan.sizes[j]
            assert hi_i <= lo_j or hi_j <= lo_i, \
                f"tensors {i} and {j} overlap while simultaneously live"


# --- independent arithmetic oracles ---

def oracle_requantize(acc: int, mantissa: int, shift: int, zero_point: int) -> int:
    """Arbitrary-precision rational reference for the fixed-point multiplier."""
    v = Fraction(int(acc) * int(mantissa), 2 ** (31 + shift))
    if v >= 0:
        q = int(v + Fraction(1, 2))       # floor(v + 1/2)
    else:
        q = -int(-v + Fraction(1, 2))     # -floor(|v| + 1/2)
    return max(-128, min(127, q + zero_point))


def oracle_activation_bounds(activation: Activation, qp: QuantParams) -> tuple[int, int]:
    lo, hi = -128, 127
    if activation in (Activation.RELU, Activation.RELU6):
        lo = max(lo, qp.zero_point)
    if activation is Activation.RELU6:
        six = Fraction(6) / Fraction(qp.scale)
        hi = min(hi, int(six + Fraction(1, 2)) + qp.zero_point)
    return lo, hi


def _oracle_pads(in_size: int, kernel: int, stride: int, padding: Padding):
    if padding is Padding.SAME:
        out = (in_size + stride - 1) // stride
        total = max((out - 1) * stride + kernel - in_size, 0)
        before = total // 2
    else:
        out = (in_size - kernel) // stride + 1
        before = 0
    return out, before


def _finish_oracle(acc: int, layer: LayerDesc) -> int:
    q = oracle_requantize(acc, layer.mantissa, layer.shift, layer.out_qparams.zero_point)
    lo, hi = oracle_activation_bounds(layer.activation, layer.out_qparams)
    return max(lo, min(hi, q))


def oracle_conv2d(x: QuantTensor, layer: LayerDesc) -> np.ndarray:
    """Seven nested loops, Python ints only."""
    n, h, w, cin = x.shape
    kh, kw, _, cout = layer.weight.shape
    sh, sw = layer.stride
    oh, pad_t = _oracle_pads(h, kh, sh, layer.padding)
    ow, pad_l = _oracle_pads(w, kw, sw, layer.padding)
    xz = int(x.qparams.zero_point)
    wz = int(layer.weight.qparams.zero_point)
    xd = x.data
    wd = layer.weight.data
    out = np.zeros((n, oh, ow, cout), dtype=np.int8)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for co in range(cout):
                    acc = int(layer.bias[co]) if layer.bias is not None else 0
                    for dy in range(kh):
                        for dx in range(kw):
                            iy = oy * sh + dy - pad_t
                            ix = ox * sw + dx - pad_l
                            if not (0 <= iy < h and 0 <= ix < w):
                                continue
                            for ci in range(cin):
                                acc += (int(xd[b, iy, ix, ci]) - xz) * \
                                       (int(wd[dy, dx, ci, co]) - wz)
                    out[b, oy, ox, co] = _finish_oracle(acc, layer)
    return out


def oracle_depthwise(x: QuantTensor, layer: LayerDesc) -> np.ndarray:
    n, h, w, ch = x.shape
    kh, kw, _ = layer.weight.shape
    sh, sw = layer.stride
    oh, pad_t = _oracle_pads(h, kh, sh, layer.padding)
    ow, pad_l = _oracle_pads(w, kw, sw, layer.padding)
    xz = int(x.qparams.zero_point)
    wz = int(layer.weight.qparams.zero_point)
    xd, wd = x.data, layer.weight.data
    out = np.zeros((n, oh, ow, ch), dtype=np.int8)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for c in range(ch):
                    acc = int(layer.bias[c]) if layer.bias is not None else 0
                    for dy in range(kh):
                        for dx in range(kw):
                            iy = oy * sh + dy - pad_t
                            ix = ox * sw + dx - pad_l
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += (int(xd[b, iy, ix, c]) - xz) * \
                                       (int(wd[dy, dx, c]) - wz)
                    out[b, oy, ox, c] = _finish_oracle(acc, layer)
    return out


def oracle_fully_connected(x: QuantTensor, layer: LayerDesc) -> np.ndarray:
    n = x.shape[0]
    flat = x.data.reshape(n, -1)
    n_in, n_out = layer.weight.shape
    xz = int(x.qparams.zero_point)
    wz = int(layer.weight.qparams.zero_point)
    out = np.zeros((n, n_out), dtype=np.int8)
    for b in range(n):
        for o in range(n_out):
            acc = int(layer.bias[o]) if layer.bias is not None else 0
            for i in range(n_in):
                acc += (int(flat[b, i]) - xz) * (int(layer.weight.data[i, o]) - wz)
            out[b, o] = _finish_oracle(acc, layer)
    return out


ORACLES = {
    LayerKind.CONV2D: oracle_conv2d,
    LayerKind.DEPTHWISE_CONV2D: oracle_depthwise,
    LayerKind.FULLY_CONNECTED: oracle_fully_connected,
}


# --- random graph generation (generation is product code; checking is not) ---

def random_small_graph(rng: np.random.Generator):
    """A calibrated 2-5 layer graph with dims <= 16 plus its int8 input."""
    h = int(rng.integers(4, 11))
    w = int(rng.integers(4, 11))
    c = int(rng.integers(1, 4))
    in_qp = QuantParams(float(np.float32(rng.uniform(0.02, 0.2))),
                        int(rng.integers(-20, 21)))
    x_data = rng.integers(-128, 128, size=(1, h, w, c)).astype(np.int8)
    x = QuantTensor((1, h, w, c), x_data, in_qp)
    calib = np.concatenate([
        (x_data.astype(np.float64) - in_qp.zero_point) * in_qp.scale,
        (rng.integers(-128, 128, size=(3, h, w, c)) - in_qp.zero_point) * in_qp.scale,
    ])
    g = GraphAssembler(f"rand-{rng.integers(1 << 30)}", (1, h, w, c), in_qp, calib)

    def rand_act():
        return Activation(int(rng.integers(0, 3)))

    def rand_pad():
        return Padding(int(rng.integers(0, 2)))

    arch = int(rng.integers(0, 3))
    if arch == 0:
        cout = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        g.conv(rng.normal(0, 1.0 / np.sqrt(k * k * c), (k, k, c, cout)),
               rng.normal(0, 0.1, cout), stride=(stride, stride),
               padding=rand_pad(), activation=rand_act())
        if rng.random() < 0.5:
            g.depthwise(rng.normal(0, 0.3, (3, 3, cout)), rng.normal(0, 0.1, cout),
                        padding=Padding.SAME, activation=rand_act())
    elif arch == 1:
        g.depthwise(rng.normal(0, 0.4, (int(rng.integers(2, 4)), int(rng.integers(2, 4)), c)),
                    rng.normal(0, 0.1, c), stride=(1, 1), padding=rand_pad(),
                    activation=rand_act())
        cout = int(rng.integers(2, 5))
        # bounded activation before pooling keeps the pooled mean on a fine
        # grid (pooling reuses the input grid; an unbounded zero-mean field
        # would leave the mean buried in quantization noise)
        g.conv(rng.normal(0, 0.5, (1, 1, c, cout)), rng.normal(0, 0.1, cout),
               activation=Activation.RELU6)
        g.avg_pool()
    else:
        if rng.random() < 0.5:
            g.reshape()
    n_classes = int(rng.integers(2, 7))
    flat = int(np.prod(g.calib.shape[1:]))
    # keep float logits modest so probability-space tolerances stay tight
    w_fc = rng.normal(0, 1.0, (flat, n_classes))
    logits = g.calib.reshape(g.calib.shape[0], -1) @ w_fc
    w_fc *= 2.0 / max(float(np.abs(logits).max()), 1e-6)
    g.fully_connected(w_fc, rng.normal(0, 0.05, n_classes))
    g.softmax()
    return g.build(), x
