"""Acceptance suite: one test per release criterion, stated tolerances pinned.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per criterion.
"""

import math
import time

import numpy as np
import pytest

from helpers import (
    ORACLES,
    oracle_requantize,
    random_controller_events,
    random_small_graph,
    replay_controller,
)
from test_dsp import naive_dft_magnitude, oracle_mel_edges, oracle_mel_table, tone_buffer
from tinylift import dsp
from tinylift.cli import main as cli_main
from tinylift.controller import decide_person, score_to_percent, ControllerConfig
from tinylift.engine import (
    ARENA_CAPACITY_BYTES,
    FLASH_BUDGET_BYTES,
    Arena,
    invoke,
    parse_model,
    plan_arena,
    reference_invoke_float,
    requantize,
    serialize_model,
)
from tinylift.engine.kernels import run_layer
from tinylift.engine.zoo import keyword_spotting_reference, person_detection_reference
from tinylift.errors import FlashBudgetExceeded
from tinylift.fixtures import write_fixtures
from tinylift.sim import bench_report, load_scenario, run_scenario


def _report(name):
    print(f"\n[ACCEPTANCE] {name}: PASS")


def test_dsp_oracle_equivalence():
    """50 random frames: FFT vs naive DFT (1e-6 rel), mel table (1e-9). <10 s."""
    started = time.time()
    rng = np.random.default_rng(50_001)
    for _ in range(50):
        frame = rng.integers(-32768, 32768, size=480).astype(np.int16)
        got = dsp.fft_magnitude(frame)
        want = naive_dft_magnitude(frame)
        np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(dsp.mel_weight_table(), oracle_mel_table(),
                               rtol=1e-9, atol=1e-12)
    rng_m = np.random.default_rng(50_002)
    for _ in range(50):
        mags = rng_m.random(256) * 1e6
        np.testing.assert_allclose(dsp.mel_filterbank(mags), oracle_mel_table() @ mags,
                                   rtol=1e-9)
    elapsed = time.time() - started
    assert elapsed < 10.0, f"ran {elapsed:.1f}s, budget 10s"
    _report(f"dsp-oracle-equivalence ({elapsed:.1f}s)")


def test_spectrogram_shape_and_stationarity():
    """1 s of 1 kHz sine: 49x43, rows equal within 1e-9, peak in the 1 kHz band."""
    spec = dsp.build_spectrogram(tone_buffer(1000.0))
    assert spec.values.shape == (49, 43)
    for i in range(49):
        for j in range(i + 1, 49):
            np.testing.assert_allclose(spec.values[i], spec.values[j], rtol=0, atol=1e-9)
    edges = oracle_mel_edges()
    covering = [m for m in range(43) if edges[m] < 1000.0 < edges[m + 2]]
    assert int(np.argmax(spec.values[0])) in covering
    _report("spectrogram-shape-stationarity")


def test_quantized_engine_correctness():
    """100 random graphs: kernels bit-exact, e2e within 3 LSB, requantize exact. <60 s."""
    started = time.time()
    rng = np.random.default_rng(42)
    worst = 0.0
    for i in range(100):
        graph, x = random_small_graph(rng)
        current = x
        for layer in graph.layers:
            out = run_layer(current, layer)
            if layer.kind in ORACLES:
                want = ORACLES[layer.kind](current, layer)
                np.testing.assert_array_equal(out.data, want,
                                              err_msg=f"graph {i} {layer.kind.name}")
            current = out
        arena = Arena()
        arena.activate(graph)
        got = (invoke(graph, arena, x).data.astype(np.float64) + 128.0) / 256.0
        ref = reference_invoke_float(graph, x.dequantize())
        worst = max(worst, float(np.abs(got - ref).max()))
    assert worst <= 3.0 / 256.0, f"worst deviation {worst * 256:.2f} LSB > 3 LSB"

    rng_r = np.random.default_rng(101)
    accs = rng_r.integers(-(2 ** 31), 2 ** 31, size=10_000)
    mants = rng_r.integers(2 ** 30, 2 ** 31, size=10_000)
    shifts = rng_r.integers(0, 32, size=10_000)
    zps = rng_r.integers(-128, 128, size=10_000)
    for acc, mant, shift, zp in zip(accs, mants, shifts, zps):
        assert requantize(int(acc), int(mant), int(shift), int(zp)) == \
            oracle_requantize(int(acc), int(mant), int(shift), int(zp))
    elapsed = time.time() - started
    assert elapsed < 60.0, f"ran {elapsed:.1f}s, budget 60s"
    _report(f"quantized-engine-correctness (worst {worst * 256:.2f} LSB, {elapsed:.1f}s)")


def test_budgets(tmp_path, capsys):
    """Flash cap 256,000 bytes enforced; both reference arenas fit 262,144 bytes."""
    person = person_detection_reference()
    kws = keyword_spotting_reference()

    padded = serialize_model(kws) + bytes(256_001 - kws.flash_size)
    assert len(padded) == 256_001 > FLASH_BUDGET_BYTES
    with pytest.raises(FlashBudgetExceeded):
        parse_model(padded)
    assert person.flash_size <= FLASH_BUDGET_BYTES

    for graph in (person, kws):
        plan = plan_arena(graph, ARENA_CAPACITY_BYTES)
        assert plan.peak_bytes <= 262_144, graph.name

    # the budget report is part of the CLI contract
    for graph, name in ((person, "p.tmlf"), (kws, "k.tmlf")):
        path = tmp_path / name
        path.write_bytes(serialize_model(graph))
        assert cli_main(["inspect", str(path)]) == 0
        out = capsys.readouterr().out
        assert "flash:" in out and "[PASS]" in out and "arena peak:" in out
    _report(f"budgets (flash {person.flash_size}/{FLASH_BUDGET_BYTES} bytes, "
            f"arena peak {plan_arena(person).peak_bytes}/{ARENA_CAPACITY_BYTES})")


def test_threshold_semantics():
    """Exhaustive int8 scan: the detection decision flips exactly at score 23 (59%)."""
    cfg = ControllerConfig()
    assert cfg.detect_threshold_pct == 59
    flips = [s for s in range(-128, 128)
             if decide_person(s, cfg) and not decide_person(s - 1, cfg)]
    assert flips == [23]
    assert score_to_percent(23) == 59
    assert all(not decide_person(s, cfg) for s in range(-128, 23))
    assert all(decide_person(s, cfg) for s in range(23, 128))
    _report("threshold-semantics (flip at raw 23 = 59%)")


def test_end_to_end_timing(tmp_path):
    """Stub scenario dispatches floor 3 by t=5000; silence re-arms after exactly 5000 ms."""
    assets = write_fixtures(tmp_path, include_reference_models=False)
    from tinylift.engine.model import load_model

    person = load_model(assets["stub_person"])
    kws = load_model(assets["stub_kws"])
    cfg = ControllerConfig()
    assert cfg.pd_latency_ms == 740 and cfg.kws_latency_ms == 30

    demo = load_scenario(tmp_path / "demo.scenario")
    first = run_scenario(demo, person, kws, cfg)
    second = run_scenario(demo, person, kws, cfg)
    assert first.transcript == second.transcript  # zero timestamp tolerance
    assert first.all_passed
    (t_dispatch, _, floor, _), = first.dispatches
    assert floor == 3
    assert t_dispatch <= 5000

    quiet = load_scenario(tmp_path / "timeout.scenario")
    stats = run_scenario(quiet, person, kws, cfg)
    assert stats.all_passed
    t_listen = next(int(l.split()[0][2:]) for l in stats.transcript
                    if "mode listening" in l)
    t_idle = next(int(l.split()[0][2:]) for l in stats.transcript if "mode idle" in l)
    assert t_idle - t_listen == 5000  # exact, no tolerance

    report = bench_report([first, second])
    assert report.deterministic
    _report(f"end-to-end-timing (dispatch at t={t_dispatch} ms <= 5000, "
            f"timeout exactly 5000 ms)")


def test_state_machine_properties():
    """10,000 random event tapes: coupling + no unsanctioned dispatch + determinism."""
    rng = np.random.default_rng(777)
    for _ in range(10_000):
        tape = random_controller_events(rng, int(rng.integers(4, 16)))
        first = replay_controller(tape)   # asserts coupling and dispatch gating
        second = replay_controller(tape)
        assert first == second
    _report("state-machine-properties (10,000 sequences)")
