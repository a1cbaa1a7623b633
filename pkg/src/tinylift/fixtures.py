"""Deterministic demo assets: stub models, tone WAVs, PGM frames, scenarios."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE
from .engine.model import save_model
from .engine.zoo import (
    STUB_TONES_HZ,
    keyword_spotting_reference,
    person_detection_reference,
    stub_keyword_model,
    stub_person_model,
)
from .vision import GrayImage, write_pgm
from .wav import write_wav

TONE_AMPLITUDE = 13107  # ~0.4 full scale


def make_tone(freq_hz: float, duration_ms: int = 1000,
              amplitude: int = TONE_AMPLITUDE) -> np.ndarray:
    """Pure sine at freq_hz, int16, deterministic rounding."""
    n = duration_ms * (SAMPLE_RATE // 1000)
    t = np.arange(n, dtype=np.float64)
    x = amplitude * np.sin(2.0 * math.pi * freq_hz * t / SAMPLE_RATE)
    return np.copysign(np.floor(np.abs(x) + 0.5), x).astype(np.int16)


def flat_image(value: int, size: int = 96) -> GrayImage:
    return GrayImage(np.full((size, size), value, dtype=np.uint8))


DEMO_SCENARIO = """\
# person walks up, says "three"
0 camera person.pgm
0 expect_dispatch 3 5000
1500 audio three.wav
6200 expect_idle 6200
"""

TIMEOUT_SCENARIO = """\
# person walks up, says nothing; unit re-arms after the 5 s window
0 camera person.pgm
0 expect_idle 6000
100 audio silence.wav
"""

QUIET_SCENARIO = """\
# nobody there: no dispatch ever happens
0 camera empty.pgm
0 expect_idle 3000
400 camera empty.pgm
"""


def write_fixtures(outdir: str | Path, include_reference_models: bool = True) -> dict:
    """Populate outdir with everything needed to drive the CLI end to end."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    written["stub_person"] = out / "stub-person.tmlf"
    save_model(stub_person_model(), written["stub_person"])
    written["stub_kws"] = out / "stub-kws.tmlf"
    save_model(stub_keyword_model(), written["stub_kws"])
    if include_reference_models:
        written["ref_person"] = out / "ref-person.tmlf"
        save_model(person_detection_reference(), written["ref_person"])
        written["ref_kws"] = out / "ref-kws.tmlf"
        save_model(keyword_spotting_reference(), written["ref_kws"])

    for name, freq in STUB_TONES_HZ.items():
        written[f"wav_{name}"] = out / f"{name}.wav"
        write_wav(make_tone(freq), written[f"wav_{name}"])
    written["wav_silence"] = out / "silence.wav"
    write_wav(np.zeros(SAMPLE_RATE, dtype=np.int16), written["wav_silence"])

    written["pgm_person"] = out / "person.pgm"
    write_pgm(flat_image(200), written["pgm_person"])
    written["pgm_empty"] = out / "empty.pgm"
    write_pgm(flat_image(40), written["pgm_empty"])

    for name, text in (("demo.scenario", DEMO_SCENARIO),
                       ("timeout.scenario", TIMEOUT_SCENARIO),
                       ("quiet.scenario", QUIET_SCENARIO)):
        written[name] = out / name
        written[name].write_text(text)
    return written
