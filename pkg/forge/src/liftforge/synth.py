"""Desk-scale stand-in corpora, written in the real dataset layouts.

The sandboxed environment cannot download the public speech/vision corpora,
so these generators produce classifiable material in the same on-disk
shapes the loaders expect:

    <root>/speech/<class>/NNNN.wav      mono 16-bit PCM, 16 kHz, 1 s
    <root>/vision/person/NNNN.pgm       binary PGM, 96x96
    <root>/vision/no_person/NNNN.pgm

Keywords are harmonic tone complexes with jittered pitch, envelopes, and
noise (one/two/three/four sit at distinct fundamentals; unknown draws from
out-of-vocabulary pitches; silence is low-amplitude noise). Person frames
composite a head/torso/leg figure onto a textured background.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .frontend import SAMPLE_RATE, write_wav_pcm16

KWS_CLASSES = ("one", "two", "three", "four", "unknown", "silence")
CLASS_F0_HZ = {"one": 400.0, "two": 700.0, "three": 1000.0, "four": 1300.0}
UNKNOWN_F0_HZ = (250.0, 550.0, 850.0, 1150.0, 1700.0, 2200.0)


def _tone_complex(rng: np.random.Generator, f0: float) -> np.ndarray:
    n = SAMPLE_RATE
    t = np.arange(n) / SAMPLE_RATE
    f = f0 * rng.uniform(0.94, 1.06)
    sig = np.zeros(n)
    for harmonic, weight in ((1, 1.0), (2, 0.45), (3, 0.2)):
        sig += weight * rng.uniform(0.6, 1.0) * \
            np.sin(2 * np.pi * f * harmonic * t + rng.uniform(0, 2 * np.pi))
    # word-shaped envelope somewhere inside the clip
    dur = int(rng.uniform(0.35, 0.75) * n)
    start = int(rng.uniform(0.0, 1.0) * (n - dur))
    env = np.zeros(n)
    ramp = max(int(0.06 * dur), 1)
    env[start:start + dur] = 1.0
    env[start:start + ramp] = np.linspace(0, 1, ramp)
    env[start + dur - ramp:start + dur] = np.linspace(1, 0, ramp)
    sig = sig * env + rng.normal(0, rng.uniform(0.003, 0.02), n)
    peak = rng.uniform(0.25, 0.5) * 32767.0
    sig = sig / max(np.abs(sig).max(), 1e-9) * peak
    return np.clip(sig, -32768, 32767).astype(np.int16)


def synth_keyword_clip(rng: np.random.Generator, label: str) -> np.ndarray:
    if label in CLASS_F0_HZ:
        return _tone_complex(rng, CLASS_F0_HZ[label])
    if label == "unknown":
        return _tone_complex(rng, float(rng.choice(UNKNOWN_F0_HZ)))
    if label == "silence":
        noise = rng.normal(0, rng.uniform(30, 250), SAMPLE_RATE)
        return np.clip(noise, -32768, 32767).astype(np.int16)
    raise ValueError(f"unknown class {label!r}")


def _write_pgm(pixels: np.ndarray, path: Path) -> None:
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.astype(np.uint8).tobytes())


def _background(rng: np.random.Generator, size: int = 96) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(60, 180)
    img = base + rng.uniform(-50, 50) * yy + rng.uniform(-50, 50) * xx
    for _ in range(rng.integers(1, 4)):  # large soft blobs
        cy, cx = rng.uniform(0, size, 2)
        r = rng.uniform(10, 40)
        d2 = (np.mgrid[0:size, 0:size][0] - cy) ** 2 + (np.mgrid[0:size, 0:size][1] - cx) ** 2
        img += rng.uniform(-35, 35) * np.exp(-d2 / (2 * r * r))
    img += rng.normal(0, 6, (size, size))
    return img


def _draw_person(rng: np.random.Generator, img: np.ndarray) -> np.ndarray:
    size = img.shape[0]
    scale = rng.uniform(0.5, 1.0)
    cx = rng.uniform(0.25, 0.75) * size
    base_y = rng.uniform(0.55, 0.9) * size
    tone = rng.uniform(40, 90) * rng.choice([-1.0, 1.0])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    head_r = 7.5 * scale
    torso_h, torso_w = 26 * scale, 10 * scale
    head_cy = base_y - (torso_h + head_r + 2 * scale)
    head = ((yy - head_cy) ** 2 + (xx - cx) ** 2) <= head_r ** 2
    torso = (np.abs(xx - cx) <= torso_w / 2) & \
            (yy >= head_cy + head_r) & (yy <= head_cy + head_r + torso_h)
    leg_w = 3.5 * scale
    leg_gap = 2.5 * scale
    legs = (yy > head_cy + head_r + torso_h) & (yy <= base_y + 14 * scale) & \
           ((np.abs(xx - (cx - leg_gap - leg_w / 2)) <= leg_w / 2) |
            (np.abs(xx - (cx + leg_gap + leg_w / 2)) <= leg_w / 2))
    out = img.copy()
    out[head | torso | legs] += tone
    return out


def synth_person_image(rng: np.random.Generator, with_person: bool) -> np.ndarray:
    img = _background(rng)
    if with_person:
        img = _draw_person(rng, img)
    return np.clip(img, 0, 255).astype(np.uint8)


def write_corpus(root: str | Path, keywords_per_class: int = 240,
                 images_per_class: int = 1000, seed: int = 0) -> dict:
    """Populate <root>/speech and <root>/vision; returns per-split counts."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    counts = {}
    for label in KWS_CLASSES:
        folder = root / "speech" / label
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(keywords_per_class):
            write_wav_pcm16(synth_keyword_clip(rng, label), folder / f"{i:04d}.wav")
        counts[f"speech/{label}"] = keywords_per_class
    for label, with_person in (("person", True), ("no_person", False)):
        folder = root / "vision" / label
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(images_per_class):
            _write_pgm(synth_person_image(rng, with_person), folder / f"{i:04d}.pgm")
        counts[f"vision/{label}"] = images_per_class
    return counts
