"""Trainer-side audio features.

Same geometry the deployed engine uses (30 ms / 20 ms windows, 512-point
transform, 43 mel bands over 125-7500 Hz, ln with 1e-6 floor) but written
as an independent batched implementation; ``check_frontend_parity``
compares it against a feature CSV dumped by the engine CLI and enforces
the 1e-4 per-element drift bound.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FrontendMismatch

SAMPLE_RATE = 16_000
FRAME_LEN = 480
HOP_LEN = 320
N_FFT = 512
N_KEPT_BINS = 256
N_BANDS = 43
N_FRAMES = 49
F_MIN = 125.0
F_MAX = 7500.0
LOG_FLOOR = 1e-6

PARITY_TOLERANCE = 1e-4


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix() -> np.ndarray:
    """(43, 256) triangle weights, computed in one vectorized sweep."""
    edges = _mel_to_hz(np.linspace(_hz_to_mel(F_MIN), _hz_to_mel(F_MAX), N_BANDS + 2))
    freqs = (np.arange(N_KEPT_BINS) * SAMPLE_RATE / N_FFT)[None, :]
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (center - lo)
    falling = (hi - freqs) / (hi - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


_MEL = mel_matrix()


def log_mel_features(samples: np.ndarray) -> np.ndarray:
    """Most recent second of 16 kHz PCM -> (49, 43) float64 log-mel features."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or len(x) < SAMPLE_RATE:
        raise ValueError(f"need >= {SAMPLE_RATE} mono samples, got shape {x.shape}")
    x = x[-SAMPLE_RATE:]
    frames = sliding_window_view(x, FRAME_LEN)[::HOP_LEN]
    mags = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1))[:, :N_KEPT_BINS]
    return np.log(np.maximum(mags @ _MEL.T, LOG_FLOOR))


def read_wav_pcm16(path: str | Path) -> np.ndarray:
    """Minimal mono 16-bit 16 kHz PCM reader for training corpora."""
    import struct

    data = Path(path).read_bytes()
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a WAV file")
    pos, fmt, pcm = 12, None, None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            pcm = body
        pos += 8 + size + (size & 1)
    if fmt is None or pcm is None:
        raise ValueError(f"{path}: missing fmt/data chunk")
    if fmt[:3] != (1, 1, SAMPLE_RATE) or fmt[5] != 16:
        raise ValueError(f"{path}: need mono 16-bit PCM at {SAMPLE_RATE} Hz, got {fmt}")
    return np.frombuffer(pcm, dtype="<i2").astype(np.int16)


def write_wav_pcm16(samples: np.ndarray, path: str | Path) -> None:
    import struct

    pcm = np.asarray(samples, dtype="<i2").tobytes()
    out = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    out += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, SAMPLE_RATE, SAMPLE_RATE * 2, 2, 16)
    out += b"data" + struct.pack("<I", len(pcm)) + pcm
    Path(path).write_bytes(out)


def check_frontend_parity(wav_path: str | Path, engine_csv_path: str | Path) -> float:
    """Compare our features for a WAV against the engine's CSV dump.

    Returns the max per-element deviation; raises FrontendMismatch above
    the 1e-4 bound.
    """
    ours = log_mel_features(read_wav_pcm16(wav_path))
    theirs = np.loadtxt(engine_csv_path, delimiter=",", dtype=np.float64)
    if theirs.shape != ours.shape:
        raise FrontendMismatch(
            f"engine dump shape {theirs.shape} != trainer features {ours.shape}")
    worst = float(np.abs(ours - theirs).max())
    if worst > PARITY_TOLERANCE:
        raise FrontendMismatch(
            f"feature drift {worst:.3e} exceeds {PARITY_TOLERANCE:.0e} per element")
    return worst
