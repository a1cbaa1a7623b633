"""Audio feature frontend: 16 kHz PCM -> 49x43 log-mel spectrogram.

The keyword model consumes one second of audio as 49 time slices of 43
log-mel band energies. Geometry:

  - 30 ms analysis window (480 samples) sliding by 20 ms (320 samples),
    so a 16000-sample buffer yields exactly 49 slices
  - each window is zero-padded to 512 samples; magnitude bins 0..255 kept
  - 43 triangular mel filters spanning 125-7500 Hz reduce 256 bins to 43
  - natural log with a 1e-6 energy floor

All math here is float64; int8 quantization happens only at the model
boundary (``quantize_features``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import BufferTooShort, NegativeMagnitude, WrongFrameLength

SAMPLE_RATE = 16_000
WINDOW_LEN = 480          # 30 ms
STRIDE = 320              # 20 ms
FFT_LEN = 512
N_BINS = 256              # bins 0..255, Nyquist bin discarded
N_BANDS = 43
N_FRAMES = 49             # frames in one 16000-sample buffer
MEL_FMIN_HZ = 125.0
MEL_FMAX_HZ = 7500.0
EPS_FLOOR = 1e-6
N_CEPSTRA = 13


def round_half_away(x: np.ndarray | float) -> np.ndarray | float:
    """Round halves away from zero (numpy's default rounds half to even)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signed 16-bit PCM at exactly 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.int16)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Spectrogram:
    """49x43 feature matrix plus an optional quantized int8 twin."""

    values: np.ndarray                      # (49, 43) float64, time-major
    quantized: np.ndarray | None = None     # (49, 43) int8
    scale: float | None = None
    zero_point: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_FRAMES, N_BANDS):
            raise ValueError(f"expected ({N_FRAMES}, {N_BANDS}) features, got {values.shape}")
        object.__setattr__(self, "values", values)

    def with_quantized(self, scale: float, zero_point: int) -> "Spectrogram":
        q = quantize_features(self.values, scale, zero_point)
        return replace(self, quantized=q, scale=scale, zero_point=zero_point)


def frame_audio(buf: AudioBuffer, window_len: int = WINDOW_LEN, stride: int = STRIDE) -> np.ndarray:
    """Slice a buffer into overlapping frames, shape (n_frames, window_len)."""
    samples = buf.samples
    if len(samples) < window_len:
        raise BufferTooShort(f"need at least {window_len} samples, got {len(samples)}")
    n_frames = (len(samples) - window_len) // stride + 1
    frames = np.empty((n_frames, window_len), dtype=np.int16)
    for i in range(n_frames):
        start = i * stride
        frames[i] = samples[start:start + window_len]
    return frames


def _window_coeffs(kind: str, length: int) -> np.ndarray | None:
    if kind == "rectangular":
        return None
    if kind == "hann":
        return np.hanning(length)
    raise ValueError(f"unknown window {kind!r}")


def fft_magnitude(frame: np.ndarray, window: str = "rectangular") -> np.ndarray:
    """Magnitude spectrum of one frame: 512-point transform, bins 0..255."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (WINDOW_LEN,):
        raise WrongFrameLength(f"expected {WINDOW_LEN} samples, got {frame.shape}")
    coeffs = _window_coeffs(window, WINDOW_LEN)
    if coeffs is not None:
        frame = frame * coeffs
    padded = np.zeros(FFT_LEN, dtype=np.float64)
    padded[:WINDOW_LEN] = frame
    return np.abs(np.fft.rfft(padded))[:N_BINS]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_weight_table(n_bins: int = N_BINS, n_bands: int = N_BANDS,
                     sample_rate: int = SAMPLE_RATE, fft_len: int = FFT_LEN,
                     fmin: float = MEL_FMIN_HZ, fmax: float = MEL_FMAX_HZ) -> np.ndarray:
    """(n_bands, n_bins) triangle weights, mel-spaced band edges."""
    edges_hz = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))
    bin_hz = np.arange(n_bins) * (sample_rate / fft_len)
    table = np.zeros((n_bands, n_bins), dtype=np.float64)
    for m in range(n_bands):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        table[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    table.setflags(write=False)
    return table


def mel_filterbank(mags: np.ndarray) -> np.ndarray:
    """Reduce 256 magnitudes to 43 mel band energies (fixed weighted sums)."""
    mags = np.asarray(mags, dtype=np.float64)
    if mags.shape != (N_BINS,):
        raise ValueError(f"expected {N_BINS} magnitudes, got {mags.shape}")
    if np.any(mags < 0):
        raise NegativeMagnitude("magnitudes must be nonnegative")
    return mel_weight_table() @ mags


def log_scale(energies: np.ndarray, eps_floor: float = EPS_FLOOR) -> np.ndarray:
    """ln(max(e, eps_floor)) per band."""
    energies = np.asarray(energies, dtype=np.float64)
    return np.log(np.maximum(energies, eps_floor))


def dct_mfcc(slice_energies: np.ndarray, n_coeffs: int = N_CEPSTRA) -> np.ndarray:
    """First n_coeffs terms of the type-II DCT of one 43-entry slice.

    Unnormalized convention: X_k = sum_n x_n * cos(pi*(n+1/2)*k/N).
    Optional stage; the model input is the raw log-mel slice by default.
    """
    x = np.asarray(slice_energies, dtype=np.float64)
    if x.shape != (N_BANDS,):
        raise ValueError(f"expected {N_BANDS} entries, got {x.shape}")
    n = np.arange(N_BANDS)
    k = np.arange(n_coeffs)
    basis = np.cos(np.pi * np.outer(k, n + 0.5) / N_BANDS)
    return basis @ x


def build_spectrogram(buf: AudioBuffer, window: str = "rectangular",
                      eps_floor: float = EPS_FLOOR) -> Spectrogram:
    """Full frontend over the most recent one second of audio."""
    if len(buf) < SAMPLE_RATE:
        raise BufferTooShort(f"need {SAMPLE_RATE} samples for one spectrogram, got {len(buf)}")
    recent = AudioBuffer(buf.samples[-SAMPLE_RATE:])
    frames = frame_audio(recent)
    rows = np.empty((N_FRAMES, N_BANDS), dtype=np.float64)
    for i, frame in enumerate(frames):
        rows[i] = log_scale(mel_filterbank(fft_magnitude(frame, window=window)), eps_floor)
    return Spectrogram(rows)


def quantize_features(values: np.ndarray | Spectrogram, scale: float, zero_point: int) -> np.ndarray:
    """Affine-quantize features to int8: clamp(round(x/scale) + zp, -128, 127)."""
    if isinstance(values, Spectrogram):
        values = values.values
    if scale <= 0:
        raise ValueError("scale must be positive")
    q = round_half_away(np.asarray(values, dtype=np.float64) / scale) + zero_point
    return np.clip(q, -128, 127).astype(np.int8)
