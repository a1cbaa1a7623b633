"""Strict WAV reader/writer for the recorded-audio contract.

Only mono 16-bit PCM at 16 kHz is accepted; anything else is rejected,
never resampled.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, AudioBuffer
from .errors import NotRiff, UnsupportedEncoding


def read_wav(source: str | Path | bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE byte stream into an AudioBuffer."""
    data = Path(source).read_bytes() if isinstance(source, (str, Path)) else source
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotRiff("not a RIFF/WAVE stream")
    pos = 12
    fmt = None
    samples = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt " and len(body) >= 16:
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            samples = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None or samples is None:
        raise NotRiff("missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncoding(f"audio format {audio_format}, only PCM (1) supported")
    if channels != 1:
        raise UnsupportedEncoding(f"{channels} channels, only mono supported")
    if bits != 16:
        raise UnsupportedEncoding(f"{bits}-bit samples, only 16-bit supported")
    if rate != SAMPLE_RATE:
        raise UnsupportedEncoding(f"{rate} Hz, only {SAMPLE_RATE} Hz supported")
    count = len(samples) // 2
    return AudioBuffer(np.frombuffer(samples[:count * 2], dtype="<i2").astype(np.int16))


def write_wav(samples: np.ndarray | AudioBuffer, path: str | Path) -> None:
    """Encode mono 16-bit PCM at 16 kHz (fixture/tooling helper)."""
    if isinstance(samples, AudioBuffer):
        samples = samples.samples
    pcm = np.asarray(samples, dtype="<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, SAMPLE_RATE,
                                    SAMPLE_RATE * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    Path(path).write_bytes(header + pcm)
