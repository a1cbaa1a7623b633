"""Training configuration, corpus loading, and augmentation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetMissing
from .frontend import LOG_FLOOR, log_mel_features, read_wav_pcm16

KWS_CLASSES = ("one", "two", "three", "four", "unknown", "silence")
PERSON_CLASSES = ("no_person", "person")  # index 1 = person, engine convention


@dataclass
class TrainingConfig:
    data_dir: Path
    export_path: Path
    classes: tuple[str, ...] = KWS_CLASSES
    epochs: int = 25
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    augment: bool = True
    shift_pct: float = 0.10          # time/space shifts
    rotation_deg: float = 90.0       # images only
    flips: bool = True               # images only
    test_fraction: float = 0.2
    calibration_samples: int = 64
    golden_count: int = 10
    report_path: Path | None = None
    frontend_probe: tuple[Path, Path] | None = None  # (wav, engine CSV)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.export_path = Path(self.export_path)
        if self.report_path is not None:
            self.report_path = Path(self.report_path)


def load_keyword_corpus(root: Path, classes=KWS_CLASSES):
    """(features (N,49,43) float64, labels, wav paths), sorted for determinism."""
    speech = Path(root) / "speech"
    if not speech.is_dir():
        raise DatasetMissing(f"no speech corpus at {speech}")
    feats, labels, paths = [], [], []
    for idx, label in enumerate(classes):
        folder = speech / label
        wavs = sorted(folder.glob("*.wav")) if folder.is_dir() else []
        if not wavs:
            raise DatasetMissing(f"class folder {folder} is missing or empty")
        for wav in wavs:
            samples = read_wav_pcm16(wav)
            if len(samples) < 16000:  # pad short clips to one second
                samples = np.concatenate([samples,
                                          np.zeros(16000 - len(samples), np.int16)])
            feats.append(log_mel_features(samples))
            labels.append(idx)
            paths.append(wav)
    return np.stack(feats), np.asarray(labels, np.int64), paths


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise DatasetMissing(f"{path}: not a binary PGM")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    w, h, _ = fields
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], np.uint8).reshape(h, w)


def load_person_corpus(root: Path):
    """(images (N,96,96) uint8, labels, paths) with label 1 = person."""
    vision = Path(root) / "vision"
    if not vision.is_dir():
        raise DatasetMissing(f"no vision corpus at {vision}")
    imgs, labels, paths = [], [], []
    for idx, label in enumerate(PERSON_CLASSES):
        folder = vision / label
        files = sorted(folder.glob("*.pgm")) if folder.is_dir() else []
        if not files:
            raise DatasetMissing(f"class folder {folder} is missing or empty")
        for f in files:
            imgs.append(_read_pgm(f))
            labels.append(idx)
            paths.append(f)
    return np.stack(imgs), np.asarray(labels, np.int64), paths


def stratified_split(rng: np.random.Generator, labels: np.ndarray,
                     test_fraction: float):
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        n_test = max(1, int(round(len(members) * test_fraction)))
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    return np.asarray(sorted(train_idx)), np.asarray(sorted(test_idx))


def augment_features(rng: np.random.Generator, feats: np.ndarray,
                     shift_pct: float) -> np.ndarray:
    """Random time shift of up to shift_pct of the 49 slices, floor-filled."""
    out = feats.copy()
    max_shift = int(round(feats.shape[1] * shift_pct))
    for i in range(len(out)):
        shift = int(rng.integers(-max_shift, max_shift + 1))
        if shift:
            rolled = np.roll(out[i], shift, axis=0)
            if shift > 0:
                rolled[:shift] = np.log(LOG_FLOOR)
            else:
                rolled[shift:] = np.log(LOG_FLOOR)
            out[i] = rolled
    return out


def _rotate_nearest(img: np.ndarray, degrees: float) -> np.ndarray:
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ys = cy + (yy - cy) * np.cos(theta) - (xx - cx) * np.sin(theta)
    xs = cx + (yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
    yi = np.clip(np.rint(ys).astype(np.int64), 0, h - 1)
    xi = np.clip(np.rint(xs).astype(np.int64), 0, w - 1)
    valid = (ys >= -0.5) & (ys <= h - 0.5) & (xs >= -0.5) & (xs <= w - 0.5)
    fill = int(np.median(img))
    return np.where(valid, img[yi, xi], fill).astype(np.uint8)


def augment_images(rng: np.random.Generator, imgs: np.ndarray,
                   shift_pct: float, rotation_deg: float, flips: bool) -> np.ndarray:
    out = imgs.copy()
    h, w = imgs.shape[1:]
    max_dy, max_dx = int(round(h * shift_pct)), int(round(w * shift_pct))
    for i in range(len(out)):
        img = out[i]
        dy = int(rng.integers(-max_dy, max_dy + 1))
        dx = int(rng.integers(-max_dx, max_dx + 1))
        if dy or dx:
            fill = int(np.median(img))
            shifted = np.full_like(img, fill)
            ys_src = slice(max(0, -dy), min(h, h - dy))
            xs_src = slice(max(0, -dx), min(w, w - dx))
            ys_dst = slice(max(0, dy), min(h, h + dy))
            xs_dst = slice(max(0, dx), min(w, w + dx))
            shifted[ys_dst, xs_dst] = img[ys_src, xs_src]
            img = shifted
        angle = float(rng.uniform(-rotation_deg, rotation_deg))
        if abs(angle) > 1.0:
            img = _rotate_nearest(img, angle)
        if flips and rng.random() < 0.5:
            img = img[:, ::-1]
        if flips and rng.random() < 0.5:
            img = img[::-1, :]
        out[i] = img
    return out


def dataset_hash(*arrays: np.ndarray) -> str:
    digest = hashlib.sha256()
    for arr in arrays:
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()
