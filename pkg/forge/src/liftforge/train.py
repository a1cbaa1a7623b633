"""Training entry points: keyword spotting and person detection.

Both follow the same recipe: load corpus -> stratified split -> train the
float torch net (per-epoch JSONL report) -> fold/extract to container
layout -> post-training int8 quantization calibrated on training samples ->
quantized held-out evaluation -> TMLF export plus golden fixtures recording
the trainer's own quantized scores.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import (
    KWS_CLASSES,
    TrainingConfig,
    augment_features,
    augment_images,
    load_keyword_corpus,
    load_person_corpus,
    stratified_split,
)
from .errors import FlashBudgetExceeded
from .frontend import check_frontend_parity
from .models import (
    MobileNet025,
    TinyConvNet,
    extract_mobilenet,
    extract_tiny_conv,
)
from .quant import f32, quantize_input, quantize_model, run_quantized
from .tmlf import FLASH_BUDGET, QModel, save_tmlf, write_tmlf

IMAGE_SCALE = 1.0 / 256.0
IMAGE_ZP = -128


@dataclass
class TrainResult:
    model: QModel
    tmlf_bytes: bytes
    float_accuracy: float
    quant_accuracy: float
    export_path: Path
    golden: list[tuple[Path, Path]]  # (input file, scores csv)


def _seed_everything(seed: int) -> np.random.Generator:
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def _fit(net: nn.Module, x_train, y_train, x_test, y_test, cfg: TrainingConfig,
         rng: np.random.Generator, augment_fn, report_rows: list) -> float:
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    n = len(x_train)
    for epoch in range(cfg.epochs):
        batch_x = augment_fn(rng, x_train) if cfg.augment else x_train
        order = rng.permutation(n)
        net.train()
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = torch.from_numpy(np.ascontiguousarray(batch_x[idx])).float().unsqueeze(1)
            yb = torch.from_numpy(y_train[idx])
            opt.zero_grad()
            logits = net(xb)
            loss = loss_fn(logits, yb)
            loss.backward()
            opt.step()
            total_loss += float(loss.detach()) * len(idx)
            correct += int((logits.argmax(1) == yb).sum())
        val_acc = _eval_torch(net, x_test, y_test, cfg.batch_size)
        report_rows.append({"epoch": epoch, "loss": round(total_loss / n, 6),
                            "train_acc": round(correct / n, 4),
                            "val_acc": round(val_acc, 4)})
    return _eval_torch(net, x_test, y_test, cfg.batch_size)


def _eval_torch(net: nn.Module, x, y, batch_size: int) -> float:
    net.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            xb = torch.from_numpy(np.ascontiguousarray(x[start:start + batch_size]))
            logits = net(xb.float().unsqueeze(1))
            correct += int((logits.argmax(1) == torch.from_numpy(
                y[start:start + batch_size])).sum())
    return correct / len(x)


def _quant_accuracy(model: QModel, x_nhwc: np.ndarray, y: np.ndarray,
                    batch: int = 64) -> float:
    correct = 0
    for start in range(0, len(x_nhwc), batch):
        chunk = x_nhwc[start:start + batch]
        scores = run_quantized(model, quantize_input(model, chunk))
        correct += int((scores.argmax(-1) == y[start:start + batch]).sum())
    return correct / len(x_nhwc)


def _write_report(cfg: TrainingConfig, rows: list, summary: dict) -> None:
    if cfg.report_path is None:
        return
    with open(cfg.report_path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
        fh.write(json.dumps(summary) + "\n")


def export_tmlf(model: QModel, path: str | Path) -> int:
    """Write the container stream; enforces the 250 KiB flash budget."""
    size = save_tmlf(model, path)
    if size > FLASH_BUDGET:
        raise FlashBudgetExceeded(f"{size} bytes > {FLASH_BUDGET}")
    return size


def _export_golden(model: QModel, inputs_nhwc: np.ndarray, sources: list[Path],
                   outdir: Path, stem: str) -> list[tuple[Path, Path]]:
    outdir.mkdir(parents=True, exist_ok=True)
    pairs = []
    scores = run_quantized(model, quantize_input(model, inputs_nhwc))
    for i, (src, row) in enumerate(zip(sources, scores)):
        dst = outdir / f"{stem}_{i:02d}{src.suffix}"
        shutil.copyfile(src, dst)
        csv = outdir / f"{stem}_{i:02d}.scores.csv"
        csv.write_text(",".join(str(int(v)) for v in row.reshape(-1)) + "\n")
        pairs.append((dst, csv))
    return pairs


def train_kws(cfg: TrainingConfig) -> TrainResult:
    """Six-class keyword model on 49x43 log-mel features."""
    if cfg.frontend_probe is not None:
        check_frontend_parity(*cfg.frontend_probe)  # FrontendMismatch on drift
    feats, labels, paths = load_keyword_corpus(cfg.data_dir, cfg.classes)
    rng = _seed_everything(cfg.seed)
    train_idx, test_idx = stratified_split(rng, labels, cfg.test_fraction)
    x_train, y_train = feats[train_idx], labels[train_idx]
    x_test, y_test = feats[test_idx], labels[test_idx]

    net = TinyConvNet()
    rows: list = []
    augment = lambda r, x: augment_features(r, x, cfg.shift_pct)
    float_acc = _fit(net, x_train, y_train, x_test, y_test, cfg, rng, augment, rows)

    layers = extract_tiny_conv(net)
    calib = x_train[:cfg.calibration_samples][..., None]
    in_scale = f32(max(float(np.abs(feats).max()), 1e-3) / 127.0)
    qmodel = quantize_model("kws-tiny-conv", layers, (1, 49, 43, 1),
                            in_scale, 0, calib)
    quant_acc = _quant_accuracy(qmodel, x_test[..., None], y_test)
    size = export_tmlf(qmodel, cfg.export_path)

    golden_idx = test_idx[:cfg.golden_count]
    golden = _export_golden(qmodel, feats[golden_idx][..., None],
                            [paths[i] for i in golden_idx],
                            cfg.export_path.parent / "golden", "kws")
    _write_report(cfg, rows, {"event": "export", "path": str(cfg.export_path),
                              "bytes": size, "float_acc": round(float_acc, 4),
                              "quant_acc": round(quant_acc, 4)})
    return TrainResult(qmodel, write_tmlf(qmodel), float_acc, quant_acc,
                       cfg.export_path, golden)


def train_person(cfg: TrainingConfig) -> TrainResult:
    """Two-class person detector on 96x96 grayscale."""
    images, labels, paths = load_person_corpus(cfg.data_dir)
    rng = _seed_everything(cfg.seed)
    train_idx, test_idx = stratified_split(rng, labels, cfg.test_fraction)
    # the engine feeds pixels as (q + 128)/256, i.e. p/256
    to_real = lambda imgs: imgs.astype(np.float64) / 256.0
    y_train, y_test = labels[train_idx], labels[test_idx]

    net = MobileNet025()
    rows: list = []

    def augment(r, x_real):
        del x_real  # augmentation happens in pixel space
        pixels = augment_images(r, images[train_idx], cfg.shift_pct,
                                cfg.rotation_deg, cfg.flips)
        return to_real(pixels)

    x_train = to_real(images[train_idx])
    x_test = to_real(images[test_idx])
    float_acc = _fit(net, x_train, y_train, x_test, y_test, cfg, rng,
                     augment if cfg.augment else (lambda r, x: x), rows)

    layers = extract_mobilenet(net)
    calib = x_train[:cfg.calibration_samples][..., None]
    qmodel = quantize_model("person-mobilenet-0.25", layers, (1, 96, 96, 1),
                            IMAGE_SCALE, IMAGE_ZP, calib)
    quant_acc = _quant_accuracy(qmodel, x_test[..., None], y_test, batch=32)
    size = export_tmlf(qmodel, cfg.export_path)

    golden_idx = test_idx[:cfg.golden_count]
    golden = _export_golden(qmodel, to_real(images[golden_idx])[..., None],
                            [paths[i] for i in golden_idx],
                            cfg.export_path.parent / "golden", "person")
    _write_report(cfg, rows, {"event": "export", "path": str(cfg.export_path),
                              "bytes": size, "float_acc": round(float_acc, 4),
                              "quant_acc": round(quant_acc, 4)})
    return TrainResult(qmodel, write_tmlf(qmodel), float_acc, quant_acc,
                       cfg.export_path, golden)
