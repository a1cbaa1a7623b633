"""Trainer command line.

    liftforge synth <outdir> [--keywords N] [--images N] [--seed S]
    liftforge train-kws <data_dir> --out model.tmlf [options]
    liftforge train-person <data_dir> --out model.tmlf [options]
    liftforge check-frontend <wav> <engine_csv>

`synth` writes a desk-scale stand-in corpus in the real dataset layout
(speech/<class>/*.wav, vision/{person,no_person}/*.pgm); point the train
commands at a directory with the same layout to use real corpora instead.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import TrainingConfig
from .errors import ForgeError
from .frontend import check_frontend_parity
from .synth import write_corpus
from .train import train_kws, train_person


def _train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data_dir")
    p.add_argument("--out", required=True, help="TMLF export path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--report", help="per-epoch JSONL report path")
    p.add_argument("--golden-count", type=int, default=10)
    p.add_argument("--probe-wav", help="WAV for the frontend parity check")
    p.add_argument("--probe-csv", help="engine feature CSV for the same WAV")


def _config(args, default_epochs: int, default_batch: int) -> TrainingConfig:
    probe = None
    if args.probe_wav or args.probe_csv:
        if not (args.probe_wav and args.probe_csv):
            raise ForgeError("--probe-wav and --probe-csv go together")
        probe = (Path(args.probe_wav), Path(args.probe_csv))
    return TrainingConfig(
        data_dir=args.data_dir,
        export_path=args.out,
        epochs=args.epochs or default_epochs,
        batch_size=args.batch_size or default_batch,
        seed=args.seed,
        augment=not args.no_augment,
        golden_count=args.golden_count,
        report_path=args.report,
        frontend_probe=probe,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="liftforge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic stand-in corpus")
    p.add_argument("outdir")
    p.add_argument("--keywords", type=int, default=240, help="clips per keyword class")
    p.add_argument("--images", type=int, default=1000, help="images per vision class")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-kws", help="train + quantize the keyword model")
    _train_args(p)

    p = sub.add_parser("train-person", help="train + quantize the person detector")
    _train_args(p)

    p = sub.add_parser("check-frontend", help="compare features against an engine CSV")
    p.add_argument("wav")
    p.add_argument("csv")

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            counts = write_corpus(args.outdir, keywords_per_class=args.keywords,
                                  images_per_class=args.images, seed=args.seed)
            for name, count in sorted(counts.items()):
                print(f"{name}: {count}")
            return 0
        if args.command == "check-frontend":
            worst = check_frontend_parity(args.wav, args.csv)
            print(f"frontend parity OK (max deviation {worst:.3e})")
            return 0
        if args.command == "train-kws":
            result = train_kws(_config(args, default_epochs=25, default_batch=64))
        else:
            result = train_person(_config(args, default_epochs=8, default_batch=32))
        print(f"exported {result.export_path} ({len(result.tmlf_bytes)} bytes)")
        print(f"float accuracy:     {result.float_accuracy:.4f}")
        print(f"quantized accuracy: {result.quant_accuracy:.4f}")
        print(f"golden fixtures:    {len(result.golden)}")
        return 0
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
