"""Command-line interface.

    tinylift features <wav> [--csv out.csv] [--no-fig]
    tinylift infer-image <pgm> --model <tmlf>
    tinylift infer-audio <wav> --model <tmlf>
    tinylift inspect <tmlf>
    tinylift run <scenario> --pd <tmlf> --kws <tmlf> [--config cfg] [--transcript out]
    tinylift bench <scenario> --pd <tmlf> --kws <tmlf> --runs N [--report out.csv]
    tinylift make-fixtures <outdir>

`run` exits 0 only when every scenario expectation passes. Report paths
(`--csv`, `--report`) also render a PNG figure next to the delimited file
unless --no-fig is given.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .controller import (
    KEYWORD_CLASSES,
    PERSON_CLASSES,
    ControllerConfig,
    decide_keyword,
    decide_person,
    score_to_percent,
)
from .dsp import build_spectrogram, quantize_features
from .engine import (
    ARENA_CAPACITY_BYTES,
    FLASH_BUDGET_BYTES,
    Arena,
    QuantTensor,
    invoke,
    load_model,
    plan_arena,
)
from .errors import TinyLiftError
from .fixtures import write_fixtures
from .sim import bench_report, load_scenario, run_scenario
from .vision import quantize_image, read_pgm, resize_nearest
from .wav import read_wav


def _load_config(path: str | None) -> ControllerConfig:
    cfg = ControllerConfig()
    if path is None:
        return cfg
    known = {f.name: f.type for f in fields(ControllerConfig)}
    overrides = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TinyLiftError(f"bad config line (want key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise TinyLiftError(f"unknown config key {key!r}")
        if key == "floors":
            overrides[key] = tuple(int(v) for v in value.split(","))
        else:
            overrides[key] = int(value)
    return replace(cfg, **overrides)


def _features(args) -> int:
    spec = build_spectrogram(read_wav(args.wav))
    lines = [",".join(f"{v:.9g}" for v in row) for row in spec.values]
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text)
        print(f"wrote {args.csv} ({spec.values.shape[0]}x{spec.values.shape[1]})")
        if not args.no_fig:
            from .plots import save_spectrogram_figure

            fig_path = Path(args.csv).with_suffix(".png")
            save_spectrogram_figure(spec.values, fig_path, title=Path(args.wav).name)
            print(f"wrote {fig_path}")
    else:
        sys.stdout.write(text)
    return 0


def _print_scores(labels, scores) -> None:
    for label, score in zip(labels, scores):
        print(f"  {label:<10} score={int(score):>5}  pct={score_to_percent(int(score)):>3}%")


def _infer_image(args) -> int:
    graph = load_model(args.model)
    image = resize_nearest(read_pgm(args.input))
    tensor = QuantTensor(graph.input_shape, quantize_image(image), graph.input_qparams)
    arena = Arena()
    arena.activate(graph)
    scores = invoke(graph, arena, tensor).data.reshape(-1)
    print(f"model {graph.name}: scores for {args.input}")
    labels = PERSON_CLASSES if len(scores) == len(PERSON_CLASSES) else \
        [f"class{i}" for i in range(len(scores))]
    _print_scores(labels, scores)
    cfg = ControllerConfig()
    if len(scores) == 2:
        detected = decide_person(int(scores[1]), cfg)
        print(f"person detected: {'yes' if detected else 'no'} "
              f"(threshold {cfg.detect_threshold_pct}%)")
    return 0


def _infer_audio(args) -> int:
    graph = load_model(args.model)
    spec = build_spectrogram(read_wav(args.wav))
    q = quantize_features(spec, graph.input_qparams.scale, graph.input_qparams.zero_point)
    tensor = QuantTensor(graph.input_shape, q, graph.input_qparams)
    arena = Arena()
    arena.activate(graph)
    scores = invoke(graph, arena, tensor).data.reshape(-1)
    print(f"model {graph.name}: scores for {args.wav}")
    labels = KEYWORD_CLASSES if len(scores) == len(KEYWORD_CLASSES) else \
        [f"class{i}" for i in range(len(scores))]
    _print_scores(labels, scores)
    if len(scores) == len(KEYWORD_CLASSES):
        floor = decide_keyword([int(v) for v in scores], ControllerConfig())
        print(f"decision: {'floor ' + str(floor) if floor else 'none'}")
    return 0


def _inspect(args) -> int:
    graph = load_model(args.model)
    print(f"name: {graph.name}")
    print(f"input: shape={graph.input_shape} scale={graph.input_qparams.scale:.8g} "
          f"zp={graph.input_qparams.zero_point}")
    header = f"{'#':>3} {'kind':<18}{'stride':<8}{'pad':<6}{'act':<6}" \
             f"{'weights':<18}{'out shape':<18}{'out scale':>12}{'zp':>5}"
    print(header)
    print("-" * len(header))
    for i, layer in enumerate(graph.layers):
        wshape = "x".join(str(d) for d in layer.weight.shape) if layer.weight is not None else "-"
        oshape = "x".join(str(d) for d in graph.tensor_shapes[i + 1])
        print(f"{i:>3} {layer.kind.name:<18}{layer.stride[0]}x{layer.stride[1]:<6}"
              f"{layer.padding.name:<6}{layer.activation.name:<6}"
              f"{wshape:<18}{oshape:<18}{layer.out_qparams.scale:>12.6g}"
              f"{layer.out_qparams.zero_point:>5}")
    plan = plan_arena(graph, ARENA_CAPACITY_BYTES)
    flash_ok = graph.flash_size <= FLASH_BUDGET_BYTES
    print(f"\nflash: {graph.flash_size} / {FLASH_BUDGET_BYTES} bytes "
          f"[{'PASS' if flash_ok else 'FAIL'}]")
    print(f"arena peak: {plan.peak_bytes} / {ARENA_CAPACITY_BYTES} bytes "
          f"(packed extent {plan.extent_bytes}) [PASS]")
    return 0


def _run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = _load_config(args.config)
    stats = run_scenario(scenario, load_model(args.pd), load_model(args.kws), cfg,
                         raise_on_failure=False)
    if args.transcript:
        Path(args.transcript).write_text(stats.transcript_text())
        print(f"wrote {args.transcript} ({len(stats.transcript)} lines)")
    else:
        sys.stdout.write(stats.transcript_text())
    passed = sum(1 for _, ok in stats.expectations if ok)
    print(f"expectations: {passed}/{len(stats.expectations)} passed, "
          f"{len(stats.dispatches)} dispatch(es)")
    return 0 if stats.all_passed else 1


def _bench(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = _load_config(args.config)
    person, kws = load_model(args.pd), load_model(args.kws)
    runs = [run_scenario(scenario, person, kws, cfg, raise_on_failure=False)
            for _ in range(args.runs)]
    report = bench_report(runs)
    sys.stdout.write(report.to_text())
    if args.report:
        Path(args.report).write_text(report.to_csv())
        print(f"wrote {args.report}")
        if not args.no_fig:
            from .plots import save_bench_figure, save_transcript_timeline

            fig_path = Path(args.report).with_suffix(".png")
            save_bench_figure(report, fig_path)
            timeline_path = Path(args.report).with_suffix(".timeline.png")
            save_transcript_timeline(runs[0].transcript, timeline_path)
            print(f"wrote {fig_path}")
            print(f"wrote {timeline_path}")
    failed = [desc for r in runs for desc, ok in r.expectations if not ok]
    return 0 if not failed and report.deterministic else 1


def _make_fixtures(args) -> int:
    written = write_fixtures(args.outdir, include_reference_models=not args.stubs_only)
    for path in sorted(str(p) for p in written.values()):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tinylift", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="dump the 49x43 log-mel features of a WAV")
    p.add_argument("wav")
    p.add_argument("--csv", help="write CSV here instead of stdout")
    p.add_argument("--no-fig", action="store_true", help="skip the PNG next to the CSV")
    p.set_defaults(fn=_features)

    p = sub.add_parser("infer-image", help="run a person model on a PGM image")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.set_defaults(fn=_infer_image)

    p = sub.add_parser("infer-audio", help="run a keyword model on a WAV")
    p.add_argument("wav")
    p.add_argument("--model", required=True)
    p.set_defaults(fn=_infer_audio)

    p = sub.add_parser("inspect", help="print the layer table and budget report")
    p.add_argument("model")
    p.set_defaults(fn=_inspect)

    p = sub.add_parser("run", help="replay a scenario deterministically")
    p.add_argument("scenario")
    p.add_argument("--pd", required=True, help="person-detection model (.tmlf)")
    p.add_argument("--kws", required=True, help="keyword-spotting model (.tmlf)")
    p.add_argument("--config", help="key = value overrides for the controller config")
    p.add_argument("--transcript", help="write the transcript here")
    p.set_defaults(fn=_run)

    p = sub.add_parser("bench", help="repeat a scenario and report latencies/budgets")
    p.add_argument("scenario")
    p.add_argument("--pd", required=True)
    p.add_argument("--kws", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--config")
    p.add_argument("--report", help="write CSV (and PNG figures) here")
    p.add_argument("--no-fig", action="store_true")
    p.set_defaults(fn=_bench)

    p = sub.add_parser("make-fixtures", help="write stub models, tones, and scenarios")
    p.add_argument("outdir")
    p.add_argument("--stubs-only", action="store_true",
                   help="skip the larger reference models")
    p.set_defaults(fn=_make_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TinyLiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
