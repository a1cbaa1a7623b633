"""Deterministic scenario runner: recorded sensors, virtual clock, transcripts.

A scenario is a text file, one event per line:

    <t_ms> camera <file.pgm> [unit=<id>]
    <t_ms> audio <file.wav> [<offset_ms>] [unit=<id>]
    <t_ms> expect_dispatch <floor> <by_ms> [unit=<id>]
    <t_ms> expect_idle <at_ms> [unit=<id>]

Timestamps must be nondecreasing and referenced files must exist at load
time. Each camera line delivers one frame; audio lines lay PCM onto the
unit's microphone timeline, which is re-read in rolling one-second windows
every camera period while the unit is Listening. Inference costs are
virtual-time constants from the controller config, so identical inputs
always produce byte-identical transcripts:

    t=<ms> unit=<id> EVENT|ACTION <details>
    t=<ms> unit=<id> EXPECT <details> PASS|FAIL
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import (
    ActivateTenant,
    CameraFrame,
    ControllerConfig,
    ControllerState,
    DispatchFrame,
    EmitFrame,
    InferenceDone,
    Mode,
    RunKeywordInference,
    RunPersonInference,
    SpectrogramReady,
    Tick,
    emit_frame,
    step,
)
from .dsp import SAMPLE_RATE, AudioBuffer, build_spectrogram, quantize_features
from .engine.arena import Arena, plan_arena
from .engine.interpreter import execute_planned
from .engine.model import ARENA_CAPACITY_BYTES, FLASH_BUDGET_BYTES, ModelGraph, QuantTensor
from .errors import AssertionFailed, MissingFile, NonMonotoneTime, ParseError, TenantBusy
from .vision import GrayImage, quantize_image, read_pgm, resize_nearest
from .wav import read_wav

logger = logging.getLogger(__name__)

SAMPLES_PER_MS = SAMPLE_RATE // 1000  # 16

_EVENT_KINDS = ("camera", "audio", "expect_dispatch", "expect_idle")


@dataclass(frozen=True)
class ScenarioEvent:
    t_ms: int
    kind: str
    unit: int = 0
    path: str | None = None
    offset_ms: int = 0
    floor: int | None = None
    by_ms: int | None = None
    at_ms: int | None = None


@dataclass
class Scenario:
    events: list[ScenarioEvent]
    images: dict[str, GrayImage] = field(default_factory=dict)
    audio: dict[str, AudioBuffer] = field(default_factory=dict)

    @property
    def unit_ids(self) -> list[int]:
        return sorted({e.unit for e in self.events} | {0})


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file, preloading referenced assets."""
    path = Path(path)
    base = path.parent
    events: list[ScenarioEvent] = []
    images: dict[str, GrayImage] = {}
    audio: dict[str, AudioBuffer] = {}
    prev_t = None
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        unit = 0
        if tokens and tokens[-1].startswith("unit="):
            try:
                unit = int(tokens.pop()[5:])
            except ValueError:
                raise ParseError(line_no, f"bad unit id in {raw!r}") from None
        if len(tokens) < 2:
            raise ParseError(line_no, f"expected '<t_ms> <kind> ...', got {raw!r}")
        try:
            t_ms = int(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"bad timestamp {tokens[0]!r}") from None
        if t_ms < 0:
            raise ParseError(line_no, "timestamps must be nonnegative")
        if prev_t is not None and t_ms < prev_t:
            raise NonMonotoneTime(f"line {line_no}: t={t_ms} after t={prev_t}")
        prev_t = t_ms
        kind, args = tokens[1], tokens[2:]
        if kind not in _EVENT_KINDS:
            raise ParseError(line_no, f"unknown event kind {kind!r}")
        try:
            event = _parse_event(t_ms, kind, args, unit)
        except (ValueError, IndexError):
            raise ParseError(line_no, f"bad arguments for {kind}: {args}") from None
        if event.kind == "camera":
            file = base / event.path
            if not file.is_file():
                raise MissingFile(str(file))
            images.setdefault(event.path, resize_nearest(read_pgm(file)))
        elif event.kind == "audio":
            file = base / event.path
            if not file.is_file():
                raise MissingFile(str(file))
            audio.setdefault(event.path, read_wav(file))
        events.append(event)
    return Scenario(events, images, audio)


def _parse_event(t_ms: int, kind: str, args: list[str], unit: int) -> ScenarioEvent:
    if kind == "camera":
        return ScenarioEvent(t_ms, kind, unit, path=args[0])
    if kind == "audio":
        offset = int(args[1]) if len(args) > 1 else 0
        return ScenarioEvent(t_ms, kind, unit, path=args[0], offset_ms=offset)
    if kind == "expect_dispatch":
        return ScenarioEvent(t_ms, kind, unit, floor=int(args[0]), by_ms=int(args[1]))
    return ScenarioEvent(t_ms, kind, unit, at_ms=int(args[0]))


class VirtualClock:
    """Monotone virtual time; advances only to scheduled work."""

    def __init__(self):
        self.now_ms = 0
        self._heap: list = []
        self._counter = 0

    def schedule(self, t_ms: int, priority: int, fn) -> None:
        if t_ms < self.now_ms:
            raise ValueError(f"cannot schedule into the past ({t_ms} < {self.now_ms})")
        heapq.heappush(self._heap, (t_ms, priority, self._counter, fn))
        self._counter += 1

    def run(self) -> None:
        while self._heap:
            t_ms, _, _, fn = heapq.heappop(self._heap)
            self.now_ms = t_ms
            fn()


@dataclass
class RunStats:
    """Transcript plus the numbers the bench report aggregates."""

    transcript: list[str] = field(default_factory=list)
    dispatches: list[tuple[int, int, int, DispatchFrame]] = field(default_factory=list)
    expectations: list[tuple[str, bool]] = field(default_factory=list)
    person_latencies_ms: list[int] = field(default_factory=list)
    kws_latencies_ms: list[int] = field(default_factory=list)
    arena_peaks: dict[str, int] = field(default_factory=dict)
    flash_sizes: dict[str, int] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok in self.expectations)

    def transcript_text(self) -> str:
        return "\n".join(self.transcript) + ("\n" if self.transcript else "")


class _Unit:
    def __init__(self, unit_id: int, cfg: ControllerConfig):
        self.id = unit_id
        self.cfg = cfg
        self.arena = Arena(ARENA_CAPACITY_BYTES)
        self.state = ControllerState()
        self.seq = 0
        self.audio_clips: list[tuple[int, np.ndarray]] = []
        self.pending_activation: str | None = None
        self.inflight: str | None = None


class _Simulation:
    def __init__(self, scenario: Scenario, person_model: ModelGraph,
                 kws_model: ModelGraph, cfg: ControllerConfig):
        self.scenario = scenario
        self.cfg = cfg
        self.graphs = {"person": person_model, "kws": kws_model}
        self.clock = VirtualClock()
        self.stats = RunStats()
        self.units = {uid: _Unit(uid, cfg) for uid in scenario.unit_ids}

    # --- transcript ---

    def log(self, unit_id: int, tag: str, details: str) -> None:
        self.stats.transcript.append(f"t={self.clock.now_ms} unit={unit_id} {tag} {details}")

    # --- run ---

    def run(self) -> RunStats:
        for name, graph in self.graphs.items():
            self.stats.flash_sizes[name] = graph.flash_size
            self.stats.arena_peaks[name] = plan_arena(graph, ARENA_CAPACITY_BYTES).peak_bytes
        for unit in self.units.values():
            unit.arena.activate(self.graphs["person"])
            self.log(unit.id, "ACTION", "activate person")
        for ev in self.scenario.events:
            if ev.kind == "expect_dispatch":
                when, prio = max(ev.t_ms, ev.by_ms), 1
            elif ev.kind == "expect_idle":
                when, prio = max(ev.t_ms, ev.at_ms), 1
            else:
                when, prio = ev.t_ms, 0
            self.clock.schedule(when, prio, self._scenario_handler(ev))
        self.clock.run()
        return self.stats

    def _scenario_handler(self, ev: ScenarioEvent):
        handler = {
            "camera": self._on_camera,
            "audio": self._on_audio,
            "expect_dispatch": self._on_expect_dispatch,
            "expect_idle": self._on_expect_idle,
        }[ev.kind]
        return lambda: handler(ev)

    # --- scenario events ---

    def _on_camera(self, ev: ScenarioEvent) -> None:
        unit = self.units[ev.unit]
        image = self.scenario.images[ev.path]
        graph = self.graphs["person"]
        tensor = QuantTensor(graph.input_shape, quantize_image(image), graph.input_qparams)
        self.log(unit.id, "EVENT", f"camera file={ev.path}")
        self._step(unit, CameraFrame(tensor))

    def _on_audio(self, ev: ScenarioEvent) -> None:
        unit = self.units[ev.unit]
        buf = self.scenario.audio[ev.path]
        samples = buf.samples[ev.offset_ms * SAMPLES_PER_MS:]
        unit.audio_clips.append((ev.t_ms, samples))
        dur = len(samples) // SAMPLES_PER_MS
        self.log(unit.id, "EVENT",
                 f"audio file={ev.path} offset={ev.offset_ms} dur={dur}")

    def _on_expect_dispatch(self, ev: ScenarioEvent) -> None:
        unit = self.units[ev.unit]
        hits = [t for t, uid, floor, _ in self.stats.dispatches
                if uid == unit.id and floor == ev.floor and t <= ev.by_ms]
        passed = bool(hits)
        desc = f"dispatch floor={ev.floor} by={ev.by_ms}"
        self.stats.expectations.append((f"unit={unit.id} {desc}", passed))
        self.log(unit.id, "EXPECT", f"{desc} {'PASS' if passed else 'FAIL'}")

    def _on_expect_idle(self, ev: ScenarioEvent) -> None:
        unit = self.units[ev.unit]
        passed = unit.state.mode is Mode.IDLE
        desc = f"idle at={ev.at_ms}"
        self.stats.expectations.append((f"unit={unit.id} {desc}", passed))
        self.log(unit.id, "EXPECT", f"{desc} {'PASS' if passed else 'FAIL'}")

    # --- controller plumbing ---

    def _step(self, unit: _Unit, event) -> None:
        before = unit.state
        state, actions = step(unit.state, event, self.clock.now_ms, self.cfg)
        unit.state = state
        dispatching = any(isinstance(a, EmitFrame) for a in actions)
        if dispatching:
            self.log(unit.id, "ACTION", "mode dispatching light=blue")
        elif state.mode is not before.mode:
            self._log_mode(unit)
        for action in actions:
            self._apply(unit, action)
        if dispatching:
            self._log_mode(unit)  # re-armed to idle/red after the frame went out
        if state.mode is Mode.LISTENING and before.mode is not Mode.LISTENING:
            self._arm_listening(unit)

    def _log_mode(self, unit: _Unit) -> None:
        extra = f" deadline={unit.state.deadline_ms}" \
            if unit.state.mode is Mode.LISTENING else ""
        self.log(unit.id, "ACTION",
                 f"mode {unit.state.mode.value} light={unit.state.light.value}{extra}")

    def _apply(self, unit: _Unit, action) -> None:
        if isinstance(action, RunPersonInference):
            self._begin_inference(unit, "person", action.image, self.cfg.pd_latency_ms)
        elif isinstance(action, RunKeywordInference):
            self._begin_inference(unit, "kws", action.features, self.cfg.kws_latency_ms)
        elif isinstance(action, ActivateTenant):
            self._activate(unit, action.model)
        elif isinstance(action, EmitFrame):
            frame = emit_frame(action.floor, unit.id, unit.seq, self.clock.now_ms,
                               self.cfg.floors)
            unit.seq += 1
            self.stats.dispatches.append((self.clock.now_ms, unit.id, action.floor, frame))
            self.log(unit.id, "ACTION", f"dispatch floor={action.floor} seq={frame.seq}")
            self.log(unit.id, "ACTION", f"can id=0x{frame.can_id:03X} data={frame.hex_dump()}")

    def _activate(self, unit: _Unit, model: str) -> None:
        try:
            unit.arena.activate(self.graphs[model])
            unit.pending_activation = None
            self.log(unit.id, "ACTION", f"activate {model}")
        except TenantBusy:
            unit.pending_activation = model
            self.log(unit.id, "ACTION", f"defer-activate {model} reason=busy")

    def _begin_inference(self, unit: _Unit, model: str, tensor, latency_ms: int) -> None:
        graph = self.graphs[model]
        try:
            unit.arena.begin_inference(graph)
        except TenantBusy:
            self.log(unit.id, "ACTION", f"drop-infer {model} reason=busy")
            return
        unit.inflight = model
        self.log(unit.id, "ACTION", f"infer {model}")
        scores = execute_planned(graph, unit.arena, tensor)
        values = tuple(int(v) for v in scores.data.reshape(-1))
        (self.stats.person_latencies_ms if model == "person"
         else self.stats.kws_latencies_ms).append(latency_ms)
        done_at = self.clock.now_ms + latency_ms
        self.clock.schedule(done_at, 0, lambda: self._complete(unit, model, values))

    def _complete(self, unit: _Unit, model: str, values: tuple[int, ...]) -> None:
        unit.arena.end_inference()
        unit.inflight = None
        if unit.pending_activation is not None:
            self._activate(unit, unit.pending_activation)
        self.log(unit.id, "EVENT",
                 f"scores model={model} values=[{','.join(str(v) for v in values)}]")
        self._step(unit, InferenceDone(model, values))

    # --- listening machinery ---

    def _arm_listening(self, unit: _Unit) -> None:
        deadline = unit.state.deadline_ms
        self.clock.schedule(deadline, 0, lambda: self._deadline_tick(unit, deadline))
        self.clock.schedule(self.clock.now_ms + self.cfg.camera_period_ms, 0,
                            lambda: self._audio_eval(unit, deadline))

    def _deadline_tick(self, unit: _Unit, deadline: int) -> None:
        if unit.state.mode is Mode.LISTENING and unit.state.deadline_ms == deadline:
            self.log(unit.id, "EVENT", "tick deadline")
            self._step(unit, Tick())

    def _audio_eval(self, unit: _Unit, deadline: int) -> None:
        if unit.state.mode is not Mode.LISTENING or unit.state.deadline_ms != deadline:
            return  # this listening window is over; chain dies
        window = self._window_samples(unit, self.clock.now_ms)
        spec = build_spectrogram(AudioBuffer(window))
        graph = self.graphs["kws"]
        q = quantize_features(spec, graph.input_qparams.scale, graph.input_qparams.zero_point)
        tensor = QuantTensor(graph.input_shape, q, graph.input_qparams)
        self.log(unit.id, "EVENT",
                 f"spectrogram window=[{self.clock.now_ms - self.cfg.audio_window_ms},"
                 f"{self.clock.now_ms})")
        self._step(unit, SpectrogramReady(tensor))
        if unit.state.mode is Mode.LISTENING:
            self.clock.schedule(self.clock.now_ms + self.cfg.camera_period_ms, 0,
                                lambda: self._audio_eval(unit, deadline))

    def _window_samples(self, unit: _Unit, t_ms: int) -> np.ndarray:
        n = self.cfg.audio_window_ms * SAMPLES_PER_MS
        end = t_ms * SAMPLES_PER_MS
        start = end - n
        out = np.zeros(n, dtype=np.int16)
        for clip_start_ms, samples in unit.audio_clips:
            cs = clip_start_ms * SAMPLES_PER_MS
            lo, hi = max(start, cs), min(end, cs + len(samples))
            if lo < hi:
                out[lo - start:hi - start] = samples[lo - cs:hi - cs]
        return out


def run_scenario(scenario: Scenario, person_model: ModelGraph, kws_model: ModelGraph,
                 cfg: ControllerConfig | None = None,
                 raise_on_failure: bool = True) -> RunStats:
    """Replay a scenario; fails on any violated expectation."""
    cfg = cfg or ControllerConfig()
    stats = _Simulation(scenario, person_model, kws_model, cfg).run()
    if raise_on_failure:
        for desc, ok in stats.expectations:
            if not ok:
                raise AssertionFailed(desc, "violated")
    return stats


# --- benchmark report ---

@dataclass
class BenchReport:
    rows: list[tuple[str, float, float, float]]          # metric, mean, min, max
    checks: list[tuple[str, int, int, bool]]             # name, value, budget, ok
    deterministic: bool
    runs: int

    def to_text(self) -> str:
        lines = [f"runs: {self.runs}",
                 f"deterministic transcripts: {'yes' if self.deterministic else 'NO'}",
                 "", f"{'metric':<28}{'mean':>12}{'min':>12}{'max':>12}"]
        for name, mean, lo, hi in self.rows:
            lines.append(f"{name:<28}{mean:>12.3f}{lo:>12.3f}{hi:>12.3f}")
        lines.append("")
        for name, value, budget, ok in self.checks:
            lines.append(f"{name} = {value} <= {budget}: {'PASS' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["metric,mean,min,max"]
        for name, mean, lo, hi in self.rows:
            lines.append(f"{name},{mean:.9g},{lo:.9g},{hi:.9g}")
        for name, value, budget, ok in self.checks:
            lines.append(f"{name},{value},{budget},{'PASS' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    @property
    def all_budgets_pass(self) -> bool:
        return all(ok for *_, ok in self.checks)


def _agg(name: str, values: list[float]) -> tuple[str, float, float, float]:
    if not values:
        return (name, 0.0, 0.0, 0.0)
    return (name, sum(values) / len(values), min(values), max(values))


def bench_report(runs: list[RunStats]) -> BenchReport:
    """Aggregate virtual latencies and budget checks over completed runs."""
    if not runs:
        raise ValueError("need at least one completed run")
    person = [v for r in runs for v in r.person_latencies_ms]
    kws = [v for r in runs for v in r.kws_latencies_ms]
    dispatch_times = [t for r in runs for (t, *_rest) in
                      [(d[0], d[1]) for d in r.dispatches]]
    rows = [_agg("person_inference_ms", person),
            _agg("kws_inference_ms", kws),
            _agg("dispatch_time_ms", dispatch_times),
            _agg("dispatches_per_run", [float(len(r.dispatches)) for r in runs])]
    checks = []
    first = runs[0]
    for name in sorted(first.flash_sizes):
        checks.append((f"flash_{name}_bytes", first.flash_sizes[name],
                       FLASH_BUDGET_BYTES, first.flash_sizes[name] <= FLASH_BUDGET_BYTES))
    for name in sorted(first.arena_peaks):
        checks.append((f"arena_peak_{name}_bytes", first.arena_peaks[name],
                       ARENA_CAPACITY_BYTES, first.arena_peaks[name] <= ARENA_CAPACITY_BYTES))
    deterministic = all(r.transcript == first.transcript for r in runs)
    return BenchReport(rows, checks, deterministic, len(runs))
