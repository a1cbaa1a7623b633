"""Floor-unit state machine: detect a person, listen for a floor, dispatch.

The unit rests in Idle (red light) scoring camera frames. A positive person
decision opens a 5-second Listening window (green light) during which
keyword scores are evaluated; a confident floor keyword emits one dispatch
frame (blue light flashes through Dispatching) and the unit re-arms to Idle
immediately. Scores are int8 in -127..+127 and compared against percentage
thresholds.

``step`` is a pure function: event in, (new state, actions) out. Illegal
events are logged and dropped, never fatal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InvalidFloor

logger = logging.getLogger(__name__)

KEYWORD_CLASSES = ("one", "two", "three", "four", "unknown", "silence")
PERSON_CLASSES = ("no_person", "person")
PERSON_INDEX = 1

CAN_BASE_ID = 0x2E0
PROTOCOL_VERSION = 1


class Mode(Enum):
    IDLE = "idle"
    LISTENING = "listening"
    DISPATCHING = "dispatching"


class Light(Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"


_LIGHT_FOR_MODE = {Mode.IDLE: Light.RED, Mode.LISTENING: Light.GREEN,
                   Mode.DISPATCHING: Light.BLUE}


@dataclass(frozen=True)
class ControllerConfig:
    detect_threshold_pct: int = 59
    kws_threshold_pct: int = 59
    listen_timeout_ms: int = 5000
    camera_period_ms: int = 200      # 5 fps
    pd_latency_ms: int = 740
    kws_latency_ms: int = 30
    audio_window_ms: int = 1000
    floors: tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        if not 0 <= self.detect_threshold_pct <= 100:
            raise ValueError("detect_threshold_pct must be in 0..100")
        if not 0 <= self.kws_threshold_pct <= 100:
            raise ValueError("kws_threshold_pct must be in 0..100")
        for name in ("listen_timeout_ms", "camera_period_ms", "pd_latency_ms",
                     "kws_latency_ms", "audio_window_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.IDLE
    deadline_ms: int | None = None       # set while Listening
    last_scores: tuple[int, ...] | None = None

    @property
    def light(self) -> Light:
        return _LIGHT_FOR_MODE[self.mode]


# --- events ---

@dataclass(frozen=True)
class CameraFrame:
    image: object  # quantized (1, 96, 96, 1) tensor


@dataclass(frozen=True)
class SpectrogramReady:
    features: object  # quantized (1, 49, 43, 1) tensor


@dataclass(frozen=True)
class InferenceDone:
    model: str  # "person" | "kws"
    scores: tuple[int, ...]


@dataclass(frozen=True)
class Tick:
    pass


# --- actions ---

@dataclass(frozen=True)
class RunPersonInference:
    image: object


@dataclass(frozen=True)
class RunKeywordInference:
    features: object


@dataclass(frozen=True)
class ActivateTenant:
    model: str  # "person" | "kws"


@dataclass(frozen=True)
class EmitFrame:
    floor: int


Action = RunPersonInference | RunKeywordInference | ActivateTenant | EmitFrame


def score_to_percent(score: int) -> int:
    """Map the -127..+127 score range onto integer percent 0..100.

    -128 clamps to -127. Integer floor keeps 22 -> 58% and 23 -> 59%, the
    documented decision boundary at the 59% threshold.
    """
    s = max(-127, min(127, int(score)))
    return (s + 127) * 100 // 254


def decide_person(person_score: int, cfg: ControllerConfig) -> bool:
    return score_to_percent(person_score) >= cfg.detect_threshold_pct


def decide_keyword(scores, cfg: ControllerConfig) -> int | None:
    """Winning floor (1..4) if a floor class dominates confidently, else None.

    Argmax ties break toward the lowest class index.
    """
    values = [int(v) for v in scores]
    if len(values) != len(KEYWORD_CLASSES):
        raise ValueError(f"expected {len(KEYWORD_CLASSES)} scores, got {len(values)}")
    winner = int(np.argmax(values))
    if winner >= 4:  # unknown / silence
        return None
    if score_to_percent(values[winner]) < cfg.kws_threshold_pct:
        return None
    return winner + 1


def step(state: ControllerState, event, now_ms: int,
         cfg: ControllerConfig) -> tuple[ControllerState, list[Action]]:
    """Advance the unit's state machine by one event."""
    if isinstance(event, CameraFrame):
        if state.mode is Mode.IDLE:
            return state, [RunPersonInference(event.image)]
        return _drop(state, event, now_ms)

    if isinstance(event, SpectrogramReady):
        if state.mode is Mode.LISTENING:
            return state, [RunKeywordInference(event.features)]
        return _drop(state, event, now_ms)

    if isinstance(event, InferenceDone):
        scores = tuple(int(v) for v in event.scores)
        if state.mode is Mode.IDLE and event.model == "person":
            if decide_person(scores[PERSON_INDEX], cfg):
                listening = ControllerState(mode=Mode.LISTENING,
                                            deadline_ms=now_ms + cfg.listen_timeout_ms,
                                            last_scores=scores)
                return listening, [ActivateTenant("kws")]
            return replace(state, last_scores=scores), []
        if state.mode is Mode.LISTENING and event.model == "kws":
            floor = decide_keyword(scores, cfg)
            if floor is None:
                return replace(state, last_scores=scores), []
            # passes through Dispatching (blue) and re-arms immediately
            return (ControllerState(mode=Mode.IDLE, last_scores=scores),
                    [EmitFrame(floor), ActivateTenant("person")])
        return _drop(state, event, now_ms)

    if isinstance(event, Tick):
        if state.mode is Mode.LISTENING and now_ms >= state.deadline_ms:
            return ControllerState(mode=Mode.IDLE, last_scores=state.last_scores), \
                [ActivateTenant("person")]
        return state, []

    return _drop(state, event, now_ms)


def _drop(state: ControllerState, event, now_ms: int) -> tuple[ControllerState, list[Action]]:
    logger.warning("illegal event dropped at t=%d in %s: %r", now_ms, state.mode.value, event)
    return state, []


# --- dispatch frames ---

def crc8(data: bytes, poly: int = 0x07, init: int = 0x00) -> int:
    """CRC-8, MSB first, no reflection, xorout 0."""
    crc = init
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


@dataclass(frozen=True)
class DispatchFrame:
    """8-byte CAN-style frame carrying the requested floor.

    payload = [protocol_ver, unit_id, floor, seq, ts_ms (low 24 bits,
    big-endian), crc8(poly 0x07, init 0) over bytes 0..6]
    """

    can_id: int
    payload: bytes

    def __post_init__(self):
        if len(self.payload) != 8:
            raise ValueError("payload must be 8 bytes")
        if not 0 <= self.can_id <= 0x7FF:
            raise ValueError("can_id must fit 11 bits")

    @property
    def floor(self) -> int:
        return self.payload[2]

    @property
    def seq(self) -> int:
        return self.payload[3]

    def hex_dump(self) -> str:
        return self.payload.hex()


def emit_frame(floor: int, unit_id: int, seq: int, now_ms: int,
               floors: tuple[int, ...] = (1, 2, 3, 4)) -> DispatchFrame:
    """Encode one dispatch frame; the caller owns the per-unit seq counter."""
    if floor not in floors:
        raise InvalidFloor(f"floor {floor} not in {floors}")
    ts = int(now_ms) & 0xFFFFFF
    body = bytes([PROTOCOL_VERSION, unit_id & 0xFF, floor, seq & 0xFF,
                  (ts >> 16) & 0xFF, (ts >> 8) & 0xFF, ts & 0xFF])
    return DispatchFrame(can_id=CAN_BASE_ID + unit_id, payload=body + bytes([crc8(body)]))
