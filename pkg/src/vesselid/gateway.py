"""Detection sources: annotation-file replay and the NDJSON detector wire.

The neural detector itself runs out of process; this module parses its
output (or replays labeled sequences) into FrameDetections and applies the
area-based filter before identification.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from .errors import MalformedLine, OutOfRange, ProtocolError
from .wire import canonical_dumps

RANGE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Detection:
    """One detector output: class, normalized center-size box, confidence."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError(f"non-positive box size {self.w}x{self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        # Clamp box extents into the frame, keeping the center-size form.
        x0 = max(0.0, self.cx - self.w / 2.0)
        x1 = min(1.0, self.cx + self.w / 2.0)
        y0 = max(0.0, self.cy - self.h / 2.0)
        y1 = min(1.0, self.cy + self.h / 2.0)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"box ({self.cx}, {self.cy}, {self.w}, {self.h}) outside frame")
        object.__setattr__(self, "cx", (x0 + x1) / 2.0)
        object.__setattr__(self, "cy", (y0 + y1) / 2.0)
        object.__setattr__(self, "w", x1 - x0)
        object.__setattr__(self, "h", y1 - y0)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class FrameDetections:
    frame_id: int
    timestamp: float
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


@dataclass(frozen=True)
class AreaFilterConfig:
    alpha_min: float = 5e-5
    alpha_max: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.alpha_min < self.alpha_max <= 1.0:
            raise ValueError(
                f"need 0 <= alpha_min < alpha_max <= 1, got [{self.alpha_min}, {self.alpha_max}]"
            )


def _parse_normalized(token: str, line: str) -> float:
    try:
        value = float(token)
    except ValueError as exc:
        raise MalformedLine(f"non-numeric field {token!r} in {line!r}") from exc
    if value < -RANGE_TOLERANCE or value > 1.0 + RANGE_TOLERANCE:
        raise OutOfRange(f"value {value} outside [0, 1] in {line!r}")
    return min(1.0, max(0.0, value))


def parse_annotation_line(text: str) -> Detection:
    """Parse one 'class cx cy w h [score]' annotation line."""
    fields = text.split()
    if len(fields) not in (5, 6):
        raise MalformedLine(f"expected 5 or 6 fields, got {len(fields)} in {text!r}")
    try:
        class_id = int(fields[0])
    except ValueError as exc:
        raise MalformedLine(f"non-integer class {fields[0]!r} in {text!r}") from exc
    cx = _parse_normalized(fields[1], text)
    cy = _parse_normalized(fields[2], text)
    w = _parse_normalized(fields[3], text)
    h = _parse_normalized(fields[4], text)
    score = _parse_normalized(fields[5], text) if len(fields) == 6 else 1.0
    try:
        return Detection(class_id, cx, cy, w, h, score)
    except ValueError as exc:
        raise OutOfRange(str(exc)) from exc


def format_annotation_line(det: Detection, with_score: bool = False) -> str:
    base = f"{det.class_id} {det.cx:.6f} {det.cy:.6f} {det.w:.6f} {det.h:.6f}"
    return f"{base} {det.score:.6f}" if with_score else base


def ingest_wire_message(line: str) -> FrameDetections:
    """Parse one NDJSON detection message; unknown keys are ignored."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc.msg}", byte_offset=exc.pos) from exc
    if not isinstance(obj, dict):
        raise ProtocolError("message is not a JSON object")
    try:
        frame_id = int(obj["frame_id"])
        timestamp = float(obj["timestamp"])
        raw = obj["detections"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"missing or invalid field: {exc}") from exc
    dets = []
    for entry in raw:
        try:
            dets.append(
                Detection(
                    class_id=int(entry["class_id"]),
                    cx=float(entry["cx"]),
                    cy=float(entry["cy"]),
                    w=float(entry["w"]),
                    h=float(entry["h"]),
                    score=float(entry.get("score", 1.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad detection entry: {exc}") from exc
    return FrameDetections(frame_id=frame_id, timestamp=timestamp, detections=dets)


def serialize_wire_message(frame: FrameDetections) -> str:
    """Canonical NDJSON line for one frame (sorted keys, 6-decimal floats)."""
    return canonical_dumps(
        {
            "frame_id": frame.frame_id,
            "timestamp": float(frame.timestamp),
            "detections": [
                {
                    "class_id": d.class_id,
                    "cx": d.cx,
                    "cy": d.cy,
                    "w": d.w,
                    "h": d.h,
                    "score": d.score,
                }
                for d in frame.detections
            ],
        }
    )


def area_filter(dets: Sequence[Detection], cfg: AreaFilterConfig) -> List[Detection]:
    """Keep detections whose normalized area lies within [alpha_min, alpha_max]."""
    return [d for d in dets if cfg.alpha_min <= d.area <= cfg.alpha_max]


def filter_classes(dets: Sequence[Detection], allow: Optional[Sequence[int]]) -> List[Detection]:
    """Class allow-list; None passes every class."""
    if allow is None:
        return list(dets)
    allowed = set(allow)
    return [d for d in dets if d.class_id in allowed]


class AnnotationReplaySource:
    """Replays a dataset directory (images/NNNNNN.png + labels/NNNNNN.txt).

    Yields FrameDetections in strictly increasing frame_id order; '#' lines
    in the sidecars are ignored. Timestamps are frame_id / fps.
    """

    def __init__(self, dataset_dir, fps: float = 10.0):
        self.root = Path(dataset_dir)
        self.fps = fps
        images = sorted((self.root / "images").glob("*.png"))
        if not images:
            raise FileNotFoundError(f"no images under {self.root / 'images'}")
        self.frames = [(int(p.stem), p) for p in images]
        self.frames.sort()

    def image_path(self, frame_id: int) -> Path:
        return self.root / "images" / f"{frame_id:06d}.png"

    def __iter__(self) -> Iterator[FrameDetections]:
        for frame_id, image_path in self.frames:
            label_path = self.root / "labels" / f"{image_path.stem}.txt"
            dets: List[Detection] = []
            if label_path.exists():
                for raw in label_path.read_text().splitlines():
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    dets.append(parse_annotation_line(line))
            yield FrameDetections(
                frame_id=frame_id, timestamp=frame_id / self.fps, detections=dets
            )


def iter_wire_stream(lines: Iterable[str]) -> Iterator[FrameDetections]:
    """Parse an NDJSON stream, skipping blank lines."""
    for line in lines:
        stripped = line.strip()
        if stripped:
            yield ingest_wire_message(stripped)


def _tolerant_wire_stream(lines: Iterable[str]) -> Iterator[FrameDetections]:
    """Like iter_wire_stream, but malformed lines are logged and skipped."""
    import logging

    log = logging.getLogger(__name__)
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        try:
            yield ingest_wire_message(stripped)
        except ProtocolError as exc:
            log.warning("skipping malformed detection line: %s", exc)


def open_wire_source(
    spec: str,
    max_connect_failures: int = 5,
    initial_backoff: float = 0.5,
    max_backoff: float = 10.0,
) -> Iterator[FrameDetections]:
    """Detection stream from a file path, '-' (stdin) or tcp://host:port.

    TCP sources reconnect with exponential backoff whenever the connection
    drops; after ``max_connect_failures`` consecutive failed connects the
    stream ends gracefully instead of raising. Malformed lines never kill
    the stream.
    """
    import logging
    import sys

    log = logging.getLogger(__name__)

    if spec == "-":
        return _tolerant_wire_stream(sys.stdin)
    if spec.startswith("tcp://"):
        import socket
        import time

        host, _, port = spec[len("tcp://"):].rpartition(":")

        def reconnecting() -> Iterator[FrameDetections]:
            backoff = initial_backoff
            failures = 0
            while True:
                try:
                    conn = socket.create_connection((host, int(port)), timeout=10.0)
                except OSError as exc:
                    failures += 1
                    if failures >= max_connect_failures:
                        log.error("detector unreachable after %d attempts; ending stream", failures)
                        return
                    log.warning("detector connect failed (%s); retrying in %.1fs", exc, backoff)
                    time.sleep(backoff)
                    backoff = min(backoff * 2.0, max_backoff)
                    continue
                failures = 0
                backoff = initial_backoff
                with conn:
                    reader = conn.makefile("r", encoding="utf-8")
                    try:
                        yield from _tolerant_wire_stream(reader)
                    except OSError as exc:
                        log.warning("detector stream dropped mid-read: %s", exc)
                log.warning("detector disconnected; reconnecting in %.1fs", backoff)
                time.sleep(backoff)
                backoff = min(backoff * 2.0, max_backoff)

        return reconnecting()
    return _tolerant_wire_stream(open(spec, "r", encoding="utf-8"))


class FramePump:
    """Runs a detection source on its own thread behind a bounded queue."""

    _SENTINEL = object()

    def __init__(self, source: Iterable[FrameDetections], capacity: int = 8):
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self._thread = threading.Thread(target=self._run, args=(source,), daemon=True)
        self._error: Optional[BaseException] = None

    def _run(self, source):
        try:
            for frame in source:
                self._queue.put(frame)
        except BaseException as exc:  # surfaced to the consumer
            self._error = exc
        finally:
            self._queue.put(self._SENTINEL)

    def start(self) -> "FramePump":
        self._thread.start()
        return self

    def __iter__(self) -> Iterator[FrameDetections]:
        while True:
            item = self._queue.get()
            if item is self._SENTINEL:
                if self._error is not None:
                    raise self._error
                return
            yield item
