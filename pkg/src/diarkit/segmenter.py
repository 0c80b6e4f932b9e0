"""Sliding fixed-length windows over a session timeline, typed by content.

A window is non-speech, single-speaker, overlapped (two speakers talking
at once), or a speaker change (two speakers back to back). Windows with
three or more substantial speakers, or with a second speaker that is
present but too faint to qualify, get one of two internal types
(overlapped_multi, ambiguous) and are skipped by protocol generation.

Classification is annotation-driven only: there is no acoustic VAD here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

from .annotations import SessionAnnotation, active_speech, overlap_duration, speech_duration

__all__ = [
    "SegmentType",
    "ClassifyConfig",
    "Segment",
    "SegmentTableError",
    "resolve_segment",
    "classify_window",
    "extract_segments",
    "write_segments",
    "read_segments",
    "parse_segment_id",
]

_TOL = 1e-9


class SegmentType(str, enum.Enum):
    NON_SPEECH = "non_speech"
    SINGLE_SPEAKER = "single_speaker"
    OVERLAPPED = "overlapped"
    SPEAKER_CHANGE = "speaker_change"
    # internal: three or more qualifying speakers
    OVERLAPPED_MULTI = "overlapped_multi"
    # internal: speech present but no usable speaker configuration
    AMBIGUOUS = "ambiguous"


#: Segment types that protocol generation may consume.
PROTOCOL_TYPES = frozenset(
    {SegmentType.SINGLE_SPEAKER, SegmentType.OVERLAPPED, SegmentType.SPEAKER_CHANGE}
)


@dataclass(frozen=True)
class ClassifyConfig:
    """Thresholds (seconds) for typing a window.

    min_speech: below this much total speech the window is non-speech.
    min_presence: a speaker must be active this long to count.
    ignore_floor: secondary speakers under this are treated as absent.
    overlap_epsilon: simultaneous speech under this is annotation noise.
    min_overlap: simultaneous speech needed to call a window overlapped.
    """

    min_speech: float = 0.25
    min_presence: float = 0.30
    ignore_floor: float = 0.05
    overlap_epsilon: float = 0.01
    min_overlap: float = 0.015

    def __post_init__(self):
        for name in ("min_speech", "min_presence", "ignore_floor", "overlap_epsilon", "min_overlap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


DEFAULT_CLASSIFY = ClassifyConfig()


@dataclass(frozen=True)
class Segment:
    """One classified window of a session."""

    session_id: str
    start: float
    duration: float
    seg_type: SegmentType
    speakers: tuple[tuple[str, float], ...]
    overlap_ratio: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be > 0")
        if self.start < 0:
            raise ValueError("segment start must be >= 0")
        if not (0.0 <= self.overlap_ratio <= 1.0):
            raise ValueError(f"overlap ratio out of [0, 1]: {self.overlap_ratio}")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def major_speaker(self) -> str | None:
        return self.speakers[0][0] if self.speakers else None

    @property
    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.speakers)

    @property
    def segment_id(self) -> str:
        start_ms = round(self.start * 1000)
        end_ms = round(self.end * 1000)
        return f"{self.session_id}#{start_ms}-{end_ms}#{self.seg_type.value}"


def _at_least(value: float, threshold: float) -> bool:
    return value >= threshold - _TOL


def resolve_segment(
    actives: Mapping[str, float],
    union: float,
    overlap: float,
    duration: float,
    config: ClassifyConfig = DEFAULT_CLASSIFY,
) -> tuple[SegmentType, tuple[tuple[str, float], ...], float]:
    """Decide a window's type from its speech measures.

    This is the single decision procedure shared by the production
    classifier and by sample-level oracles: each side computes
    (actives, union, overlap) its own way and must agree from there.
    Speakers are ranked by active time (microsecond-rounded so that
    near-equal measures tie) with lexicographic ids breaking ties.
    Returns (type, qualifying speakers ranked, overlap ratio); the
    ratio is forced to zero for speaker-change windows, where
    sub-epsilon overlap is annotation noise.
    """
    ratio = min(max(overlap / duration, 0.0), 1.0)
    ranked = sorted(actives.items(), key=lambda kv: (-round(kv[1] * 1e6), kv[0]))
    qualifying = tuple((s, a) for s, a in ranked if _at_least(a, config.min_presence))
    if not _at_least(union, config.min_speech):
        return SegmentType.NON_SPEECH, (), ratio
    if not qualifying:
        return SegmentType.AMBIGUOUS, (), ratio
    if len(qualifying) == 1:
        qualified_ids = {qualifying[0][0]}
        rest = max((a for s, a in ranked if s not in qualified_ids), default=0.0)
        if not _at_least(rest, config.ignore_floor) and not _at_least(overlap, config.overlap_epsilon):
            return SegmentType.SINGLE_SPEAKER, qualifying, ratio
        return SegmentType.AMBIGUOUS, qualifying, ratio
    if len(qualifying) == 2:
        if _at_least(overlap, config.min_overlap):
            return SegmentType.OVERLAPPED, qualifying, ratio
        if not _at_least(overlap, config.overlap_epsilon):
            return SegmentType.SPEAKER_CHANGE, qualifying, 0.0
        return SegmentType.AMBIGUOUS, qualifying, ratio
    return SegmentType.OVERLAPPED_MULTI, qualifying, ratio


def classify_window(
    annotation: SessionAnnotation,
    start: float,
    duration: float = 1.5,
    config: ClassifyConfig = DEFAULT_CLASSIFY,
) -> Segment:
    """Classify the window [start, start + duration) of a session."""
    if duration <= 0:
        raise ValueError(f"window duration must be > 0, got {duration}")
    if start < 0:
        raise ValueError(f"window start must be >= 0, got {start}")
    t1 = start + duration
    actives = active_speech(annotation, start, t1)
    union = speech_duration(annotation, start, t1)
    overlap = overlap_duration(annotation, start, t1)
    seg_type, speakers, ratio = resolve_segment(actives, union, overlap, duration, config)
    return Segment(annotation.session_id, start, duration, seg_type, speakers, ratio)


def extract_segments(
    annotation: SessionAnnotation,
    window: float = 1.5,
    hop: float = 0.5,
    config: ClassifyConfig = DEFAULT_CLASSIFY,
) -> list[Segment]:
    """Classify windows at starts 0, hop, 2*hop, ... while they fit.

    Trailing audio shorter than one window is dropped: protocol
    segments must be full length.
    """
    if window <= 0 or hop <= 0:
        raise ValueError("window and hop must be > 0")
    out: list[Segment] = []
    limit = annotation.session_end - window + _TOL
    k = 0
    while k * hop <= limit:
        out.append(classify_window(annotation, k * hop, window, config))
        k += 1
    return out


class SegmentTableError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _format_line(seg: Segment) -> str:
    if seg.speakers:
        spk = ",".join(f"{s}:{a:.3f}" for s, a in seg.speakers)
    else:
        spk = "-"
    return (
        f"{seg.session_id} {seg.start:.3f} {seg.duration:.3f} "
        f"{seg.seg_type.value} {seg.overlap_ratio:.4f} {spk}"
    )


def write_segments(segments: Iterable[Segment], sink: TextIO) -> None:
    """One record per line: session, start, duration, type, overlap ratio, speakers."""
    for seg in segments:
        sink.write(_format_line(seg) + "\n")


def read_segments(source: str | Iterable[str]) -> list[Segment]:
    lines = source.splitlines() if isinstance(source, str) else source
    out: list[Segment] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 6:
            raise SegmentTableError(line_no, f"expected 6 fields, got {len(fields)}")
        try:
            start = float(fields[1])
            duration = float(fields[2])
            seg_type = SegmentType(fields[3])
            ratio = float(fields[4])
            speakers: tuple[tuple[str, float], ...] = ()
            if fields[5] != "-":
                pairs = []
                for item in fields[5].split(","):
                    spk, _, dur = item.rpartition(":")
                    if not spk:
                        raise ValueError(f"bad speaker entry {item!r}")
                    pairs.append((spk, float(dur)))
                speakers = tuple(pairs)
            out.append(Segment(fields[0], start, duration, seg_type, speakers, ratio))
        except ValueError as exc:
            raise SegmentTableError(line_no, str(exc)) from None
    return out


def parse_segment_id(segment_id: str) -> tuple[str, float, float, SegmentType]:
    """Split a segment id into (session, start, duration, type)."""
    session, times, type_str = segment_id.rsplit("#", 2)
    start_ms, _, end_ms = times.partition("-")
    start = int(start_ms) / 1000.0
    duration = (int(end_ms) - int(start_ms)) / 1000.0
    return session, start, duration, SegmentType(type_str)
