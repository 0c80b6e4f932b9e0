"""Speaker-turn timelines parsed from RTTM files, plus interval algebra
(active speech, pairwise overlap) over arbitrary half-open windows.

Times are seconds in double precision. RTTM carries centisecond-scale
values, so downstream measure comparisons use an absolute tolerance of
1e-9 s. All types are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "RttmParseError",
    "SpeakerTurn",
    "SessionAnnotation",
    "parse_rttm",
    "speaker_intervals",
    "active_speech",
    "speech_duration",
    "overlap_duration",
]


class RttmParseError(ValueError):
    """Malformed SPEAKER record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class SpeakerTurn:
    """One contiguous stretch of speech by one speaker."""

    speaker_id: str
    onset: float
    duration: float

    def __post_init__(self):
        if not math.isfinite(self.onset) or self.onset < 0:
            raise ValueError(f"turn onset must be finite and >= 0, got {self.onset}")
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise ValueError(f"turn duration must be > 0, got {self.duration}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class SessionAnnotation:
    """All speaker turns of one audio session, kept sorted by onset."""

    session_id: str
    turns: tuple[SpeakerTurn, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.turns, key=lambda t: (t.onset, t.speaker_id)))
        object.__setattr__(self, "turns", ordered)

    @property
    def session_end(self) -> float:
        return max((t.end for t in self.turns), default=0.0)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(sorted({t.speaker_id for t in self.turns}))


def parse_rttm(source: str | Iterable[str]) -> list[SessionAnnotation]:
    """Parse RTTM text into one SessionAnnotation per file id.

    Only SPEAKER records are consumed; blank lines and other record
    types are skipped for forward compatibility. The channel field is
    read but ignored: grouping is by file id alone. Sessions come back
    sorted by id.

    Raises RttmParseError naming the offending line for SPEAKER records
    with missing fields, non-numeric times, negative onsets, or
    non-positive durations. Empty input yields an empty list.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    turns: dict[str, list[SpeakerTurn]] = {}
    for line_no, raw in enumerate(lines, start=1):
        fields = raw.split()
        if not fields or fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise RttmParseError(
                line_no, f"SPEAKER record has {len(fields)} fields, expected at least 8"
            )
        session_id = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise RttmParseError(
                line_no, f"non-numeric onset/duration: {fields[3]!r} {fields[4]!r}"
            ) from None
        if not math.isfinite(onset) or onset < 0:
            raise RttmParseError(line_no, f"onset must be finite and >= 0, got {fields[3]}")
        if not math.isfinite(duration) or duration <= 0:
            raise RttmParseError(line_no, f"duration must be > 0, got {fields[4]}")
        turns.setdefault(session_id, []).append(SpeakerTurn(fields[7], onset, duration))
    return [SessionAnnotation(sid, tuple(turns[sid])) for sid in sorted(turns)]


def _check_window(t0: float, t1: float) -> None:
    if not (0 <= t0 < t1):
        raise ValueError(f"window must satisfy 0 <= t0 < t1, got [{t0}, {t1})")


def _merge(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of [start, end) intervals as a sorted disjoint list."""
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            if e > merged[-1][1]:
                merged[-1][1] = e
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def speaker_intervals(
    annotation: SessionAnnotation,
    t0: float | None = None,
    t1: float | None = None,
) -> dict[str, list[tuple[float, float]]]:
    """Per-speaker merged speech intervals, optionally clipped to [t0, t1).

    A speaker's own overlapping turns are unioned, so each returned
    list is disjoint and sorted.
    """
    raw: dict[str, list[tuple[float, float]]] = {}
    for turn in annotation.turns:
        s, e = turn.onset, turn.end
        if t0 is not None:
            s = max(s, t0)
            e = min(e, t1)
        if e > s:
            raw.setdefault(turn.speaker_id, []).append((s, e))
    return {spk: _merge(iv) for spk, iv in sorted(raw.items())}


def active_speech(annotation: SessionAnnotation, t0: float, t1: float) -> dict[str, float]:
    """Seconds each speaker is active within [t0, t1); zero-measure speakers omitted."""
    _check_window(t0, t1)
    return {
        spk: sum(e - s for s, e in iv)
        for spk, iv in speaker_intervals(annotation, t0, t1).items()
    }


def _measure_with_count(annotation, t0, t1, min_active) -> float:
    events: list[tuple[float, int]] = []
    for iv in speaker_intervals(annotation, t0, t1).values():
        for s, e in iv:
            events.append((s, 1))
            events.append((e, -1))
    events.sort()  # at equal times the -1 sorts first, so touching turns do not overlap
    total = 0.0
    active = 0
    prev = 0.0
    for t, delta in events:
        if active >= min_active:
            total += t - prev
        active += delta
        prev = t
    return total


def speech_duration(annotation: SessionAnnotation, t0: float, t1: float) -> float:
    """Measure of instants in [t0, t1) where at least one speaker is active."""
    _check_window(t0, t1)
    return _measure_with_count(annotation, t0, t1, 1)


def overlap_duration(annotation: SessionAnnotation, t0: float, t1: float) -> float:
    """Measure of instants in [t0, t1) where two or more distinct speakers are active."""
    _check_window(t0, t1)
    return _measure_with_count(annotation, t0, t1, 2)
