"""Verification trial protocols composed from classified segments.

Trials pair an enrolment segment with a single-speaker test segment
from the same session, so negative pairs share channel conditions and
are harder than cross-session ones. Five protocol kinds exist: single,
overlap-E (enrolment overlap ratio 1-49%), overlap-H (50-100%),
speaker-change, and combined. Each specialised kind carries a
single-single backbone capped at the size of its distinctive trials,
so the distinctive half dominates no more than 50% of the protocol.

Sampling is driven by a counter-based generator keyed per
(seed, session, trial type, label): adding or renaming one session
never perturbs another session's trials.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, asdict
from typing import Iterable, Mapping, Sequence, TextIO

from .rng import KeyedRng
from .segmenter import Segment, SegmentType

__all__ = [
    "TrialType",
    "ProtocolKind",
    "Trial",
    "ProtocolConfig",
    "Protocol",
    "EmptyProtocolError",
    "ProtocolFormatError",
    "build_trials",
    "write_protocol",
    "read_protocol",
    "write_manifest",
    "read_manifest",
    "validate_protocol",
]


class TrialType(str, enum.Enum):
    SINGLE_SINGLE = "single-single"
    OVERLAP_SINGLE = "overlap-single"
    CHANGE_SINGLE = "change-single"


class ProtocolKind(str, enum.Enum):
    SINGLE = "single"
    OVERLAP_EASY = "overlap-E"
    OVERLAP_HARD = "overlap-H"
    SPEAKER_CHANGE = "speaker-change"
    COMBINED = "combined"


@dataclass(frozen=True)
class Trial:
    """An ordered (enrol, test) segment pair with a target/non-target label."""

    is_target: bool
    enrol_id: str
    test_id: str
    trial_type: TrialType
    session_id: str

    def line(self) -> str:
        bit = 1 if self.is_target else 0
        return f"{bit} {self.enrol_id} {self.test_id} {self.trial_type.value}"


@dataclass(frozen=True)
class ProtocolConfig:
    """Per-session trial caps and enrolment overlap-ratio bands."""

    max_target: int = 50
    max_nontarget: int = 50
    easy_band: tuple[float, float] = (0.01, 0.49)
    hard_band: tuple[float, float] = (0.50, 1.00)

    def __post_init__(self):
        if self.max_target < 0 or self.max_nontarget < 0:
            raise ValueError("trial caps must be >= 0")
        for band in (self.easy_band, self.hard_band):
            if not (0.0 <= band[0] <= band[1] <= 1.0):
                raise ValueError(f"bad overlap band {band}")


@dataclass(frozen=True)
class Protocol:
    kind: ProtocolKind
    trials: tuple[Trial, ...]
    seed: int
    config: ProtocolConfig


class EmptyProtocolError(ValueError):
    """No valid trials exist for the requested protocol kind."""


class ProtocolFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


_TOL = 1e-9


def _in_band(ratio: float, band: tuple[float, float]) -> bool:
    return band[0] - _TOL <= ratio <= band[1] + _TOL


def _sample(pairs: Sequence, cap: int, rng: KeyedRng) -> list:
    """Up to cap picks without replacement; a prefix of the keyed shuffle."""
    picked = list(pairs)
    n = len(picked)
    k = min(cap, n)
    for i in range(k):
        j = i + rng.randint(n - i)
        picked[i], picked[j] = picked[j], picked[i]
    return sorted(picked[:k], key=lambda p: (p[0].segment_id, p[1].segment_id))


@dataclass
class _SessionPool:
    singles: list[Segment]
    by_speaker: dict[str, list[Segment]]
    overlapped: list[Segment]
    changes: list[Segment]


def _pools(segments: Iterable[Segment]) -> dict[str, _SessionPool]:
    pools: dict[str, _SessionPool] = {}
    for seg in sorted(segments, key=lambda s: s.segment_id):
        pool = pools.setdefault(seg.session_id, _SessionPool([], {}, [], []))
        if seg.seg_type is SegmentType.SINGLE_SPEAKER:
            pool.singles.append(seg)
            pool.by_speaker.setdefault(seg.major_speaker, []).append(seg)
        elif seg.seg_type is SegmentType.OVERLAPPED:
            pool.overlapped.append(seg)
        elif seg.seg_type is SegmentType.SPEAKER_CHANGE:
            pool.changes.append(seg)
    return pools


def _single_pairs(pool: _SessionPool, target: bool) -> list[tuple[Segment, Segment]]:
    out = []
    if target:
        for _, segs in sorted(pool.by_speaker.items()):
            for enrol in segs:
                for test in segs:
                    if enrol.segment_id != test.segment_id:
                        out.append((enrol, test))
    else:
        for enrol in pool.singles:
            for test in pool.singles:
                if enrol.major_speaker != test.major_speaker:
                    out.append((enrol, test))
    return out


def _multi_pairs(
    enrols: Sequence[Segment], pool: _SessionPool, target: bool
) -> list[tuple[Segment, Segment]]:
    """Pairs of a two-speaker enrolment with a single-speaker test.

    Targets use the enrolment's major speaker; non-targets use a
    speaker outside the enrolment pair. Minor-speaker tests fit
    neither label and are never paired.
    """
    out = []
    for enrol in enrols:
        if target:
            for test in pool.by_speaker.get(enrol.major_speaker, []):
                out.append((enrol, test))
        else:
            members = set(enrol.speaker_ids)
            for test in pool.singles:
                if test.major_speaker not in members:
                    out.append((enrol, test))
    return out


def _key(pairs: list[tuple[Segment, Segment]]) -> list[tuple[Segment, Segment]]:
    return sorted(pairs, key=lambda p: (p[0].segment_id, p[1].segment_id))


def _session_trials(
    session: str, pool: _SessionPool, kind: ProtocolKind, config: ProtocolConfig, seed: int
) -> list[Trial]:
    def sample(trial_type: TrialType, target: bool, pairs, cap: int):
        label = "target" if target else "nontarget"
        rng = KeyedRng(seed, session, trial_type.value, label)
        return _sample(_key(pairs), cap, rng)

    def emit(trial_type: TrialType, target: bool, pairs) -> list[Trial]:
        return [
            Trial(target, enrol.segment_id, test.segment_id, trial_type, session)
            for enrol, test in pairs
        ]

    if kind is ProtocolKind.SINGLE:
        t = sample(TrialType.SINGLE_SINGLE, True, _single_pairs(pool, True), config.max_target)
        n = sample(TrialType.SINGLE_SINGLE, False, _single_pairs(pool, False), config.max_nontarget)
        return emit(TrialType.SINGLE_SINGLE, True, t) + emit(TrialType.SINGLE_SINGLE, False, n)

    if kind is ProtocolKind.OVERLAP_EASY:
        band = config.easy_band
        enrols = [s for s in pool.overlapped if _in_band(s.overlap_ratio, band)]
        trial_type = TrialType.OVERLAP_SINGLE
    elif kind is ProtocolKind.OVERLAP_HARD:
        band = config.hard_band
        enrols = [s for s in pool.overlapped if _in_band(s.overlap_ratio, band)]
        trial_type = TrialType.OVERLAP_SINGLE
    elif kind is ProtocolKind.SPEAKER_CHANGE:
        enrols = pool.changes
        trial_type = TrialType.CHANGE_SINGLE
    else:
        raise ValueError(f"unsupported kind {kind}")

    dist_t = sample(trial_type, True, _multi_pairs(enrols, pool, True), config.max_target)
    dist_n = sample(trial_type, False, _multi_pairs(enrols, pool, False), config.max_nontarget)
    # backbone capped at the distinctive counts so the protocol stays ~50/50
    back_t = sample(
        TrialType.SINGLE_SINGLE, True, _single_pairs(pool, True), min(config.max_target, len(dist_t))
    )
    back_n = sample(
        TrialType.SINGLE_SINGLE,
        False,
        _single_pairs(pool, False),
        min(config.max_nontarget, len(dist_n)),
    )
    return (
        emit(TrialType.SINGLE_SINGLE, True, back_t)
        + emit(TrialType.SINGLE_SINGLE, False, back_n)
        + emit(trial_type, True, dist_t)
        + emit(trial_type, False, dist_n)
    )


def build_trials(
    segments: Iterable[Segment],
    kind: ProtocolKind,
    config: ProtocolConfig = ProtocolConfig(),
    seed: int = 0,
) -> Protocol:
    """Assemble a protocol of the given kind from classified segments.

    Deterministic in (segments, kind, config, seed); sessions are
    processed in lexicographic order and sampled independently.
    Raises EmptyProtocolError when no session yields a single trial.
    """
    segments = list(segments)
    if kind is ProtocolKind.COMBINED:
        trials: list[Trial] = []
        seen: set[Trial] = set()
        for part_kind in (
            ProtocolKind.SINGLE,
            ProtocolKind.OVERLAP_EASY,
            ProtocolKind.OVERLAP_HARD,
            ProtocolKind.SPEAKER_CHANGE,
        ):
            try:
                part = build_trials(segments, part_kind, config, seed)
            except EmptyProtocolError:
                continue
            if part_kind is ProtocolKind.SINGLE:
                distinctive = part.trials
            else:
                distinctive = tuple(
                    t for t in part.trials if t.trial_type is not TrialType.SINGLE_SINGLE
                )
            for t in distinctive:
                if t not in seen:
                    seen.add(t)
                    trials.append(t)
        if not trials:
            raise EmptyProtocolError("no valid trials for kind 'combined'")
        return Protocol(kind, tuple(trials), seed, config)

    pools = _pools(segments)
    trials = []
    for session in sorted(pools):
        trials.extend(_session_trials(session, pools[session], kind, config, seed))
    if not trials:
        raise EmptyProtocolError(f"no valid trials for kind '{kind.value}'")
    return Protocol(kind, tuple(trials), seed, config)


def write_protocol(protocol: Protocol, sink: TextIO) -> None:
    """One line per trial: '<label-bit> <enrol-id> <test-id> <trial-type>'."""
    for trial in protocol.trials:
        sink.write(trial.line() + "\n")


def read_protocol(
    source: str | Iterable[str],
    kind: ProtocolKind = ProtocolKind.SINGLE,
    seed: int = 0,
    config: ProtocolConfig = ProtocolConfig(),
) -> Protocol:
    """Parse a protocol file; kind/seed/config come from its manifest.

    Duplicate trial lines are rejected, not deduplicated: a protocol
    with duplicates is malformed.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    trials: list[Trial] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ProtocolFormatError(line_no, f"expected 4 fields, got {len(fields)}")
        if fields[0] not in ("0", "1"):
            raise ProtocolFormatError(line_no, f"label bit must be 0 or 1, got {fields[0]!r}")
        try:
            trial_type = TrialType(fields[3])
        except ValueError:
            raise ProtocolFormatError(line_no, f"unknown trial type {fields[3]!r}") from None
        if line in seen:
            raise ProtocolFormatError(line_no, f"duplicate trial {line!r}")
        seen.add(line)
        try:
            session = fields[1].rsplit("#", 2)[0]
        except IndexError:
            raise ProtocolFormatError(line_no, f"bad segment id {fields[1]!r}") from None
        trials.append(Trial(fields[0] == "1", fields[1], fields[2], trial_type, session))
    return Protocol(kind, tuple(trials), seed, config)


def write_manifest(protocol: Protocol, segment_table_sha256: str, sink: TextIO) -> None:
    payload = {
        "kind": protocol.kind.value,
        "seed": protocol.seed,
        "trial_count": len(protocol.trials),
        "config": asdict(protocol.config),
        "segment_table_sha256": segment_table_sha256,
    }
    json.dump(payload, sink, indent=2, sort_keys=True)
    sink.write("\n")


def read_manifest(source: str | TextIO) -> dict:
    text = source if isinstance(source, str) else source.read()
    return json.loads(text)


def _band_for(kind: ProtocolKind, config: ProtocolConfig) -> tuple[tuple[float, float], ...]:
    if kind is ProtocolKind.OVERLAP_EASY:
        return (config.easy_band,)
    if kind is ProtocolKind.OVERLAP_HARD:
        return (config.hard_band,)
    if kind is ProtocolKind.COMBINED:
        return (config.easy_band, config.hard_band)
    return ()


def validate_protocol(protocol: Protocol, segments: Mapping[str, Segment]) -> list[str]:
    """Check every trial against the segment table; returns problem strings."""
    problems: list[str] = []
    expected_enrol = {
        TrialType.SINGLE_SINGLE: SegmentType.SINGLE_SPEAKER,
        TrialType.OVERLAP_SINGLE: SegmentType.OVERLAPPED,
        TrialType.CHANGE_SINGLE: SegmentType.SPEAKER_CHANGE,
    }
    bands = _band_for(protocol.kind, protocol.config)
    for idx, trial in enumerate(protocol.trials):
        where = f"trial {idx} ({trial.line()})"
        enrol = segments.get(trial.enrol_id)
        test = segments.get(trial.test_id)
        if enrol is None or test is None:
            problems.append(f"{where}: unknown segment id")
            continue
        if trial.enrol_id == trial.test_id:
            problems.append(f"{where}: enrol equals test")
        if not (enrol.session_id == test.session_id == trial.session_id):
            problems.append(f"{where}: segments cross sessions")
        if test.seg_type is not SegmentType.SINGLE_SPEAKER:
            problems.append(f"{where}: test segment is {test.seg_type.value}")
        if enrol.seg_type is not expected_enrol[trial.trial_type]:
            problems.append(f"{where}: enrol segment is {enrol.seg_type.value}")
        if trial.trial_type is TrialType.SINGLE_SINGLE:
            same = enrol.major_speaker == test.major_speaker
            if trial.is_target != same:
                problems.append(f"{where}: label contradicts speakers")
        else:
            if trial.is_target:
                if test.major_speaker != enrol.major_speaker:
                    problems.append(f"{where}: target test is not the major speaker")
            else:
                if test.major_speaker in enrol.speaker_ids:
                    problems.append(f"{where}: non-target test coincides with an enrol speaker")
        if trial.trial_type is TrialType.OVERLAP_SINGLE and bands:
            if not any(_in_band(enrol.overlap_ratio, b) for b in bands):
                problems.append(
                    f"{where}: enrol overlap ratio {enrol.overlap_ratio:.4f} outside bands {bands}"
                )
    return problems
