"""Scoring: cosine trial scores, EER, DER, JER, Pearson correlation.

DER follows the usual rich-transcription semantics: an optimal
one-to-one speaker mapping (maximum cumulative overlap), an optional
no-score collar around reference turn boundaries, overlap regions
scored unless disabled, and

    DER = (missed + false alarm + confusion speech time) / reference speech time.

JER averages, over reference speakers, one minus the temporal Jaccard
similarity with the optimally mapped hypothesis speaker; unmapped
speakers score 1. Hypotheses are plain SessionAnnotation timelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import SessionAnnotation, speaker_intervals
from .protocols import Trial

__all__ = [
    "ScoredTrial",
    "DerResult",
    "DiarisationHypothesis",
    "cosine_score",
    "compute_eer",
    "eer_from_scores",
    "optimal_speaker_mapping",
    "compute_der",
    "compute_der_corpus",
    "compute_jer",
    "jer_per_speaker",
    "compute_jer_corpus",
    "pearson_r",
    "write_scores",
    "read_scores",
    "write_embeddings",
    "read_embeddings",
    "score_trials",
    "SystemEval",
    "correlation_report",
]

# a hypothesis timeline has exactly the shape of a reference timeline
DiarisationHypothesis = SessionAnnotation


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"trial score must be finite, got {self.score}")


def cosine_score(e1: Sequence[float], e2: Sequence[float]) -> float:
    """Inner product over the product of Euclidean norms, in [-1, 1]."""
    a = np.asarray(e1, dtype=np.float64)
    b = np.asarray(e2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"embeddings must be 1-D and equal-sized, got {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine score undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def eer_from_scores(
    target_scores: Sequence[float], nontarget_scores: Sequence[float]
) -> tuple[float, float]:
    """Equal error rate and its threshold from raw score arrays.

    Operating points are taken at midpoints between consecutive
    distinct scores (accept when score >= threshold). Where the
    empirical curve has no exact FAR == FRR point, the crossing is
    found by linear interpolation between the two adjacent operating
    points.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise ValueError("EER needs at least one target and one non-target score")
    distinct = np.unique(np.concatenate([tar, non]))
    thresholds = np.concatenate(
        [[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]]
    )
    far = 1.0 - np.searchsorted(non, thresholds, side="left") / non.size
    frr = np.searchsorted(tar, thresholds, side="left") / tar.size
    diff = far - frr  # starts at +1, ends at -1
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0:
        return float(far[idx]), float(thresholds[idx])
    lam = diff[idx - 1] / (diff[idx - 1] - diff[idx])
    eer = far[idx - 1] + lam * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + lam * (thresholds[idx] - thresholds[idx - 1])
    return float(eer), float(threshold)


def compute_eer(scored: Sequence[ScoredTrial]) -> tuple[float, float]:
    """EER over a scored trial list; errors on single-class input."""
    targets = [s.score for s in scored if s.trial.is_target]
    nontargets = [s.score for s in scored if not s.trial.is_target]
    return eer_from_scores(targets, nontargets)


def _interval_overlap(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> float:
    total = 0.0
    j = 0
    for s, e in a:
        while j < len(b) and b[j][1] <= s:
            j += 1
        k = j
        while k < len(b) and b[k][0] < e:
            total += min(e, b[k][1]) - max(s, b[k][0])
            k += 1
    return total


def _overlap_matrix(ref: SessionAnnotation, hyp: SessionAnnotation):
    ref_iv = speaker_intervals(ref)
    hyp_iv = speaker_intervals(hyp)
    ref_ids = sorted(ref_iv)
    hyp_ids = sorted(hyp_iv)
    # microsecond integers keep the assignment exact and platform-stable
    matrix = np.zeros((len(ref_ids), len(hyp_ids)), dtype=np.int64)
    for i, r in enumerate(ref_ids):
        for j, h in enumerate(hyp_ids):
            matrix[i, j] = round(_interval_overlap(ref_iv[r], hyp_iv[h]) * 1e6)
    return ref_ids, hyp_ids, matrix


def _max_assignment_total(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    rows, cols = linear_sum_assignment(-matrix)
    return int(matrix[rows, cols].sum())


def optimal_speaker_mapping(ref: SessionAnnotation, hyp: SessionAnnotation) -> dict[str, str]:
    """Maximum-overlap one-to-one speaker mapping.

    Among equally optimal assignments the lexicographically earliest
    choice wins: reference speakers are visited in id order and each
    takes the smallest hypothesis id that still allows an optimal
    completion.
    """
    ref_ids, hyp_ids, matrix = _overlap_matrix(ref, hyp)
    if not ref_ids or not hyp_ids:
        return {}
    best = _max_assignment_total(matrix)
    mapping: dict[str, str] = {}
    taken: list[int] = []
    fixed = 0
    for i in range(len(ref_ids)):
        rest_rows = np.arange(i + 1, len(ref_ids))
        chosen = None
        for j in range(len(hyp_ids)):
            if j in taken:
                continue
            rest_cols = np.array([c for c in range(len(hyp_ids)) if c not in taken and c != j], dtype=int)
            achievable = fixed + int(matrix[i, j]) + _max_assignment_total(
                matrix[np.ix_(rest_rows, rest_cols)]
            )
            if achievable == best:
                chosen = j
                break
        if chosen is None:
            # leaving this reference speaker unmapped must still reach the optimum
            rest_cols = np.array([c for c in range(len(hyp_ids)) if c not in taken], dtype=int)
            assert fixed + _max_assignment_total(matrix[np.ix_(rest_rows, rest_cols)]) == best
            continue
        mapping[ref_ids[i]] = hyp_ids[chosen]
        taken.append(chosen)
        fixed += int(matrix[i, chosen])
    return mapping


@dataclass(frozen=True)
class DerResult:
    """Error times in seconds; fraction properties divide by scored reference time."""

    missed_seconds: float
    false_alarm_seconds: float
    confusion_seconds: float
    ref_seconds: float

    @property
    def der(self) -> float:
        return (self.missed_seconds + self.false_alarm_seconds + self.confusion_seconds) / self.ref_seconds

    @property
    def missed(self) -> float:
        return self.missed_seconds / self.ref_seconds

    @property
    def false_alarm(self) -> float:
        return self.false_alarm_seconds / self.ref_seconds

    @property
    def confusion(self) -> float:
        return self.confusion_seconds / self.ref_seconds


def _merge_plain(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            if e > merged[-1][1]:
                merged[-1][1] = e
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def _active_at(intervals: list[tuple[float, float]], t: float) -> bool:
    for s, e in intervals:
        if s <= t < e:
            return True
        if s > t:
            break
    return False


def _der_seconds(
    ref: SessionAnnotation,
    hyp: SessionAnnotation,
    collar: float,
    score_overlap: bool,
    mapping: dict[str, str],
) -> DerResult:
    ref_iv = speaker_intervals(ref)
    hyp_iv = speaker_intervals(hyp)
    collar_iv = _merge_plain(
        [(t.onset - collar, t.onset + collar) for t in ref.turns]
        + [(t.end - collar, t.end + collar) for t in ref.turns]
    ) if collar > 0 else []

    times = {0.0}
    for iv in list(ref_iv.values()) + list(hyp_iv.values()) + [collar_iv]:
        for s, e in iv:
            times.add(max(s, 0.0))
            times.add(max(e, 0.0))
    cuts = sorted(times)

    missed = fa = conf = ref_time = 0.0
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        if t1 <= t0:
            continue
        mid = (t0 + t1) / 2.0
        if _active_at(collar_iv, mid):
            continue
        ref_active = [spk for spk, iv in ref_iv.items() if _active_at(iv, mid)]
        if not score_overlap and len(ref_active) >= 2:
            continue
        hyp_active = {spk for spk, iv in hyp_iv.items() if _active_at(iv, mid)}
        n_ref, n_hyp = len(ref_active), len(hyp_active)
        n_correct = sum(1 for spk in ref_active if mapping.get(spk) in hyp_active)
        span = t1 - t0
        ref_time += n_ref * span
        missed += max(0, n_ref - n_hyp) * span
        fa += max(0, n_hyp - n_ref) * span
        conf += (min(n_ref, n_hyp) - n_correct) * span
    return DerResult(missed, fa, conf, ref_time)


def compute_der(
    ref: SessionAnnotation,
    hyp: DiarisationHypothesis,
    collar: float = 0.25,
    score_overlap: bool = True,
) -> DerResult:
    """Diarisation error rate of one session.

    The speaker mapping maximises cumulative overlap over the full
    timeline; scoring then excludes +/-collar around every reference
    turn boundary and, when score_overlap is off, regions where the
    reference has two or more active speakers.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    if not ref.turns:
        raise ValueError("reference has no speech; DER undefined")
    mapping = optimal_speaker_mapping(ref, hyp)
    result = _der_seconds(ref, hyp, collar, score_overlap, mapping)
    if result.ref_seconds <= 0:
        raise ValueError("no scored reference speech (collar removed everything)")
    return result


def compute_der_corpus(
    pairs: Iterable[tuple[SessionAnnotation, DiarisationHypothesis]],
    collar: float = 0.25,
    score_overlap: bool = True,
) -> DerResult:
    """Corpus DER: error and reference times summed before dividing."""
    missed = fa = conf = ref_time = 0.0
    for ref, hyp in pairs:
        r = compute_der(ref, hyp, collar, score_overlap)
        missed += r.missed_seconds
        fa += r.false_alarm_seconds
        conf += r.confusion_seconds
        ref_time += r.ref_seconds
    if ref_time <= 0:
        raise ValueError("no scored reference speech in corpus")
    return DerResult(missed, fa, conf, ref_time)


def jer_per_speaker(ref: SessionAnnotation, hyp: DiarisationHypothesis) -> dict[str, float]:
    """Per reference speaker: 1 - |ref & hyp| / |ref | hyp| under the optimal mapping."""
    if not ref.turns:
        raise ValueError("reference has no speech; JER undefined")
    mapping = optimal_speaker_mapping(ref, hyp)
    ref_iv = speaker_intervals(ref)
    hyp_iv = speaker_intervals(hyp)
    out: dict[str, float] = {}
    for spk, iv in ref_iv.items():
        mapped = mapping.get(spk)
        if mapped is None:
            out[spk] = 1.0
            continue
        ref_dur = sum(e - s for s, e in iv)
        hyp_dur = sum(e - s for s, e in hyp_iv[mapped])
        inter = _interval_overlap(iv, hyp_iv[mapped])
        union = ref_dur + hyp_dur - inter
        out[spk] = 1.0 - inter / union if union > 0 else 1.0
    return out


def compute_jer(ref: SessionAnnotation, hyp: DiarisationHypothesis) -> float:
    values = jer_per_speaker(ref, hyp)
    return sum(values.values()) / len(values)


def compute_jer_corpus(
    pairs: Iterable[tuple[SessionAnnotation, DiarisationHypothesis]]
) -> float:
    """Mean over all reference speakers of all sessions."""
    values: list[float] = []
    for ref, hyp in pairs:
        values.extend(jer_per_speaker(ref, hyp).values())
    if not values:
        raise ValueError("no reference speakers in corpus")
    return sum(values) / len(values)


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length value lists with at least 2 entries")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined: zero variance input")
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


def write_scores(scored: Iterable[ScoredTrial], sink: TextIO) -> None:
    """One line per trial: '<score> <enrol-id> <test-id>'."""
    for s in scored:
        sink.write(f"{s.score!r} {s.trial.enrol_id} {s.trial.test_id}\n")


def read_scores(source: str | Iterable[str]) -> dict[tuple[str, str], float]:
    lines = source.splitlines() if isinstance(source, str) else source
    out: dict[tuple[str, str], float] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {line_no}: expected '<score> <enrol> <test>'")
        try:
            out[(fields[1], fields[2])] = float(fields[0])
        except ValueError:
            raise ValueError(f"line {line_no}: non-numeric score {fields[0]!r}") from None
    return out


def write_embeddings(embeddings: dict[str, np.ndarray], sink: TextIO) -> None:
    """Header line with the dimension, then '<segment-id> <v1> ... <vd>' records."""
    dims = {np.asarray(v).size for v in embeddings.values()}
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    sink.write(f"{dim}\n")
    for seg_id in sorted(embeddings):
        vec = np.asarray(embeddings[seg_id], dtype=np.float64).ravel()
        sink.write(seg_id + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def read_embeddings(source: str | Iterable[str]) -> dict[str, np.ndarray]:
    lines = list(source.splitlines() if isinstance(source, str) else source)
    body = [l for l in (raw.strip() for raw in lines) if l and not l.startswith("#")]
    if not body:
        raise ValueError("embedding file is empty")
    try:
        dim = int(body[0])
    except ValueError:
        raise ValueError("embedding file must start with the dimension") from None
    out: dict[str, np.ndarray] = {}
    for line in body[1:]:
        fields = line.split()
        if len(fields) != dim + 1:
            raise ValueError(f"embedding record for {fields[0]!r} has {len(fields) - 1} values, expected {dim}")
        out[fields[0]] = np.array([float(v) for v in fields[1:]], dtype=np.float64)
    return out


def score_trials(
    trials: Sequence[Trial],
    scores: dict[tuple[str, str], float] | None = None,
    embeddings: dict[str, np.ndarray] | None = None,
) -> list[ScoredTrial]:
    """Attach scores to trials from a score table or via cosine on embeddings."""
    if (scores is None) == (embeddings is None):
        raise ValueError("provide exactly one of scores or embeddings")
    out = []
    missing = []
    for trial in trials:
        if scores is not None:
            value = scores.get((trial.enrol_id, trial.test_id))
            if value is None:
                missing.append(f"{trial.enrol_id} {trial.test_id}")
                continue
        else:
            if trial.enrol_id not in embeddings or trial.test_id not in embeddings:
                missing.append(f"{trial.enrol_id} {trial.test_id}")
                continue
            value = cosine_score(embeddings[trial.enrol_id], embeddings[trial.test_id])
        out.append(ScoredTrial(trial, value))
    if missing:
        shown = "\n  ".join(missing[:20])
        raise ValueError(f"{len(missing)} trial(s) with unresolvable segment ids:\n  {shown}")
    return out


@dataclass
class SystemEval:
    """One system's metrics for the correlation report."""

    label: str
    eer_by_protocol: dict[str, float]
    der: float | None = None
    jer: float | None = None


def correlation_report(systems: Sequence[SystemEval]) -> str:
    """Text table of per-system metrics plus EER/DER and EER/JER correlations.

    All rates are percentages. Raises on zero-variance metric columns,
    where a correlation is undefined.
    """
    if not systems:
        raise ValueError("no systems to report")
    kinds: list[str] = []
    for sys_eval in systems:
        for kind in sys_eval.eer_by_protocol:
            if kind not in kinds:
                kinds.append(kind)
    label_w = max(6, max(len(s.label) for s in systems))
    headers = ["system".ljust(label_w)] + [f"EER[{k}]" for k in kinds] + ["DER", "JER"]
    rows = [headers]
    for s in systems:
        row = [s.label.ljust(label_w)]
        for kind in kinds:
            v = s.eer_by_protocol.get(kind)
            row.append("-" if v is None else f"{100 * v:.2f}")
        row.append("-" if s.der is None else f"{100 * s.der:.2f}")
        row.append("-" if s.jer is None else f"{100 * s.jer:.2f}")
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip() for row in rows]

    have_der = all(s.der is not None for s in systems)
    have_jer = all(s.jer is not None for s in systems)
    if len(systems) >= 2 and (have_der or have_jer):
        lines.append("")
        lines.append("pearson r (EER vs diarisation metrics):")
        for kind in kinds:
            eers = [s.eer_by_protocol[kind] for s in systems if kind in s.eer_by_protocol]
            if len(eers) != len(systems):
                continue
            parts = []
            if have_der:
                parts.append(f"DER {pearson_r(eers, [s.der for s in systems]):+.4f}")
            if have_jer:
                parts.append(f"JER {pearson_r(eers, [s.jer for s in systems]):+.4f}")
            lines.append(f"  {kind}: " + "  ".join(parts))
    return "\n".join(lines) + "\n"
