import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarkit.annotations import SessionAnnotation, SpeakerTurn
from diarkit.metrics import (
    ScoredTrial,
    SystemEval,
    compute_der,
    compute_der_corpus,
    compute_eer,
    compute_jer,
    compute_jer_corpus,
    correlation_report,
    cosine_score,
    eer_from_scores,
    jer_per_speaker,
    optimal_speaker_mapping,
    pearson_r,
    read_embeddings,
    read_scores,
    score_trials,
    write_embeddings,
    write_scores,
)
from diarkit.protocols import Trial, TrialType

from oracles import brute_force_mapping, eer_oracle, grid_der, grid_jer
from synth import jitter_hypothesis, random_session


def ann(sid, *turns):
    return SessionAnnotation(sid, tuple(SpeakerTurn(*t) for t in turns))


# ---------------------------------------------------------------- cosine

def test_cosine_identical_and_opposite():
    v = [0.3, -1.2, 2.0]
    assert cosine_score(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine_score(v, [-x for x in v]) == pytest.approx(-1.0, abs=1e-12)


def test_cosine_closed_form():
    assert cosine_score([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-4)


def test_cosine_errors():
    with pytest.raises(ValueError):
        cosine_score([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        cosine_score([1.0], [1.0, 0.0])


# ---------------------------------------------------------------- EER

def test_eer_perfect_separation():
    eer, _ = eer_from_scores([1.0, 1.0, 1.0], [0.0, 0.0])
    assert eer == 0.0


def test_eer_fully_inverted():
    eer, _ = eer_from_scores([0.0, 0.0], [1.0, 1.0, 1.0])
    assert eer == 1.0


def test_eer_four_trial_set_matches_sweep_oracle():
    targets = [0.9, 0.4]
    nontargets = [0.6, 0.1]
    want, _ = eer_oracle(targets, nontargets)
    got, _ = eer_from_scores(targets, nontargets)
    assert got == pytest.approx(want, abs=1e-15)
    assert got == pytest.approx(0.5, abs=1e-15)  # frozen oracle output for this set


def test_eer_single_class_errors():
    with pytest.raises(ValueError):
        eer_from_scores([1.0], [])
    with pytest.raises(ValueError):
        eer_from_scores([], [0.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_eer_matches_oracle_on_random_sets(seed):
    rng = np.random.default_rng(seed)
    n_tar = int(rng.integers(1, 40))
    n_non = int(rng.integers(1, 40))
    targets = list(np.round(rng.normal(1.0, 0.8, n_tar), 3))
    nontargets = list(np.round(rng.normal(0.0, 0.8, n_non), 3))
    got, _ = eer_from_scores(targets, nontargets)
    want, _ = eer_oracle(targets, nontargets)
    assert got == pytest.approx(want, abs=1e-12)
    assert 0.0 <= got <= 1.0


def test_eer_invariant_under_increasing_transform():
    rng = np.random.default_rng(1)
    targets = list(rng.normal(1.0, 0.5, 30))
    nontargets = list(rng.normal(0.0, 0.5, 30))
    base, _ = eer_from_scores(targets, nontargets)
    warped, _ = eer_from_scores([math.tanh(s) for s in targets], [math.tanh(s) for s in nontargets])
    assert warped == pytest.approx(base, abs=1e-12)


def test_compute_eer_over_scored_trials():
    def trial(is_target, i):
        kind = "t" if is_target else "n"
        return Trial(is_target, f"s#{i}-{i+1}#single_speaker", f"s#{i+2}-{i+3}#single_speaker", TrialType.SINGLE_SINGLE, "s")

    scored = [ScoredTrial(trial(True, i), 1.0) for i in range(5)]
    scored += [ScoredTrial(trial(False, i + 100), 0.0) for i in range(5)]
    eer, threshold = compute_eer(scored)
    assert eer == 0.0
    assert 0.0 < threshold < 1.0


# ---------------------------------------------------------------- mapping / DER / JER

def test_mapping_simple():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 10.0, 10.0))
    hyp = ann("s", ("x", 0.0, 12.0), ("y", 12.0, 8.0))
    assert optimal_speaker_mapping(ref, hyp) == {"A": "x", "B": "y"}


def test_mapping_matches_brute_force_on_random_sessions():
    rng = np.random.default_rng(5)
    for i in range(60):
        ref = random_session(rng, "s", max_speakers=4, max_turns=12)
        if not ref.turns:
            continue
        hyp = jitter_hypothesis(rng, ref, 0.4)
        # rename hypothesis speakers so the mapping is not the identity
        renamed = SessionAnnotation(
            "s", tuple(SpeakerTurn("h" + t.speaker_id, t.onset, t.duration) for t in hyp.turns)
        )
        assert optimal_speaker_mapping(ref, renamed) == brute_force_mapping(ref, renamed)


def test_der_identity_is_zero():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 10.0, 10.0))
    result = compute_der(ref, ref, collar=0.0)
    assert result.der == 0.0
    assert result.missed == 0.0 and result.false_alarm == 0.0 and result.confusion == 0.0


def test_der_silent_hypothesis_is_all_missed():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 10.0, 10.0))
    result = compute_der(ref, SessionAnnotation("s", ()), collar=0.0)
    assert result.der == 1.0
    assert result.missed == 1.0


def test_der_two_speaker_toy_confusion():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 10.0, 10.0))
    hyp = ann("s", ("A", 0.0, 12.0), ("B", 12.0, 8.0))
    result = compute_der(ref, hyp, collar=0.0)
    assert result.confusion == pytest.approx(2.0 / 20.0, abs=1e-9)
    assert result.der == pytest.approx(0.10, abs=1e-9)
    assert result.missed == 0.0 and result.false_alarm == 0.0


def test_der_collar_excludes_boundary_errors():
    ref = ann("s", ("A", 0.0, 10.0))
    hyp = ann("s", ("A", 0.1, 9.9))  # only misses inside the collar
    assert compute_der(ref, hyp, collar=0.25).der == pytest.approx(0.0, abs=1e-9)
    assert compute_der(ref, hyp, collar=0.0).der > 0.0


def test_der_skip_overlap_regions():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 5.0, 10.0))
    hyp = ann("s", ("A", 0.0, 10.0), ("B", 5.0, 10.0))
    both = compute_der(ref, hyp, collar=0.0, score_overlap=True)
    solo = compute_der(ref, hyp, collar=0.0, score_overlap=False)
    assert both.ref_seconds == pytest.approx(20.0, abs=1e-9)
    assert solo.ref_seconds == pytest.approx(10.0, abs=1e-9)  # the overlapped 5 s pay twice


def test_der_invariant_under_hyp_label_permutation():
    rng = np.random.default_rng(8)
    ref = random_session(rng, "s", max_speakers=4, max_turns=15)
    hyp = jitter_hypothesis(rng, ref, 0.3)
    renamed = SessionAnnotation(
        "s", tuple(SpeakerTurn("zz" + t.speaker_id, t.onset, t.duration) for t in hyp.turns)
    )
    a = compute_der(ref, hyp, collar=0.0)
    b = compute_der(ref, renamed, collar=0.0)
    assert a.der == pytest.approx(b.der, abs=1e-9)


def test_der_can_exceed_one_on_false_alarms():
    ref = ann("s", ("A", 0.0, 2.0))
    hyp = ann("s", ("A", 0.0, 2.0), ("B", 2.0, 20.0))
    result = compute_der(ref, hyp, collar=0.0)
    assert result.der > 1.0
    assert result.false_alarm > 1.0


def test_der_empty_reference_errors():
    with pytest.raises(ValueError):
        compute_der(SessionAnnotation("s", ()), ann("s", ("A", 0.0, 1.0)))


@pytest.mark.parametrize("collar,score_overlap", [(0.0, True), (0.25, True), (0.0, False)])
def test_der_matches_grid_oracle(collar, score_overlap):
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 40:
        ref = random_session(rng, "s", max_speakers=4, max_turns=20)
        if not ref.turns:
            continue
        hyp = jitter_hypothesis(rng, ref, 0.5)
        mapping = optimal_speaker_mapping(ref, hyp)
        try:
            result = compute_der(ref, hyp, collar=collar, score_overlap=score_overlap)
        except ValueError:
            continue  # collar or overlap filter consumed all scored time
        der, missed, fa, conf = grid_der(ref, hyp, collar, score_overlap, mapping)
        assert result.der == pytest.approx(der, abs=0.002)
        assert result.missed == pytest.approx(missed, abs=0.002)
        assert result.false_alarm == pytest.approx(fa, abs=0.002)
        assert result.confusion == pytest.approx(conf, abs=0.002)
        checked += 1


def test_jer_identity_is_zero():
    ref = ann("s", ("A", 0.0, 10.0), ("B", 10.0, 10.0))
    assert compute_jer(ref, ref) == 0.0


def test_jer_disjoint_speaker_is_one():
    ref = ann("s", ("A", 0.0, 5.0), ("B", 10.0, 5.0))
    hyp = ann("s", ("h", 0.0, 5.0))
    values = jer_per_speaker(ref, hyp)
    assert values["A"] == 0.0
    assert values["B"] == 1.0
    assert compute_jer(ref, hyp) == 0.5


def test_jer_matches_grid_oracle():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 40:
        ref = random_session(rng, "s", max_speakers=4, max_turns=20)
        if not ref.turns:
            continue
        hyp = jitter_hypothesis(rng, ref, 0.5)
        mapping = optimal_speaker_mapping(ref, hyp)
        got = compute_jer(ref, hyp)
        want = grid_jer(ref, hyp, mapping)
        assert got == pytest.approx(want, abs=0.002)
        assert 0.0 <= got <= 1.0
        checked += 1


def test_corpus_merging():
    ref1 = ann("a", ("A", 0.0, 10.0))
    ref2 = ann("b", ("B", 0.0, 30.0))
    hyp1 = SessionAnnotation("a", ())  # everything missed
    merged = compute_der_corpus([(ref1, hyp1), (ref2, ref2)], collar=0.0)
    assert merged.der == pytest.approx(10.0 / 40.0, abs=1e-9)
    assert compute_jer_corpus([(ref1, hyp1), (ref2, ref2)]) == pytest.approx(0.5, abs=1e-9)


# ---------------------------------------------------------------- pearson

def test_pearson_exact_lines():
    xs = [1.0, 2.0, 3.0, 4.0]
    assert pearson_r(xs, xs) == pytest.approx(1.0, abs=1e-12)
    assert pearson_r(xs, [-x + 3 for x in xs]) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_closed_form():
    # direct formula: cov 5.5, sqrt(5 * 8.75)
    want = 5.5 / math.sqrt(5.0 * 8.75)
    assert pearson_r([1, 2, 3, 4], [1, 3, 2, 5]) == pytest.approx(want, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson_r([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        pearson_r([1.0], [1.0])


# ---------------------------------------------------------------- files and report

def _trial(i, is_target=True):
    return Trial(is_target, f"s#{i}-{i+1}#overlapped", f"s#{i+5}-{i+6}#single_speaker", TrialType.OVERLAP_SINGLE, "s")


def test_scores_round_trip():
    scored = [ScoredTrial(_trial(i), 0.123456789 * i - 0.5) for i in range(5)]
    buf = io.StringIO()
    write_scores(scored, buf)
    table = read_scores(buf.getvalue())
    for s in scored:
        assert table[(s.trial.enrol_id, s.trial.test_id)] == s.score


def test_embeddings_round_trip_and_scoring():
    rng = np.random.default_rng(2)
    emb = {f"seg{i}#0-1#single_speaker": rng.normal(size=8) for i in range(4)}
    buf = io.StringIO()
    write_embeddings(emb, buf)
    parsed = read_embeddings(buf.getvalue())
    assert set(parsed) == set(emb)
    for key in emb:
        assert np.allclose(parsed[key], emb[key], atol=0)

    ids = sorted(emb)
    trials = [Trial(True, ids[0], ids[1], TrialType.SINGLE_SINGLE, "seg0")]
    scored = score_trials(trials, embeddings=parsed)
    assert scored[0].score == pytest.approx(cosine_score(emb[ids[0]], emb[ids[1]]), abs=1e-12)


def test_score_trials_reports_missing_ids():
    trials = [_trial(0), _trial(1)]
    with pytest.raises(ValueError, match="unresolvable"):
        score_trials(trials, scores={})


def test_correlation_report_table_and_r():
    systems = [
        SystemEval("sys0", {"single": 0.05, "combined": 0.10}, der=0.10, jer=0.20),
        SystemEval("sys1", {"single": 0.08, "combined": 0.15}, der=0.15, jer=0.30),
        SystemEval("sys2", {"single": 0.12, "combined": 0.21}, der=0.21, jer=0.35),
    ]
    report = correlation_report(systems)
    assert "sys0" in report and "EER[single]" in report
    assert "pearson r" in report
    assert "+1.0000" in report  # EERs here are exactly proportional to DER


def test_correlation_report_zero_variance_errors():
    systems = [
        SystemEval("a", {"single": 0.1}, der=0.2, jer=0.2),
        SystemEval("b", {"single": 0.1}, der=0.3, jer=0.3),
    ]
    with pytest.raises(ValueError, match="zero variance"):
        correlation_report(systems)
