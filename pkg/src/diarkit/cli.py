"""Command-line pipeline: segments | protocol | crop | augment | score | correlate.

Exit codes: 0 success, 1 usage error, 2 data error. Every artifact is
written atomically (temp file + rename) and is re-readable by the
matching read function, and a fixed config + seed reproduces output
files byte for byte.
"""

from __future__ import annotations

import argparse
import collections
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import augment as aug
from . import metrics
from .annotations import SessionAnnotation, parse_rttm
from .audioio import read_wav, slice_samples, write_wav
from .config import ConfigError, RunConfig, load_config
from .protocols import (
    EmptyProtocolError,
    ProtocolKind,
    build_trials,
    read_manifest,
    read_protocol,
    write_manifest,
    write_protocol,
)
from .rng import KeyedRng
from .segmenter import SegmentType, extract_segments, read_segments, write_segments

_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _read_rttm_inputs(path: str) -> list[SessionAnnotation]:
    paths = []
    if os.path.isdir(path):
        paths = sorted(
            os.path.join(path, name) for name in os.listdir(path) if name.endswith(".rttm")
        )
    elif os.path.isfile(path):
        paths = [path]
    else:
        raise FileNotFoundError(f"no RTTM input at {path}")
    sessions: dict[str, list] = {}
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            for ann in parse_rttm(fh):
                sessions.setdefault(ann.session_id, []).extend(ann.turns)
    return [SessionAnnotation(sid, tuple(turns)) for sid, turns in sorted(sessions.items())]


def write_rttm(annotations, sink) -> None:
    """SPEAKER records at millisecond precision; the parser's round-trip partner."""
    for ann in annotations:
        for turn in ann.turns:
            sink.write(
                f"SPEAKER {ann.session_id} 1 {turn.onset:.3f} {turn.duration:.3f} "
                f"<NA> <NA> {turn.speaker_id} <NA> <NA>\n"
            )


def _load_regions(path: str) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{line_no}: expected '<session> <t0> <t1>'")
            out.setdefault(fields[0], []).append((float(fields[1]), float(fields[2])))
    return out


def _extract_one(args):
    ann, window, hop, cfg = args
    return extract_segments(ann, window, hop, cfg)


def cmd_segments(args) -> int:
    config = _config_from(args)
    annotations = _read_rttm_inputs(args.rttm)
    jobs = [(ann, config.window, config.hop, config.classify_config()) for ann in annotations]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_session = list(pool.map(_extract_one, jobs))
    else:
        per_session = [_extract_one(job) for job in jobs]
    segments = [seg for group in per_session for seg in group]

    if args.regions:
        regions = _load_regions(args.regions)
        segments = [
            seg
            for seg in segments
            if any(
                r0 - _TOL <= seg.start and seg.end <= r1 + _TOL
                for r0, r1 in regions.get(seg.session_id, [])
            )
        ]

    import io

    buf = io.StringIO()
    write_segments(segments, buf)
    _write_text(args.out, buf.getvalue())

    counts = collections.Counter(seg.seg_type for seg in segments)
    for seg_type in SegmentType:
        print(f"{seg_type.value} {counts.get(seg_type, 0)}")
    print(f"total {len(segments)}")
    return 0


def cmd_protocol(args) -> int:
    config = _config_from(args)
    with open(args.segments, "r", encoding="utf-8") as fh:
        segments = read_segments(fh)
    kind = ProtocolKind(args.kind)
    protocol = build_trials(segments, kind, config.protocol_config(), config.seed)

    out = args.out or os.path.join(config.out_dir or ".", f"{kind.value}.protocol")
    import io

    buf = io.StringIO()
    write_protocol(protocol, buf)
    _write_text(out, buf.getvalue())

    manifest_path = args.manifest or out + ".manifest.json"
    buf = io.StringIO()
    write_manifest(protocol, _sha256_file(args.segments), buf)
    _write_text(manifest_path, buf.getvalue())
    print(f"{kind.value} {len(protocol.trials)} trials -> {out}")
    return 0


def cmd_crop(args) -> int:
    with open(args.segments, "r", encoding="utf-8") as fh:
        segments = read_segments(fh)
    os.makedirs(args.out_dir, exist_ok=True)
    audio_cache: dict[str, tuple[np.ndarray, int]] = {}
    failures = []
    written = 0
    for seg in segments:
        if seg.session_id not in audio_cache:
            wav_path = os.path.join(args.audio_dir, seg.session_id + ".wav")
            if not os.path.isfile(wav_path):
                failures.append(f"{seg.session_id}: missing audio file {wav_path}")
                audio_cache[seg.session_id] = (None, 0)
                continue
            audio_cache[seg.session_id] = read_wav(wav_path)
        samples, rate = audio_cache[seg.session_id]
        if samples is None:
            continue
        try:
            clip = slice_samples(samples, rate, seg.start, seg.duration)
        except ValueError as exc:
            failures.append(f"{seg.segment_id}: {exc}")
            continue
        write_wav(os.path.join(args.out_dir, seg.segment_id + ".wav"), clip, rate)
        written += 1
    print(f"wrote {written} clips to {args.out_dir}")
    if failures:
        raise ValueError("crop failures:\n  " + "\n  ".join(failures))
    return 0


def _read_batch_manifest(path: str) -> list[tuple[str, str]]:
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"{path}:{line_no}: expected '<wav-path> <speaker>'")
            clip = fields[0]
            if not os.path.isabs(clip):
                clip = os.path.join(base, clip)
            out.append((clip, fields[1]))
    return out


def load_batch(manifest_path: str) -> tuple[aug.Batch, list[str]]:
    """Build a float32 batch from a '<wav-path> <speaker>' manifest."""
    entries = _read_batch_manifest(manifest_path)
    if not entries:
        raise ValueError(f"{manifest_path}: batch manifest is empty")
    rows = []
    rates = set()
    lengths = set()
    for clip, _ in entries:
        samples, rate = read_wav(clip)
        if samples.dtype == np.int16:
            samples = (samples.astype(np.float32)) / np.float32(32768.0)
        rows.append(samples)
        rates.add(rate)
        lengths.add(samples.size)
    if len(rates) > 1 or len(lengths) > 1:
        raise ValueError(
            f"batch clips disagree: rates {sorted(rates)}, lengths {sorted(lengths)}"
        )
    wav = np.stack(rows).astype(np.float32, copy=False)
    batch = aug.Batch(wav, tuple(spk for _, spk in entries), rates.pop())
    return batch, [clip for clip, _ in entries]


def cmd_augment(args) -> int:
    config = _config_from(args)
    batch, sources = load_batch(args.batch)
    policy = config.augment_policy()
    rng = KeyedRng(config.seed)
    if args.transform == "policy":
        out_batch, log = aug.apply_policy_logged(batch, policy, rng)
    elif args.transform == "overlap":
        out_batch, log = aug.overlap_augment_logged(batch, policy, rng)
    else:
        out_batch, log = aug.change_augment_logged(batch, policy, rng)

    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for i in range(out_batch.size):
        name = f"row{i:03d}.wav"
        write_wav(os.path.join(args.out_dir, name), out_batch.waveforms[i], out_batch.sample_rate)
        outputs.append(name)

    payload = {
        "transform": args.transform,
        "seed": config.seed,
        "sample_rate": out_batch.sample_rate,
        "length": out_batch.length,
        "speakers": list(out_batch.speakers),
        "sources": sources,
        "outputs": outputs,
        **aug.draw_log_to_dict(log),
    }
    _write_text(
        os.path.join(args.out_dir, "draws.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    print(f"applied {log.applied} to {out_batch.size} rows -> {args.out_dir}")
    return 0


def _scored_from_files(protocol_path, scores_path, embeddings_path):
    with open(protocol_path, "r", encoding="utf-8") as fh:
        protocol = read_protocol(fh)
    if scores_path:
        with open(scores_path, "r", encoding="utf-8") as fh:
            return protocol, metrics.score_trials(protocol.trials, scores=metrics.read_scores(fh))
    with open(embeddings_path, "r", encoding="utf-8") as fh:
        emb = metrics.read_embeddings(fh)
    return protocol, metrics.score_trials(protocol.trials, embeddings=emb)


def cmd_score(args) -> int:
    if bool(args.scores) == bool(args.embeddings):
        raise SystemExit(_usage_error(args.parser, "provide exactly one of --scores/--embeddings"))
    protocol, scored = _scored_from_files(args.protocol, args.scores, args.embeddings)
    eer, threshold = metrics.compute_eer(scored)
    n_target = sum(1 for s in scored if s.trial.is_target)
    print(f"trials {len(scored)} target {n_target} nontarget {len(scored) - n_target}")
    print(f"eer {eer:.6f} threshold {threshold:.6f}")
    if args.dump_scores:
        import io

        buf = io.StringIO()
        metrics.write_scores(scored, buf)
        _write_text(args.dump_scores, buf.getvalue())
    return 0


def _usage_error(parser, message) -> int:
    sys.stderr.write(f"error: {message}\n")
    return 1


def _protocol_files(directory: str) -> dict[str, str]:
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".protocol"):
            out[name[: -len(".protocol")]] = os.path.join(directory, name)
    if not out:
        raise FileNotFoundError(f"no *.protocol files in {directory}")
    return out


def cmd_correlate(args) -> int:
    config = _config_from(args)
    refs = {ann.session_id: ann for ann in _read_rttm_inputs(args.ref_rttm)}
    if not refs:
        raise ValueError(f"no reference sessions found in {args.ref_rttm}")
    protocol_paths = _protocol_files(args.protocols_dir)

    systems = []
    with open(args.systems, "r", encoding="utf-8") as fh:
        manifest_lines = [l.strip() for l in fh if l.strip() and not l.startswith("#")]
    for line in manifest_lines:
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"systems manifest line needs '<label> <scores_dir> <hyp_rttm>': {line!r}")
        label, scores_dir, hyp_path = fields
        eers = {}
        for kind, proto_path in protocol_paths.items():
            scores_path = os.path.join(scores_dir, f"{kind}.scores")
            if not os.path.isfile(scores_path):
                raise FileNotFoundError(f"system {label}: missing {scores_path}")
            _, scored = _scored_from_files(proto_path, scores_path, None)
            eers[kind] = metrics.compute_eer(scored)[0]
        hyps = {ann.session_id: ann for ann in _read_rttm_inputs(hyp_path)}
        pairs = [
            (ref, hyps.get(sid, SessionAnnotation(sid, ())))
            for sid, ref in sorted(refs.items())
        ]
        der = metrics.compute_der_corpus(pairs, config.collar, config.overlap_scoring).der
        jer = metrics.compute_jer_corpus(pairs)
        systems.append(metrics.SystemEval(label, eers, der, jer))

    report = metrics.correlation_report(systems)
    print(report, end="")
    if args.out:
        _write_text(args.out, report)
    return 0


def _config_from(args) -> RunConfig:
    overrides = {}
    for key in ("seed", "workers", "collar", "window", "hop"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "overlap_scoring", None) is not None:
        overrides["overlap_scoring"] = args.overlap_scoring == "on"
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diarkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("segments", parents=[], help="classify sliding windows from RTTM")
    common(p)
    p.add_argument("--rttm", required=True, help="RTTM file or directory")
    p.add_argument("--out", required=True, help="segment table path")
    p.add_argument("--window", type=float, default=None)
    p.add_argument("--hop", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--regions", help="optional scoring-region filter file: '<session> <t0> <t1>'")
    p.set_defaults(func=cmd_segments)

    p = sub.add_parser("protocol", help="build a trial protocol from a segment table")
    common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--kind", required=True, choices=[k.value for k in ProtocolKind])
    p.add_argument("--out", help="protocol path (default <kind>.protocol)")
    p.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("crop", help="cut per-segment audio clips")
    common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("augment", help="apply batch augmentation offline")
    common(p)
    p.add_argument("--batch", required=True, help="manifest: '<wav-path> <speaker>' per line")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--transform", choices=["policy", "overlap", "change"], default="policy")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("score", help="EER of a protocol from scores or embeddings")
    common(p)
    p.add_argument("--protocol", required=True)
    p.add_argument("--scores")
    p.add_argument("--embeddings")
    p.add_argument("--dump-scores")
    p.set_defaults(func=cmd_score, parser=p)

    p = sub.add_parser("correlate", help="metrics table and EER/DER/JER correlations")
    common(p)
    p.add_argument("--systems", required=True, help="manifest: '<label> <scores_dir> <hyp_rttm>'")
    p.add_argument("--protocols-dir", required=True)
    p.add_argument("--ref-rttm", required=True)
    p.add_argument("--collar", type=float, default=None)
    p.add_argument("--overlap-scoring", choices=["on", "off"], default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except EmptyProtocolError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ValueError, ConfigError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def entrypoint() -> None:
    sys.exit(main())
