"""Mini-batch waveform augmentations for multi-speaker awareness.

Two transforms operate on a batch X of N equal-length utterances, one
utterance per speaker. Both pair every row i with a different speaker's
row via a cyclic shuffle, crop a short burst of the partner, and scale
it to a drawn SNR:

  overlap:        out[i] = x[i] + gain * x[partner] on the support
  speaker change: out[i] = gain * x[partner] on the support, x[i] off it

The support is one contiguous interval placed at the start, end, or
middle of the utterance. Waveform arithmetic is float32; gains are
derived in float64 and applied as float32. Nothing is clipped, so
values may leave [-1, 1]. Labels always keep the major speaker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import KeyedRng

__all__ = [
    "Batch",
    "CropMask",
    "AugmentPolicy",
    "MaskDraw",
    "DrawLog",
    "MaskEnergyError",
    "shuffle_partner",
    "make_crop_mask",
    "overlap_augment",
    "change_augment",
    "apply_policy",
    "overlap_augment_logged",
    "change_augment_logged",
    "apply_policy_logged",
    "apply_draws",
    "draw_log_to_dict",
    "draw_log_from_dict",
]

PLACEMENTS = ("start", "end", "middle")

#: speaker-change flavours and where they put the partner burst
CHANGE_TYPES = (
    ("major-minor", "end"),
    ("minor-major", "start"),
    ("major-minor-major", "middle"),
)


class MaskEnergyError(ValueError):
    """No usable energy to solve the SNR gain against."""


@dataclass
class Batch:
    """N equal-length float32 waveforms with one distinct speaker per row."""

    waveforms: np.ndarray
    speakers: tuple[str, ...]
    sample_rate: int

    def __post_init__(self):
        wav = np.asarray(self.waveforms)
        if wav.ndim != 2:
            raise ValueError(f"waveforms must be 2-D (N, L), got shape {wav.shape}")
        if wav.dtype != np.float32:
            raise ValueError(f"waveforms must be float32, got {wav.dtype}")
        self.waveforms = wav
        self.speakers = tuple(self.speakers)
        if len(self.speakers) != wav.shape[0]:
            raise ValueError("one speaker label per row required")
        if len(set(self.speakers)) != len(self.speakers):
            raise ValueError("at most one utterance per speaker per batch")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def size(self) -> int:
        return self.waveforms.shape[0]

    @property
    def length(self) -> int:
        return self.waveforms.shape[1]


@dataclass(frozen=True)
class CropMask:
    """One gained interval [start, stop) of sample indices; zero elsewhere."""

    start: int
    stop: int
    gain: float

    def __post_init__(self):
        if not (0 <= self.start < self.stop):
            raise ValueError(f"bad mask support [{self.start}, {self.stop})")
        if self.gain <= 0:
            raise ValueError(f"mask gain must be > 0, got {self.gain}")


@dataclass(frozen=True)
class AugmentPolicy:
    """Batch-level augmentation policy.

    Probabilities select one of overlap / speaker change / nothing per
    mini-batch; the remainder 1 - p_overlap - p_change is untouched.
    SNR ranges are dB; crop ranges are seconds.
    """

    p_overlap: float = 0.25
    p_change: float = 0.25
    overlap_snr_db: tuple[float, float] = (0.0, 20.0)
    change_snr_db: tuple[float, float] = (-5.0, 15.0)
    overlap_crop_s: tuple[float, float] = (0.2, 0.7)
    change_crop_s: tuple[float, float] = (0.2, 0.3)
    # rescale rows whose peak leaves [-1, 1] back to unit peak; off by
    # default because training features are scale-tolerant and uniform
    # rescaling preserves the within-row insert-to-major energy ratio
    peak_normalize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.p_overlap < 0 or self.p_change < 0 or self.p_overlap + self.p_change > 1 + 1e-12:
            raise ValueError("need p_overlap, p_change >= 0 with sum <= 1")
        for name in ("overlap_snr_db", "change_snr_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range reversed")
        for name in ("overlap_crop_s", "change_crop_s"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class MaskDraw:
    """Everything drawn for one row, enough to replay it."""

    row: int
    partner: int
    start: int
    stop: int
    snr_db: float
    gain: float
    placement: str


@dataclass(frozen=True)
class DrawLog:
    applied: str  # none | overlap | change
    change_type: str | None
    rows: tuple[MaskDraw, ...]
    peak_normalized: bool = False


def shuffle_partner(batch: Batch, rng: KeyedRng) -> list[int]:
    """Pair every row with a different row via a random cyclic shuffle.

    The result has no fixed points, so with one utterance per speaker
    every partner is a different speaker.
    """
    n = batch.size
    if n < 2:
        raise ValueError("need at least 2 utterances to pair speakers")
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randint(i)  # j < i keeps the permutation cyclic
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _mean_square(x: np.ndarray) -> float:
    return float(np.mean(np.square(x, dtype=np.float64)))


def _crop_bounds(dur_range_s: tuple[float, float], sample_rate: int, length: int) -> tuple[int, int]:
    lo_s, hi_s = dur_range_s
    if not (0 < lo_s <= hi_s):
        raise ValueError(f"bad crop duration range {dur_range_s}")
    lo = math.ceil(lo_s * sample_rate - 1e-9)
    hi = math.floor(hi_s * sample_rate + 1e-9)
    # middle placement needs at least one untouched sample on each side
    if lo < 1 or hi > length - 2:
        raise ValueError(
            f"crop range {dur_range_s}s does not fit an utterance of {length} samples "
            f"at {sample_rate} Hz"
        )
    return lo, hi


def make_crop_mask(
    length: int,
    dur_range_s: tuple[float, float],
    placement: str,
    snr_db: float,
    major: np.ndarray,
    minor: np.ndarray,
    sample_rate: int,
    rng: KeyedRng,
) -> CropMask:
    """Draw a support interval and solve the gain that hits snr_db.

    The gain g satisfies 10*log10(E_major / (g^2 * E_minor_support)) ==
    snr_db, where E_major is the mean square of the whole major
    utterance and E_minor_support the mean square of the partner over
    the support. Supports where the partner is silent are redrawn up to
    8 times before giving up.
    """
    if placement not in PLACEMENTS and placement != "random":
        raise ValueError(f"unknown placement {placement!r}")
    if len(major) != length or len(minor) != length:
        raise ValueError("major and minor must both have the full utterance length")
    e_major = _mean_square(major)
    if e_major == 0.0:
        raise MaskEnergyError("major utterance is silent; SNR undefined")
    lo, hi = _crop_bounds(dur_range_s, sample_rate, length)
    for _ in range(1 + 8):
        dur = lo + rng.randint(hi - lo + 1)
        kind = placement if placement != "random" else PLACEMENTS[rng.randint(3)]
        if kind == "start":
            a = 0
        elif kind == "end":
            a = length - dur
        else:
            a = 1 + rng.randint(length - dur - 1)
        b = a + dur
        e_minor = _mean_square(minor[a:b])
        if e_minor > 0.0:
            gain = 10.0 ** (-snr_db / 20.0) * math.sqrt(e_major / e_minor)
            return CropMask(a, b, gain)
    raise MaskEnergyError("partner utterance silent on every drawn support")


def _placement_of(mask: CropMask, length: int) -> str:
    if mask.start == 0:
        return "start"
    if mask.stop == length:
        return "end"
    return "middle"


def _peak_normalize_rows(wav: np.ndarray) -> None:
    for i in range(wav.shape[0]):
        peak = float(np.max(np.abs(wav[i])))
        if peak > 1.0:
            wav[i] = wav[i] / np.float32(peak)


def overlap_augment_logged(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> tuple[Batch, DrawLog]:
    """Add a gained partner burst on top of every row."""
    wav = batch.waveforms
    n, length = wav.shape
    perm = shuffle_partner(batch, rng)
    out = wav.copy()
    draws = []
    for i in range(n):
        partner = perm[i]
        snr = rng.uniform(*policy.overlap_snr_db)
        mask = make_crop_mask(
            length, policy.overlap_crop_s, "random", snr, wav[i], wav[partner], batch.sample_rate, rng
        )
        a, b = mask.start, mask.stop
        out[i, a:b] = wav[i, a:b] + np.float32(mask.gain) * wav[partner, a:b]
        draws.append(MaskDraw(i, partner, a, b, snr, mask.gain, _placement_of(mask, length)))
    if policy.peak_normalize:
        _peak_normalize_rows(out)
    log = DrawLog("overlap", None, tuple(draws), policy.peak_normalize)
    return Batch(out, batch.speakers, batch.sample_rate), log


def change_augment_logged(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> tuple[Batch, DrawLog]:
    """Replace one region of every row with a gained partner burst.

    The change flavour (and with it the support placement) is drawn
    once per mini-batch; durations, SNRs and gains are per row.
    Off-support samples are the untouched originals: no arithmetic
    mixes the two sides.
    """
    wav = batch.waveforms
    n, length = wav.shape
    perm = shuffle_partner(batch, rng)
    change_type, placement = CHANGE_TYPES[rng.randint(3)]
    out = wav.copy()
    draws = []
    for i in range(n):
        partner = perm[i]
        snr = rng.uniform(*policy.change_snr_db)
        mask = make_crop_mask(
            length, policy.change_crop_s, placement, snr, wav[i], wav[partner], batch.sample_rate, rng
        )
        a, b = mask.start, mask.stop
        out[i, a:b] = np.float32(mask.gain) * wav[partner, a:b]
        draws.append(MaskDraw(i, partner, a, b, snr, mask.gain, placement))
    if policy.peak_normalize:
        _peak_normalize_rows(out)
    log = DrawLog("change", change_type, tuple(draws), policy.peak_normalize)
    return Batch(out, batch.speakers, batch.sample_rate), log


def apply_policy_logged(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> tuple[Batch, DrawLog]:
    """Draw one of overlap / change / nothing for the batch and apply it."""
    u = rng.uniform()
    if u < policy.p_overlap:
        return overlap_augment_logged(batch, policy, rng)
    if u < policy.p_overlap + policy.p_change:
        return change_augment_logged(batch, policy, rng)
    untouched = Batch(batch.waveforms.copy(), batch.speakers, batch.sample_rate)
    return untouched, DrawLog("none", None, ())


def overlap_augment(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> Batch:
    return overlap_augment_logged(batch, policy, rng)[0]


def change_augment(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> Batch:
    return change_augment_logged(batch, policy, rng)[0]


def apply_policy(batch: Batch, policy: AugmentPolicy, rng: KeyedRng) -> tuple[Batch, str]:
    out, log = apply_policy_logged(batch, policy, rng)
    return out, log.applied


def apply_draws(batch: Batch, log: DrawLog) -> Batch:
    """Replay a draw log against a batch; reproduces the logged output."""
    wav = batch.waveforms
    out = wav.copy()
    for d in log.rows:
        gain = np.float32(d.gain)
        if log.applied == "overlap":
            out[d.row, d.start : d.stop] = wav[d.row, d.start : d.stop] + gain * wav[d.partner, d.start : d.stop]
        elif log.applied == "change":
            out[d.row, d.start : d.stop] = gain * wav[d.partner, d.start : d.stop]
        else:
            raise ValueError(f"draw log applied={log.applied!r} carries rows")
    if log.peak_normalized:
        _peak_normalize_rows(out)
    return Batch(out, batch.speakers, batch.sample_rate)


def draw_log_to_dict(log: DrawLog) -> dict:
    return {
        "applied": log.applied,
        "change_type": log.change_type,
        "peak_normalized": log.peak_normalized,
        "rows": [
            {
                "row": d.row,
                "partner": d.partner,
                "start": d.start,
                "stop": d.stop,
                "snr_db": d.snr_db,
                "gain": d.gain,
                "placement": d.placement,
            }
            for d in log.rows
        ],
    }


def draw_log_from_dict(payload: dict) -> DrawLog:
    rows = tuple(
        MaskDraw(
            int(r["row"]),
            int(r["partner"]),
            int(r["start"]),
            int(r["stop"]),
            float(r["snr_db"]),
            float(r["gain"]),
            str(r["placement"]),
        )
        for r in payload.get("rows", [])
    )
    change_type = payload.get("change_type")
    return DrawLog(str(payload["applied"]), change_type, rows, bool(payload.get("peak_normalized", False)))
