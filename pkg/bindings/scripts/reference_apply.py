#!/usr/bin/env python3
"""Parity reference for the bindings tests.

Reads a raw float32 batch, runs the in-memory engine directly (no CLI,
no WAV container), and writes the raw float32 result plus the draw log.
Spec file keys: input, output, log, rows, cols, speakers, sample_rate,
seed, transform, policy{...}.
"""

import json
import sys

import numpy as np

from diarkit.augment import (
    AugmentPolicy,
    Batch,
    apply_policy_logged,
    change_augment_logged,
    draw_log_to_dict,
    overlap_augment_logged,
)
from diarkit.rng import KeyedRng


def main():
    with open(sys.argv[1]) as fh:
        spec = json.load(fh)
    raw = np.fromfile(spec["input"], dtype="<f4").reshape(spec["rows"], spec["cols"])
    policy_fields = spec.get("policy", {})
    policy = AugmentPolicy(
        p_overlap=policy_fields.get("p_overlap", 0.25),
        p_change=policy_fields.get("p_change", 0.25),
        overlap_snr_db=tuple(policy_fields.get("overlap_snr_db", (0.0, 20.0))),
        change_snr_db=tuple(policy_fields.get("change_snr_db", (-5.0, 15.0))),
        overlap_crop_s=tuple(policy_fields.get("overlap_crop_s", (0.2, 0.7))),
        change_crop_s=tuple(policy_fields.get("change_crop_s", (0.2, 0.3))),
        seed=spec["seed"],
    )
    batch = Batch(raw, tuple(spec["speakers"]), spec["sample_rate"])
    rng = KeyedRng(spec["seed"])
    transform = spec.get("transform", "policy")
    if transform == "policy":
        out, log = apply_policy_logged(batch, policy, rng)
    elif transform == "overlap":
        out, log = overlap_augment_logged(batch, policy, rng)
    elif transform == "change":
        out, log = change_augment_logged(batch, policy, rng)
    else:
        raise SystemExit(f"unknown transform {transform!r}")
    out.waveforms.astype("<f4").tofile(spec["output"])
    with open(spec["log"], "w") as fh:
        json.dump(draw_log_to_dict(log), fh)


if __name__ == "__main__":
    main()
