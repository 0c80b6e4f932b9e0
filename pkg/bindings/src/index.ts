/**
 * In-memory batch augmentation for training loops, backed by the
 * diarkit command-line engine.
 *
 * Every call ships the batch to `python -m diarkit augment` through
 * bit-exact float32 WAV files, so results are numerically identical to
 * the engine's own apply_policy on the same batch, policy, and seed.
 * The caller's buffer is never touched; a fresh Float32Array comes
 * back together with a structured draw log for experiment tracking.
 *
 * Calls are independent given their seed and safe to issue
 * concurrently; each one works in its own temp directory.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { readFloat32Wav, writeFloat32Wav } from "./wav";

export interface BoundBatchView {
  /** row-major rows x cols samples, contiguous */
  data: Float32Array;
  rows: number;
  cols: number;
  /** one distinct speaker per row */
  speakers: string[];
  sampleRate: number;
}

export interface PolicyFields {
  pOverlap?: number;
  pChange?: number;
  overlapSnrDb?: [number, number];
  changeSnrDb?: [number, number];
  overlapCropS?: [number, number];
  changeCropS?: [number, number];
}

export interface MaskDrawRecord {
  row: number;
  partner: number;
  start: number;
  stop: number;
  snrDb: number;
  gain: number;
  placement: string;
}

export type AppliedKind = "none" | "overlap" | "change";

export interface BoundDrawLog {
  applied: AppliedKind;
  changeType: string | null;
  rows: MaskDrawRecord[];
}

export interface BoundResult {
  data: Float32Array;
  applied: AppliedKind;
  drawLog: BoundDrawLog;
}

export interface EngineOptions {
  /** python interpreter with diarkit installed; default "python3" */
  pythonBin?: string;
  /** keep the temp work directory for debugging */
  keepWorkDir?: boolean;
}

const DEFAULT_POLICY: Required<PolicyFields> = {
  pOverlap: 0.25,
  pChange: 0.25,
  overlapSnrDb: [0, 20],
  changeSnrDb: [-5, 15],
  overlapCropS: [0.2, 0.7],
  changeCropS: [0.2, 0.3],
};

function validateView(view: BoundBatchView, needsPartner: boolean): void {
  if (view.data.length !== view.rows * view.cols) {
    throw new Error(
      `buffer is not a contiguous ${view.rows}x${view.cols} batch: length ${view.data.length}`,
    );
  }
  if (view.rows < 1 || view.cols < 1) {
    throw new Error("batch must have at least one row and one sample");
  }
  if (view.speakers.length !== view.rows) {
    throw new Error(`need one speaker per row: ${view.speakers.length} labels for ${view.rows} rows`);
  }
  if (new Set(view.speakers).size !== view.speakers.length) {
    throw new Error("at most one utterance per speaker per batch");
  }
  if (needsPartner && view.rows < 2) {
    throw new Error("need at least 2 rows to pair speakers");
  }
  if (!Number.isInteger(view.sampleRate) || view.sampleRate <= 0) {
    throw new Error(`bad sample rate ${view.sampleRate}`);
  }
}

function configText(policy: Required<PolicyFields>): string {
  const lines = [
    `p_overlap = ${policy.pOverlap}`,
    `p_change = ${policy.pChange}`,
    `overlap_snr_lo = ${policy.overlapSnrDb[0]}`,
    `overlap_snr_hi = ${policy.overlapSnrDb[1]}`,
    `change_snr_lo = ${policy.changeSnrDb[0]}`,
    `change_snr_hi = ${policy.changeSnrDb[1]}`,
    `overlap_crop_lo = ${policy.overlapCropS[0]}`,
    `overlap_crop_hi = ${policy.overlapCropS[1]}`,
    `change_crop_lo = ${policy.changeCropS[0]}`,
    `change_crop_hi = ${policy.changeCropS[1]}`,
  ];
  return lines.join("\n") + "\n";
}

function runTransform(
  transform: "policy" | "overlap" | "change",
  view: BoundBatchView,
  policyFields: PolicyFields,
  seed: number,
  options: EngineOptions = {},
): BoundResult {
  const policy: Required<PolicyFields> = { ...DEFAULT_POLICY, ...policyFields };
  const needsPartner = transform !== "policy" || policy.pOverlap + policy.pChange > 0;
  validateView(view, needsPartner);
  if (!Number.isInteger(seed) || seed < 0) {
    throw new Error(`seed must be a non-negative integer, got ${seed}`);
  }

  const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "diarkit-bind-"));
  try {
    const manifestLines: string[] = [];
    for (let i = 0; i < view.rows; i++) {
      const name = `clip${String(i).padStart(3, "0")}.wav`;
      const row = view.data.subarray(i * view.cols, (i + 1) * view.cols);
      writeFloat32Wav(path.join(workDir, name), row, view.sampleRate);
      manifestLines.push(`${name} ${view.speakers[i]}`);
    }
    const manifestPath = path.join(workDir, "manifest.txt");
    fs.writeFileSync(manifestPath, manifestLines.join("\n") + "\n");
    const configPath = path.join(workDir, "policy.cfg");
    fs.writeFileSync(configPath, configText(policy));
    const outDir = path.join(workDir, "out");

    const result = spawnSync(
      options.pythonBin ?? "python3",
      [
        "-m", "diarkit", "augment",
        "--batch", manifestPath,
        "--out-dir", outDir,
        "--transform", transform,
        "--seed", String(seed),
        "--config", configPath,
      ],
      { encoding: "utf-8" },
    );
    if (result.error) {
      throw result.error;
    }
    if (result.status !== 0) {
      throw new Error(`diarkit augment failed (exit ${result.status}): ${result.stderr.trim()}`);
    }

    const log = JSON.parse(fs.readFileSync(path.join(outDir, "draws.json"), "utf-8"));
    const data = new Float32Array(view.rows * view.cols);
    for (let i = 0; i < view.rows; i++) {
      const clip = readFloat32Wav(path.join(outDir, log.outputs[i]));
      if (clip.samples.length !== view.cols) {
        throw new Error(`engine returned ${clip.samples.length} samples for row ${i}, expected ${view.cols}`);
      }
      data.set(clip.samples, i * view.cols);
    }
    const drawLog: BoundDrawLog = {
      applied: log.applied,
      changeType: log.change_type ?? null,
      rows: (log.rows ?? []).map((r: any): MaskDrawRecord => ({
        row: r.row,
        partner: r.partner,
        start: r.start,
        stop: r.stop,
        snrDb: r.snr_db,
        gain: r.gain,
        placement: r.placement,
      })),
    };
    return { data, applied: drawLog.applied, drawLog };
  } finally {
    if (!options.keepWorkDir) {
      fs.rmSync(workDir, { recursive: true, force: true });
    }
  }
}

/** Draw overlap / speaker change / nothing for the batch and apply it. */
export function boundApplyPolicy(
  view: BoundBatchView,
  policy: PolicyFields,
  seed: number,
  options?: EngineOptions,
): BoundResult {
  return runTransform("policy", view, policy, seed, options);
}

/** Always apply overlapped-speech augmentation. */
export function boundOverlapAugment(
  view: BoundBatchView,
  policy: PolicyFields,
  seed: number,
  options?: EngineOptions,
): BoundResult {
  return runTransform("overlap", view, policy, seed, options);
}

/** Always apply speaker-change augmentation. */
export function boundChangeAugment(
  view: BoundBatchView,
  policy: PolicyFields,
  seed: number,
  options?: EngineOptions,
): BoundResult {
  return runTransform("change", view, policy, seed, options);
}
