import { spawnSync } from "node:child_process";
import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { BoundBatchView, PolicyFields } from "../src/index";

/** mulberry32: small deterministic PRNG for test data */
export function prng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomBatch(seed: number, rows: number, cols: number, sampleRate = 16000): BoundBatchView {
  const rand = prng(seed);
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.fround(rand() * 1.6 - 0.8);
  }
  const speakers = Array.from({ length: rows }, (_, i) => `spk${i}`);
  return { data, rows, cols, speakers, sampleRate };
}

export function checksum(data: Float32Array): string {
  return crypto
    .createHash("sha256")
    .update(Buffer.from(data.buffer, data.byteOffset, data.byteLength))
    .digest("hex");
}

export interface ReferenceResult {
  data: Float32Array;
  log: { applied: string; change_type: string | null; rows: any[] };
}

/** Run the engine's in-memory API directly; the non-CLI side of the parity check. */
export function referenceApply(
  view: BoundBatchView,
  policy: PolicyFields,
  seed: number,
  transform: "policy" | "overlap" | "change" = "policy",
): ReferenceResult {
  const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "diarkit-ref-"));
  try {
    const inputPath = path.join(workDir, "input.f32");
    const outputPath = path.join(workDir, "output.f32");
    const logPath = path.join(workDir, "log.json");
    fs.writeFileSync(inputPath, Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength));
    const spec = {
      input: inputPath,
      output: outputPath,
      log: logPath,
      rows: view.rows,
      cols: view.cols,
      speakers: view.speakers,
      sample_rate: view.sampleRate,
      seed,
      transform,
      policy: {
        p_overlap: policy.pOverlap ?? 0.25,
        p_change: policy.pChange ?? 0.25,
        overlap_snr_db: policy.overlapSnrDb ?? [0, 20],
        change_snr_db: policy.changeSnrDb ?? [-5, 15],
        overlap_crop_s: policy.overlapCropS ?? [0.2, 0.7],
        change_crop_s: policy.changeCropS ?? [0.2, 0.3],
      },
    };
    const specPath = path.join(workDir, "spec.json");
    fs.writeFileSync(specPath, JSON.stringify(spec));
    const script = path.join(__dirname, "..", "..", "scripts", "reference_apply.py");
    const result = spawnSync("python3", [script, specPath], { encoding: "utf-8" });
    if (result.status !== 0) {
      throw new Error(`reference_apply.py failed: ${result.stderr}`);
    }
    const raw = fs.readFileSync(outputPath);
    const copy = Buffer.alloc(raw.length);
    raw.copy(copy);
    return {
      data: new Float32Array(copy.buffer, copy.byteOffset, copy.length / 4),
      log: JSON.parse(fs.readFileSync(logPath, "utf-8")),
    };
  } finally {
    fs.rmSync(workDir, { recursive: true, force: true });
  }
}

export function bytesEqual(a: Float32Array, b: Float32Array): boolean {
  return (
    a.length === b.length &&
    Buffer.from(a.buffer, a.byteOffset, a.byteLength).equals(
      Buffer.from(b.buffer, b.byteOffset, b.byteLength),
    )
  );
}
