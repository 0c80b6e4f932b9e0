import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { boundApplyPolicy, boundChangeAugment, boundOverlapAugment } from "../src/index";
import { readFloat32Wav, writeFloat32Wav } from "../src/wav";
import { bytesEqual, checksum, prng, randomBatch } from "./helpers";

test("float32 wav round trip is bit exact", () => {
  const rand = prng(1);
  const samples = new Float32Array(8000);
  for (let i = 0; i < samples.length; i++) samples[i] = Math.fround(rand() * 2 - 1);
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "wavtest-"));
  try {
    const file = path.join(dir, "x.wav");
    writeFloat32Wav(file, samples, 16000);
    const got = readFloat32Wav(file);
    assert.equal(got.sampleRate, 16000);
    assert.ok(bytesEqual(got.samples, samples));
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
});

test("zero-probability policy returns the input unchanged", () => {
  const view = randomBatch(2, 3, 12000);
  const before = checksum(view.data);
  const result = boundApplyPolicy(view, { pOverlap: 0, pChange: 0 }, 7);
  assert.equal(result.applied, "none");
  assert.equal(result.drawLog.rows.length, 0);
  assert.ok(bytesEqual(result.data, view.data));
  assert.notEqual(result.data, view.data); // fresh buffer, not the caller's
  assert.equal(checksum(view.data), before);
});

test("same seed reproduces the same buffer", () => {
  const view = randomBatch(3, 4, 12000);
  const a = boundOverlapAugment(view, {}, 123);
  const b = boundOverlapAugment(view, {}, 123);
  assert.ok(bytesEqual(a.data, b.data));
  assert.deepEqual(a.drawLog, b.drawLog);
  const c = boundOverlapAugment(view, {}, 124);
  assert.ok(!bytesEqual(a.data, c.data));
});

test("forced overlap logs a draw per row with in-range supports", () => {
  const view = randomBatch(4, 5, 24000);
  const result = boundOverlapAugment(view, {}, 3);
  assert.equal(result.applied, "overlap");
  assert.equal(result.drawLog.rows.length, 5);
  for (const d of result.drawLog.rows) {
    assert.notEqual(d.partner, d.row);
    const seconds = (d.stop - d.start) / view.sampleRate;
    assert.ok(seconds >= 0.2 && seconds <= 0.7, `support ${seconds}s`);
    assert.ok(d.snrDb >= 0 && d.snrDb <= 20);
  }
});

test("forced change uses one placement for the whole batch", () => {
  const view = randomBatch(5, 6, 24000);
  const result = boundChangeAugment(view, {}, 11);
  assert.equal(result.applied, "change");
  assert.notEqual(result.drawLog.changeType, null);
  const placements = new Set(result.drawLog.rows.map((d) => d.placement));
  assert.equal(placements.size, 1);
  for (const d of result.drawLog.rows) {
    const seconds = (d.stop - d.start) / view.sampleRate;
    assert.ok(seconds >= 0.2 && seconds <= 0.3, `support ${seconds}s`);
  }
});

test("duplicate speakers are rejected", () => {
  const view = randomBatch(6, 2, 12000);
  view.speakers = ["same", "same"];
  assert.throws(() => boundApplyPolicy(view, {}, 0), /one utterance per speaker/);
});

test("non-contiguous buffers are rejected", () => {
  const view = randomBatch(7, 2, 12000);
  view.data = view.data.subarray(0, view.data.length - 1);
  assert.throws(() => boundApplyPolicy(view, {}, 0), /contiguous/);
});

test("single-row batches are rejected when a partner is needed", () => {
  const view = randomBatch(8, 1, 12000);
  assert.throws(() => boundOverlapAugment(view, {}, 0), /at least 2 rows/);
  assert.throws(() => boundApplyPolicy(view, { pOverlap: 0.5, pChange: 0 }, 0), /at least 2 rows/);
  // with zero probabilities a single row is fine
  const result = boundApplyPolicy(view, { pOverlap: 0, pChange: 0 }, 0);
  assert.equal(result.applied, "none");
});

test("all three policy outcomes occur", () => {
  const view = randomBatch(9, 2, 12000);
  const seen = new Set<string>();
  for (let seed = 0; seed < 40 && seen.size < 3; seed++) {
    seen.add(boundApplyPolicy(view, { pOverlap: 0.25, pChange: 0.25 }, seed).applied);
  }
  assert.deepEqual([...seen].sort(), ["change", "none", "overlap"]);
});
