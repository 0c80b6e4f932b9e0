import assert from "node:assert/strict";
import { test } from "node:test";

import { boundApplyPolicy } from "../src/index";
import { bytesEqual, checksum, prng, randomBatch, referenceApply } from "./helpers";

// Engine parity: the CLI-backed binding and the engine's in-memory API
// must produce bit-identical float32 buffers and matching draw logs,
// and the caller's input buffer must come back untouched.

test("bound_apply_policy is bit-identical to the engine on 100 random batches", () => {
  const rand = prng(20240802);
  for (let i = 0; i < 100; i++) {
    const rows = 2 + Math.floor(rand() * 5); // 2..6
    const cols = rand() < 0.5 ? 12000 : 24000;
    const view = randomBatch(1000 + i, rows, cols);
    const before = checksum(view.data);

    const bound = boundApplyPolicy(view, { pOverlap: 0.4, pChange: 0.4 }, i);
    const reference = referenceApply(view, { pOverlap: 0.4, pChange: 0.4 }, i);

    assert.equal(checksum(view.data), before, `input mutated on batch ${i}`);
    assert.ok(bytesEqual(bound.data, reference.data), `buffer mismatch on batch ${i}`);
    assert.equal(bound.applied, reference.log.applied, `applied mismatch on batch ${i}`);
    assert.equal(bound.drawLog.changeType, reference.log.change_type ?? null);
    assert.equal(bound.drawLog.rows.length, reference.log.rows.length);
    for (let r = 0; r < bound.drawLog.rows.length; r++) {
      const got = bound.drawLog.rows[r];
      const want = reference.log.rows[r];
      assert.equal(got.row, want.row);
      assert.equal(got.partner, want.partner);
      assert.equal(got.start, want.start);
      assert.equal(got.stop, want.stop);
      assert.equal(got.gain, want.gain);
      assert.equal(got.snrDb, want.snr_db);
      assert.equal(got.placement, want.placement);
    }
  }
});
