/**
 * Minimal mono 32-bit float WAV I/O.
 *
 * Float WAV containers round-trip IEEE float32 samples bit for bit,
 * which is what keeps the engine parity checks exact. Little-endian
 * hosts only (every platform this runs on).
 */

import * as fs from "node:fs";

export function writeFloat32Wav(filePath: string, samples: Float32Array, sampleRate: number): void {
  const payload = Buffer.from(samples.buffer, samples.byteOffset, samples.byteLength);
  const header = Buffer.alloc(44);
  header.write("RIFF", 0, "ascii");
  header.writeUInt32LE(36 + payload.length, 4);
  header.write("WAVE", 8, "ascii");
  header.write("fmt ", 12, "ascii");
  header.writeUInt32LE(16, 16); // fmt chunk size
  header.writeUInt16LE(3, 20); // IEEE float
  header.writeUInt16LE(1, 22); // mono
  header.writeUInt32LE(sampleRate, 24);
  header.writeUInt32LE(sampleRate * 4, 28);
  header.writeUInt16LE(4, 32);
  header.writeUInt16LE(32, 34);
  header.write("data", 36, "ascii");
  header.writeUInt32LE(payload.length, 40);
  fs.writeFileSync(filePath, Buffer.concat([header, payload]));
}

export function readFloat32Wav(filePath: string): { samples: Float32Array; sampleRate: number } {
  const data = fs.readFileSync(filePath);
  if (data.length < 12 || data.toString("ascii", 0, 4) !== "RIFF" || data.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${filePath}: not a RIFF/WAVE file`);
  }
  let sampleRate = 0;
  let format = 0;
  let channels = 0;
  let bits = 0;
  let payload: Buffer | null = null;
  let pos = 12;
  while (pos + 8 <= data.length) {
    const chunkId = data.toString("ascii", pos, pos + 4);
    const size = data.readUInt32LE(pos + 4);
    if (chunkId === "fmt ") {
      format = data.readUInt16LE(pos + 8);
      channels = data.readUInt16LE(pos + 10);
      sampleRate = data.readUInt32LE(pos + 12);
      bits = data.readUInt16LE(pos + 22);
    } else if (chunkId === "data") {
      payload = data.subarray(pos + 8, pos + 8 + size);
    }
    pos += 8 + size + (size & 1);
  }
  if (payload === null || sampleRate === 0) {
    throw new Error(`${filePath}: missing fmt or data chunk`);
  }
  if (format !== 3 || channels !== 1 || bits !== 32) {
    throw new Error(`${filePath}: expected mono 32-bit float WAV (format ${format}, ${channels}ch, ${bits}bit)`);
  }
  const copy = Buffer.alloc(payload.length);
  payload.copy(copy);
  const samples = new Float32Array(copy.buffer, copy.byteOffset, copy.length / 4);
  return { samples, sampleRate };
}
