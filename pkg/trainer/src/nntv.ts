/**
 * NNTV cross-check vector files: "NNTV" | u32 case count | per case
 * 1024 input floats + 1024 output floats, little-endian.  The outputs are
 * the trainer's own forward pass over the exact exported weights, so any
 * other implementation loading the weight file can verify its inference.
 */

import * as fs from 'fs';

export const MAGIC = 'NNTV';
export const BLOCK_VALUES = 32 * 32;

export interface VectorCase {
  input: Float32Array;  // 1024 values in [0, 1]
  output: Float32Array; // 1024 values
}

export function encodeVectorFile(cases: VectorCase[]): Buffer {
  const head = Buffer.alloc(8);
  head.write(MAGIC, 0, 'ascii');
  head.writeUInt32LE(cases.length, 4);
  const body = Buffer.alloc(cases.length * 2 * BLOCK_VALUES * 4);
  let off = 0;
  for (const c of cases) {
    if (c.input.length !== BLOCK_VALUES || c.output.length !== BLOCK_VALUES) {
      throw new Error('vector cases must hold 32x32 blocks');
    }
    for (const v of c.input) { body.writeFloatLE(v, off); off += 4; }
    for (const v of c.output) { body.writeFloatLE(v, off); off += 4; }
  }
  return Buffer.concat([head, body]);
}

export function writeVectorFile(path: string, cases: VectorCase[]): void {
  fs.writeFileSync(path, encodeVectorFile(cases));
}

export function readVectorFile(path: string): VectorCase[] {
  const data = fs.readFileSync(path);
  if (data.subarray(0, 4).toString('ascii') !== MAGIC) throw new Error(`${path}: bad magic`);
  const count = data.readUInt32LE(4);
  const expected = 8 + count * 2 * BLOCK_VALUES * 4;
  if (data.length < expected) throw new Error(`${path}: truncated vector file`);
  const cases: VectorCase[] = [];
  let off = 8;
  for (let i = 0; i < count; i++) {
    const input = new Float32Array(BLOCK_VALUES);
    const output = new Float32Array(BLOCK_VALUES);
    for (let j = 0; j < BLOCK_VALUES; j++) { input[j] = data.readFloatLE(off); off += 4; }
    for (let j = 0; j < BLOCK_VALUES; j++) { output[j] = data.readFloatLE(off); off += 4; }
    cases.push({ input, output });
  }
  return cases;
}
