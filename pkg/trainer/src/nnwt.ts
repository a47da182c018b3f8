/**
 * NNWT weight files, shared with the codec package (little-endian, no
 * padding): "NNWT" | u32 version=1 | u16 tag length + tag | u32 node count |
 * per node: u16 id length + id | u8 rank | u32 dims... | f32 weights... |
 * u32 bias length | f32 bias...
 */

import * as fs from 'fs';

export const MAGIC = 'NNWT';
export const VERSION = 1;

export interface NodeWeights {
  id: string;
  shape: number[];
  weights: Float32Array;
  bias: Float32Array;
}

export function encodeWeightFile(tag: string, nodes: NodeWeights[]): Buffer {
  const parts: Buffer[] = [];
  const tagBytes = Buffer.from(tag, 'utf8');
  const header = Buffer.alloc(4 + 4 + 2);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt16LE(tagBytes.length, 8);
  parts.push(header, tagBytes);
  const count = Buffer.alloc(4);
  count.writeUInt32LE(nodes.length, 0);
  parts.push(count);

  for (const node of nodes) {
    const idBytes = Buffer.from(node.id, 'utf8');
    const meta = Buffer.alloc(2 + idBytes.length + 1 + 4 * node.shape.length);
    let off = 0;
    meta.writeUInt16LE(idBytes.length, off); off += 2;
    idBytes.copy(meta, off); off += idBytes.length;
    meta.writeUInt8(node.shape.length, off); off += 1;
    for (const dim of node.shape) {
      meta.writeUInt32LE(dim, off); off += 4;
    }
    const wbuf = Buffer.alloc(4 * node.weights.length);
    for (let i = 0; i < node.weights.length; i++) wbuf.writeFloatLE(node.weights[i], 4 * i);
    const blen = Buffer.alloc(4);
    blen.writeUInt32LE(node.bias.length, 0);
    const bbuf = Buffer.alloc(4 * node.bias.length);
    for (let i = 0; i < node.bias.length; i++) bbuf.writeFloatLE(node.bias[i], 4 * i);
    parts.push(meta, wbuf, blen, bbuf);
  }
  return Buffer.concat(parts);
}

export function writeWeightFile(path: string, tag: string, nodes: NodeWeights[]): void {
  fs.writeFileSync(path, encodeWeightFile(tag, nodes));
}

export function readWeightFile(path: string): { tag: string; nodes: NodeWeights[] } {
  const data = fs.readFileSync(path);
  let off = 0;
  const take = (n: number): Buffer => {
    if (off + n > data.length) throw new Error(`${path}: truncated weight file`);
    const out = data.subarray(off, off + n);
    off += n;
    return out;
  };
  if (take(4).toString('ascii') !== MAGIC) throw new Error(`${path}: bad magic`);
  const version = take(4).readUInt32LE(0);
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const tag = take(take(2).readUInt16LE(0)).toString('utf8');
  const count = take(4).readUInt32LE(0);
  const nodes: NodeWeights[] = [];
  for (let n = 0; n < count; n++) {
    const id = take(take(2).readUInt16LE(0)).toString('utf8');
    const rank = take(1).readUInt8(0);
    const shape: number[] = [];
    for (let r = 0; r < rank; r++) shape.push(take(4).readUInt32LE(0));
    const wcount = shape.reduce((a, b) => a * b, 1);
    const wraw = take(4 * wcount);
    const weights = new Float32Array(wcount);
    for (let i = 0; i < wcount; i++) weights[i] = wraw.readFloatLE(4 * i);
    const bcount = take(4).readUInt32LE(0);
    const braw = take(4 * bcount);
    const bias = new Float32Array(bcount);
    for (let i = 0; i < bcount; i++) bias[i] = braw.readFloatLE(4 * i);
    nodes.push({ id, shape, weights, bias });
  }
  return { tag, nodes };
}
