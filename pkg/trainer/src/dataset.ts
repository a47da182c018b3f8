/**
 * Training data: corpus images are degraded by the codec package's own
 * encoder (invoked through its CLI), and aligned 32x32 luma blocks of
 * (reconstruction, source) become the training pairs.
 */

import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

export interface GrayImage {
  width: number;
  height: number;
  samples: Uint8Array; // row-major
}

export interface PatchPair {
  degraded: Float32Array; // patch values in [0, 1]
  target: Float32Array;
  size: number;
}

export function readPgm(file: string): GrayImage {
  const data = fs.readFileSync(file);
  const fields: string[] = [];
  let pos = 0;
  while (fields.length < 4) {
    while (pos < data.length && /\s/.test(String.fromCharCode(data[pos]))) pos++;
    if (data[pos] === 0x23) { // '#' comment
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < data.length && !/\s/.test(String.fromCharCode(data[pos]))) pos++;
    fields.push(data.subarray(start, pos).toString('ascii'));
  }
  if (fields[0] !== 'P5') throw new Error(`${file}: not a binary PGM`);
  const [width, height, maxval] = fields.slice(1).map(Number);
  if (maxval !== 255) throw new Error(`${file}: unsupported maxval ${maxval}`);
  pos++;
  const raster = data.subarray(pos, pos + width * height);
  if (raster.length < width * height) throw new Error(`${file}: short raster`);
  return { width, height, samples: new Uint8Array(raster) };
}

export function writePgm(file: string, img: GrayImage): void {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, 'ascii');
  fs.writeFileSync(file, Buffer.concat([header, Buffer.from(img.samples)]));
}

/** Encode + reconstruct one image through the codec CLI (filter and neural
 * mode off) and return the decoded reconstruction. */
export function degradeWithCodec(image: string, qp: number, codecCmd = 'nivc'): GrayImage {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nivc-trainer-'));
  try {
    const stream = path.join(dir, 'x.ncv');
    const recon = path.join(dir, 'x.pgm');
    execFileSync(codecCmd, ['encode', '--input', image, '--output', stream,
      '--recon', recon, '--qp', String(qp)], { stdio: 'pipe' });
    return readPgm(recon);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

export function listCorpus(corpusDir: string): string[] {
  return fs.readdirSync(corpusDir)
    .filter((f) => f.toLowerCase().endsWith('.pgm'))
    .sort()
    .map((f) => path.join(corpusDir, f));
}

function extractGrid(src: GrayImage, deg: GrayImage, size: number): PatchPair[] {
  const pairs: PatchPair[] = [];
  for (let y0 = 0; y0 + size <= src.height; y0 += size) {
    for (let x0 = 0; x0 + size <= src.width; x0 += size) {
      const target = new Float32Array(size * size);
      const degraded = new Float32Array(size * size);
      for (let y = 0; y < size; y++) {
        for (let x = 0; x < size; x++) {
          target[y * size + x] = src.samples[(y0 + y) * src.width + x0 + x] / 255;
          degraded[y * size + x] = deg.samples[(y0 + y) * deg.width + x0 + x] / 255;
        }
      }
      pairs.push({ degraded, target, size });
    }
  }
  return pairs;
}

export function buildDataset(
  images: string[],
  qp: number,
  patchSize = 32,
  codecCmd = 'nivc',
): PatchPair[] {
  const pairs: PatchPair[] = [];
  for (const file of images) {
    const src = readPgm(file);
    const deg = degradeWithCodec(file, qp, codecCmd);
    pairs.push(...extractGrid(src, deg, patchSize));
  }
  if (pairs.length === 0) throw new Error('corpus produced no training pairs');
  return pairs;
}
