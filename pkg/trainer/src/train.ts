/**
 * Full-scale training of the restoration filter and bundle export: NNWT
 * weights plus NNTV forward-pass vectors evaluated with those exact weights.
 */

import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { PatchPair, buildDataset, listCorpus } from './dataset';
import {
  assertFullParameterCount,
  buildFilterModel,
  FULL_BLOCKS,
  layerWeightsOutInHw,
  weightedLayerIds,
} from './model';
import { VectorCase, writeVectorFile } from './nntv';
import { NodeWeights, writeWeightFile } from './nnwt';

export interface TrainOptions {
  qp: number;
  steps: number;
  batchSize?: number;
  learningRate?: number;
  seed?: number;
  numBlocks?: number;   // FULL_BLOCKS unless smoke-testing
  patchSize?: number;
  valFraction?: number;
  codecCmd?: string;
  log?: (line: string) => void;
}

export interface TrainResult {
  model: tf.LayersModel;
  lossCurve: number[];
  valMseStart: number;
  valMseEnd: number;
}

/** Deterministic PRNG (mulberry32) so batch order and vectors reproduce. */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function toBatch(pairs: PatchPair[], idx: number[]): { x: tf.Tensor4D; y: tf.Tensor4D } {
  const size = pairs[0].size;
  const x = new Float32Array(idx.length * size * size);
  const y = new Float32Array(idx.length * size * size);
  idx.forEach((i, n) => {
    x.set(pairs[i].degraded, n * size * size);
    y.set(pairs[i].target, n * size * size);
  });
  return {
    x: tf.tensor4d(x, [idx.length, size, size, 1]),
    y: tf.tensor4d(y, [idx.length, size, size, 1]),
  };
}

export function meanSquaredError(model: tf.LayersModel, pairs: PatchPair[]): number {
  if (pairs.length === 0) return NaN;
  return tf.tidy(() => {
    const { x, y } = toBatch(pairs, pairs.map((_, i) => i));
    const out = model.predict(x) as tf.Tensor4D;
    return tf.losses.meanSquaredError(y, out).dataSync()[0];
  });
}

export async function trainFilter(pairs: PatchPair[], options: TrainOptions): Promise<TrainResult> {
  const {
    steps, batchSize = 16, learningRate = 1e-4, seed = 0,
    numBlocks = FULL_BLOCKS, valFraction = 0.1, log = () => undefined,
  } = options;
  const model = buildFilterModel(numBlocks, seed);
  if (numBlocks === FULL_BLOCKS) assertFullParameterCount(model);
  model.compile({ optimizer: tf.train.adam(learningRate), loss: 'meanSquaredError' });

  const rng = makeRng(seed + 1);
  const valCount = Math.max(1, Math.floor(pairs.length * valFraction));
  const val = pairs.slice(0, valCount);
  const train = pairs.slice(valCount);
  if (train.length === 0) throw new Error('dataset too small to split off validation pairs');

  const valMseStart = meanSquaredError(model, val);
  log(`validation mse before training: ${valMseStart.toExponential(4)}`);

  const lossCurve: number[] = [];
  for (let step = 0; step < steps; step++) {
    const idx = Array.from({ length: batchSize }, () => Math.floor(rng() * train.length));
    const { x, y } = toBatch(train, idx);
    const loss = (await model.trainOnBatch(x, y)) as number;
    x.dispose();
    y.dispose();
    if (!Number.isFinite(loss)) throw new Error(`training diverged at step ${step}`);
    lossCurve.push(loss);
    if ((step + 1) % 10 === 0 || step === steps - 1) {
      log(`step ${step + 1}/${steps} loss ${loss.toExponential(4)}`);
    }
  }
  const valMseEnd = meanSquaredError(model, val);
  log(`validation mse after training: ${valMseEnd.toExponential(4)}`);
  return { model, lossCurve, valMseStart, valMseEnd };
}

export function modelToNodes(model: tf.LayersModel, numBlocks: number): NodeWeights[] {
  return weightedLayerIds(numBlocks).map((id) => {
    const { weights, shape, bias } = layerWeightsOutInHw(model, id);
    return { id, shape, weights, bias };
  });
}

export function exportVectors(model: tf.LayersModel, nCases: number, seed: number): VectorCase[] {
  const rng = makeRng(seed);
  const cases: VectorCase[] = [];
  for (let i = 0; i < nCases; i++) {
    const input = new Float32Array(1024);
    for (let j = 0; j < 1024; j++) input[j] = Math.fround(rng());
    const output = tf.tidy(() => {
      const x = tf.tensor4d(input, [1, 32, 32, 1]);
      return (model.predict(x) as tf.Tensor4D).dataSync() as Float32Array;
    });
    cases.push({ input, output: Float32Array.from(output) });
  }
  return cases;
}

export interface ExportBundlePaths {
  weights: string;
  vectors: string;
}

export function exportBundle(
  model: tf.LayersModel,
  numBlocks: number,
  outDir: string,
  qp: number,
  nCases: number,
  seed: number,
): ExportBundlePaths {
  fs.mkdirSync(outDir, { recursive: true });
  const weights = path.join(outDir, `full_qp${qp}.nnwt`);
  writeWeightFile(weights, `inception${numBlocks}`, modelToNodes(model, numBlocks));
  const vectors = path.join(outDir, `vectors_qp${qp}.nntv`);
  writeVectorFile(vectors, exportVectors(model, nCases, seed));
  return { weights, vectors };
}

/** End-to-end entry: corpus -> codec-degraded dataset -> training -> bundle. */
export async function trainFull(
  corpusDir: string,
  qp: number,
  steps: number,
  outDir: string,
  options: Partial<TrainOptions> = {},
): Promise<{ paths: ExportBundlePaths; result: TrainResult }> {
  const log = options.log ?? ((line: string) => console.log(line));
  const numBlocks = options.numBlocks ?? FULL_BLOCKS;
  const images = listCorpus(corpusDir);
  if (images.length === 0) throw new Error(`no .pgm images under ${corpusDir}`);
  log(`degrading ${images.length} corpus images at qp ${qp} via the codec CLI`);
  const pairs = buildDataset(images, qp, options.patchSize ?? 32, options.codecCmd ?? 'nivc');
  log(`dataset: ${pairs.length} patch pairs`);
  const result = await trainFilter(pairs, { ...options, qp, steps, numBlocks, log });
  const paths = exportBundle(result.model, numBlocks, outDir, qp, 8, options.seed ?? 0);
  log(`exported ${paths.weights} and ${paths.vectors}`);
  return { paths, result };
}
