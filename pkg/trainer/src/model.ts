/**
 * The 12-block residual restoration network, mirrored layer for layer from
 * the codec package: two 3x3/64 stem convolutions, N three-branch blocks
 * (1x1 bottlenecks to 32 maps; bare / parallel 1x3+3x1 / serial 3x3 then
 * parallel 1x3+3x1), a 3x3 convolution back to one map and an input add.
 *
 * Layer names equal the codec's graph node ids so exported weights map 1:1.
 */

import * as tf from '@tensorflow/tfjs';

export const FULL_BLOCKS = 12;
export const EXPECTED_FULL_PARAMETERS = 475_233;

/** Weighted layer ids in the codec's canonical save order. */
export function weightedLayerIds(numBlocks: number): string[] {
  const ids = ['pre1', 'pre2'];
  for (let i = 1; i <= numBlocks; i++) {
    ids.push(
      `b${i}_a1x1`, `b${i}_b1x1`, `b${i}_b1x3`, `b${i}_b3x1`,
      `b${i}_c1x1`, `b${i}_c3x3`, `b${i}_c1x3`, `b${i}_c3x1`,
    );
  }
  ids.push('post');
  return ids;
}

function conv(
  x: tf.SymbolicTensor,
  filters: number,
  kernel: [number, number],
  name: string,
  seed: number,
  activation: 'relu' | undefined,
): tf.SymbolicTensor {
  return tf.layers
    .conv2d({
      name,
      filters,
      kernelSize: kernel,
      padding: 'same',
      activation,
      useBias: true,
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      biasInitializer: 'zeros',
    })
    .apply(x) as tf.SymbolicTensor;
}

export function buildFilterModel(numBlocks = FULL_BLOCKS, seed = 0): tf.LayersModel {
  const input = tf.input({ shape: [null, null, 1], name: 'block' });
  let s = seed;
  const next = () => s++;

  let x = conv(input, 64, [3, 3], 'pre1', next(), 'relu');
  x = conv(x, 64, [3, 3], 'pre2', next(), 'relu');
  for (let i = 1; i <= numBlocks; i++) {
    const a = conv(x, 32, [1, 1], `b${i}_a1x1`, next(), 'relu');
    const b0 = conv(x, 32, [1, 1], `b${i}_b1x1`, next(), 'relu');
    const b1 = conv(b0, 32, [1, 3], `b${i}_b1x3`, next(), 'relu');
    const b2 = conv(b0, 32, [3, 1], `b${i}_b3x1`, next(), 'relu');
    const c0 = conv(x, 32, [1, 1], `b${i}_c1x1`, next(), 'relu');
    const c3 = conv(c0, 32, [3, 3], `b${i}_c3x3`, next(), 'relu');
    const c1 = conv(c3, 32, [1, 3], `b${i}_c1x3`, next(), 'relu');
    const c2 = conv(c3, 32, [3, 1], `b${i}_c3x1`, next(), 'relu');
    x = tf.layers
      .concatenate({ name: `b${i}_out`, axis: -1 })
      .apply([a, b1, b2, c1, c2]) as tf.SymbolicTensor;
  }
  const post = conv(x, 1, [3, 3], 'post', next(), undefined);
  const out = tf.layers.add({ name: 'res' }).apply([post, input]) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: out, name: `inception${numBlocks}` });
}

export function parameterCount(model: tf.LayersModel): number {
  return model.countParams();
}

/**
 * Abort unless the mirrored architecture reproduces the expected parameter
 * count exactly; called before any training starts.
 */
export function assertFullParameterCount(model: tf.LayersModel): void {
  const got = parameterCount(model);
  if (got !== EXPECTED_FULL_PARAMETERS) {
    throw new Error(
      `architecture mirror broken: ${got} parameters, expected ${EXPECTED_FULL_PARAMETERS}`,
    );
  }
}

/** Extract a conv layer's weights as [out, in, kh, kw] plus its bias. */
export function layerWeightsOutInHw(
  model: tf.LayersModel,
  name: string,
): { weights: Float32Array; shape: number[]; bias: Float32Array } {
  const layer = model.getLayer(name);
  const [kernel, bias] = layer.getWeights();
  // tfjs conv kernels are [kh, kw, in, out]
  const perm = tf.transpose(kernel, [3, 2, 0, 1]);
  const shape = perm.shape.slice();
  const weights = perm.dataSync() as Float32Array;
  perm.dispose();
  const biasData = bias.dataSync() as Float32Array;
  return { weights, shape, bias: biasData };
}

/** Load [out, in, kh, kw] weights + bias back into a conv layer. */
export function setLayerWeightsOutInHw(
  model: tf.LayersModel,
  name: string,
  weights: Float32Array,
  shape: number[],
  bias: Float32Array,
): void {
  const kernel = tf.tensor4d(weights, shape as [number, number, number, number]);
  const back = tf.transpose(kernel, [2, 3, 1, 0]); // -> [kh, kw, in, out]
  model.getLayer(name).setWeights([back, tf.tensor1d(bias)]);
  kernel.dispose();
}
