/**
 * Backend selection.  The wasm backend (XNNPack) runs inference several
 * times faster than the plain JS backend, but it lacks the convolution
 * gradient kernels, so anything that trains must stay on 'cpu'.
 */

import * as tf from '@tensorflow/tfjs';
import '@tensorflow/tfjs-backend-wasm';

export async function initBackend(prefer: 'wasm' | 'cpu'): Promise<string> {
  if (prefer === 'wasm' && (await tf.setBackend('wasm'))) {
    await tf.ready();
    return tf.getBackend();
  }
  await tf.setBackend('cpu');
  await tf.ready();
  return tf.getBackend();
}
