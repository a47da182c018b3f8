export { initBackend } from './backend';
export { buildFilterModel, assertFullParameterCount, parameterCount, weightedLayerIds,
  layerWeightsOutInHw, setLayerWeightsOutInHw, FULL_BLOCKS, EXPECTED_FULL_PARAMETERS } from './model';
export { encodeWeightFile, writeWeightFile, readWeightFile } from './nnwt';
export type { NodeWeights } from './nnwt';
export { encodeVectorFile, writeVectorFile, readVectorFile, BLOCK_VALUES } from './nntv';
export type { VectorCase } from './nntv';
export { readPgm, writePgm, degradeWithCodec, buildDataset, listCorpus } from './dataset';
export type { GrayImage, PatchPair } from './dataset';
export { trainFilter, trainFull, exportBundle, exportVectors, meanSquaredError, makeRng } from './train';
export type { TrainOptions, TrainResult } from './train';
