/** Command line: train the full filter on a corpus and export the bundle. */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { initBackend } from './backend';
import { buildFilterModel, FULL_BLOCKS, parameterCount } from './model';
import { exportBundle, trainFull } from './train';

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('train-full', 'train the 12-block filter and export weights + vectors', (y) =>
      y.option('corpus', { type: 'string', demandOption: true, describe: 'directory of .pgm images' })
        .option('qp', { type: 'number', default: 37 })
        .option('steps', { type: 'number', default: 200 })
        .option('batch', { type: 'number', default: 16 })
        .option('lr', { type: 'number', default: 1e-4 })
        .option('seed', { type: 'number', default: 0 })
        .option('blocks', { type: 'number', default: FULL_BLOCKS })
        .option('patch', { type: 'number', default: 32 })
        .option('out', { type: 'string', default: 'out' })
        .option('codec-cmd', { type: 'string', default: 'nivc' }))
    .command('export-init', 'export an untrained (initialization) bundle', (y) =>
      y.option('qp', { type: 'number', default: 37 })
        .option('seed', { type: 'number', default: 0 })
        .option('blocks', { type: 'number', default: FULL_BLOCKS })
        .option('cases', { type: 'number', default: 8 })
        .option('out', { type: 'string', default: 'out' }))
    .demandCommand(1)
    .strict()
    .parse();

  const cmd = argv._[0];
  if (cmd === 'train-full') {
    // conv gradients only exist on the cpu backend
    console.log(`backend: ${await initBackend('cpu')}`);
    const { result } = await trainFull(argv.corpus as string, argv.qp as number,
      argv.steps as number, argv.out as string, {
        qp: argv.qp as number,
        steps: argv.steps as number,
        batchSize: argv.batch as number,
        learningRate: argv.lr as number,
        seed: argv.seed as number,
        numBlocks: argv.blocks as number,
        patchSize: argv.patch as number,
        codecCmd: argv['codec-cmd'] as string,
      });
    console.log(`validation mse ${result.valMseStart.toExponential(4)} -> ${result.valMseEnd.toExponential(4)}`);
    return 0;
  }
  if (cmd === 'export-init') {
    console.log(`backend: ${await initBackend('wasm')}`);
    const model = buildFilterModel(argv.blocks as number, argv.seed as number);
    console.log(`parameters: ${parameterCount(model)}`);
    const paths = exportBundle(model, argv.blocks as number, argv.out as string,
      argv.qp as number, argv.cases as number, argv.seed as number);
    console.log(`exported ${paths.weights} and ${paths.vectors}`);
    return 0;
  }
  return 2;
}

main().then((code) => process.exit(code)).catch((err) => {
  console.error(`error: ${err.message ?? err}`);
  process.exit(1);
});
