/**
 * vef-exporter command line.
 *
 *   node dist/src/cli.js --images DIR --out DIR --mode grid --grid KxD [--seed N]
 *   node dist/src/cli.js --images DIR --out DIR --mode roi [--top 10] [--roi-dim N] [--seed N]
 *
 * Grid geometry is a required flag in grid mode: the input resolution feeding
 * a backbone is never assumed, so neither is the output geometry.
 */

import { exportGridFeatures, exportRoiFeatures } from './export';

interface Args {
  images?: string;
  out?: string;
  mode?: string;
  grid?: string;
  top: number;
  roiDim: number;
  seed: number;
}

function usage(message?: string): never {
  if (message) console.error(`vef-exporter: ${message}`);
  console.error(
    'usage: vef-exporter --images DIR --out DIR --mode grid --grid KxD [--seed N]\n' +
    '       vef-exporter --images DIR --out DIR --mode roi [--top N] [--roi-dim N] [--seed N]',
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Args {
  const args: Args = { top: 10, roiDim: 2048, seed: 0 };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) usage(`${flag} needs a value`);
      return argv[++i];
    };
    switch (flag) {
      case '--images': args.images = next(); break;
      case '--out': args.out = next(); break;
      case '--mode': args.mode = next(); break;
      case '--grid': args.grid = next(); break;
      case '--top': args.top = Number(next()); break;
      case '--roi-dim': args.roiDim = Number(next()); break;
      case '--seed': args.seed = Number(next()); break;
      default: usage(`unknown flag ${flag}`);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  if (!args.images || !args.out) usage('--images and --out are required');
  if (args.mode !== 'grid' && args.mode !== 'roi') usage('--mode must be grid or roi');

  if (args.mode === 'grid') {
    if (!args.grid) usage('grid mode requires --grid KxD (geometry is never assumed)');
    const match = /^(\d+)x(\d+)$/.exec(args.grid);
    if (!match) usage(`--grid expects KxD, got ${args.grid}`);
    const geometry = { k: Number(match[1]), d: Number(match[2]) };
    const manifest = exportGridFeatures(args.images, args.out, geometry, { seed: args.seed });
    console.log(
      `wrote ${manifest.records.length} grid file(s) to ${args.out} ` +
      `(${manifest.skipped.length} skipped)`,
    );
    return 0;
  }
  if (!Number.isInteger(args.top) || args.top < 1) usage(`--top must be a positive integer`);
  if (!Number.isInteger(args.roiDim) || args.roiDim < 1) usage(`--roi-dim must be a positive integer`);
  const manifest = exportRoiFeatures(args.images, args.out, args.top, args.roiDim, {
    seed: args.seed,
  });
  console.log(
    `wrote ${manifest.records.length} roi file(s) to ${args.out} ` +
    `(${manifest.skipped.length} skipped)`,
  );
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
