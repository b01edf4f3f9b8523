#!/usr/bin/env node
/** levyspec-plot --csv trials.csv [--csv more.csv] --group-by n --truth 1.0 --out fig.png */

import { SchemaError } from "./csv";
import { renderToFiles } from "./boxplot";

interface Args {
  csv: string[];
  groupBy: string;
  truth: number;
  out: string;
  title?: string;
}

export function parseArgs(argv: string[]): Args {
  const csv: string[] = [];
  let groupBy = "";
  let truth = Number.NaN;
  let out = "";
  let title: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${a}`);
      return argv[++i];
    };
    switch (a) {
      case "--csv": csv.push(next()); break;
      case "--group-by": groupBy = next(); break;
      case "--truth": truth = Number(next()); break;
      case "--out": out = next(); break;
      case "--title": title = next(); break;
      default: throw new Error(`unknown argument ${a}`);
    }
  }
  if (csv.length === 0 || !groupBy || !out || !Number.isFinite(truth)) {
    throw new Error(
      "usage: levyspec-plot --csv trials.csv --group-by <column> --truth <alpha> --out fig.png");
  }
  return { csv, groupBy, truth, out, title };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`);
    return 2;
  }
  try {
    const sidecar = renderToFiles({
      csvPaths: args.csv,
      groupBy: args.groupBy,
      truth: args.truth,
      outPath: args.out,
      title: args.title,
    });
    process.stdout.write(`wrote ${args.out} and ${sidecar}\n`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`schema error: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
