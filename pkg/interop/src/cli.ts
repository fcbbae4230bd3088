#!/usr/bin/env node
/**
 * flitelite-verify: exercise a running server from a second,
 * independently written codec.
 *
 *   flitelite-verify --host H --port P --perf 1000000
 *   flitelite-verify --host H --port P --dataset mytable
 *   flitelite-verify --golden path/to/corpus
 *
 * Exactly one of --perf / --dataset / --golden must be given. Exit code 0
 * means every check passed; 1 means a mismatch, a server-side error, or a
 * malformed reply (reported with the byte offset where decoding stopped);
 * 2 means the command line itself was wrong.
 */

import { pathToFileURL } from "node:url";

import { checkGoldenDir } from "./golden.js";
import { fetchTable } from "./table.js";
import { fetchAndVerify } from "./verify.js";
import { RemoteError } from "./wire.js";

const USAGE =
  "usage: flitelite-verify [--host HOST] [--port PORT] " +
  "(--perf RECORDS | --dataset NAME | --golden DIR)";

interface Options {
  host: string;
  port: number | null;
  perf: number | null;
  dataset: string | null;
  golden: string | null;
}

function fail(message: string): never {
  console.error(message);
  console.error(USAGE);
  process.exit(2);
}

export function parseArgs(argv: string[]): Options {
  const opts: Options = { host: "127.0.0.1", port: null, perf: null, dataset: null, golden: null };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i]!;
    const value = argv[i + 1];
    const need = (): string => {
      if (value === undefined) fail(`${flag} needs a value`);
      i++;
      return value;
    };
    switch (flag) {
      case "--host":
        opts.host = need();
        break;
      case "--port": {
        const text = need();
        const port = Number(text);
        if (!Number.isInteger(port) || port < 1 || port > 65535) {
          fail(`--port must be 1..65535, got ${text}`);
        }
        opts.port = port;
        break;
      }
      case "--perf": {
        const text = need();
        const records = Number(text);
        if (!Number.isInteger(records) || records < 0) {
          fail(`--perf must be a non-negative integer, got ${text}`);
        }
        opts.perf = records;
        break;
      }
      case "--dataset":
        opts.dataset = need();
        break;
      case "--golden":
        opts.golden = need();
        break;
      default:
        fail(`unknown argument ${flag}`);
    }
  }
  const modes = [opts.perf !== null, opts.dataset !== null, opts.golden !== null];
  if (modes.filter(Boolean).length !== 1) {
    fail("give exactly one of --perf, --dataset, --golden");
  }
  if (opts.golden === null && opts.port === null) {
    fail("--port is required for network commands");
  }
  return opts;
}

async function run(opts: Options): Promise<number> {
  if (opts.golden !== null) {
    const report = checkGoldenDir(opts.golden);
    for (const failure of report.failures) {
      console.error(failure);
    }
    if (report.failures.length > 0) {
      console.error(`${report.failures.length} failures across ${report.casesChecked} cases`);
      return 1;
    }
    console.log(`checked ${report.casesChecked} cases, all match`);
    return 0;
  }

  if (opts.perf !== null) {
    const report = await fetchAndVerify(opts.host, opts.port!, opts.perf);
    console.log(
      `checked ${report.recordsChecked} records: ` +
        `${report.mismatches} mismatches, ${report.bytes} bytes`,
    );
    return report.mismatches === 0 ? 0 : 1;
  }

  const dump = await fetchTable(opts.host, opts.port!, opts.dataset!);
  console.log(dump.header);
  for (const row of dump.rows) {
    console.log(row);
  }
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  try {
    return await run(parseArgs(argv));
  } catch (err) {
    if (err instanceof RemoteError) {
      console.error(`server error: ${err.message}`);
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
