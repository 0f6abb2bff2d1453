// plot --log <csv> --ref <csv> --which topview|triptych --out <file>
//      [--no-shade] [--no-band]

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { parseReferenceCsv, parseTrajectoryCsv } from "./csv.js";
import { DEFAULT_OPTIONS, renderTopview, renderTriptych } from "./plots.js";

export function runCli(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== "plot") {
    console.error(`usage: plot --log <csv> --ref <csv> --which topview|triptych --out <file>`);
    return 1;
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: rest,
      options: {
        log: { type: "string" },
        ref: { type: "string" },
        which: { type: "string" },
        out: { type: "string" },
        "no-shade": { type: "boolean", default: false },
        "no-band": { type: "boolean", default: false },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const { log, ref, which, out } = parsed.values;
  if (!log || !which || !out) {
    console.error("error: --log, --which, and --out are required");
    return 1;
  }
  if (which !== "topview" && which !== "triptych") {
    console.error(`error: --which must be topview or triptych, got '${which}'`);
    return 1;
  }
  const options = {
    ...DEFAULT_OPTIONS,
    shadeModes: !parsed.values["no-shade"],
    sigmaBand: !parsed.values["no-band"],
  };

  try {
    const trajectory = parseTrajectoryCsv(readFileSync(log, "utf-8"));
    let svg: string;
    if (which === "topview") {
      if (!ref) {
        console.error("error: --ref is required for the topview plot");
        return 1;
      }
      const reference = parseReferenceCsv(readFileSync(ref, "utf-8"));
      svg = renderTopview(trajectory, reference, options);
    } else {
      svg = renderTriptych(trajectory, options);
    }
    writeFileSync(out, svg);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  console.log(`wrote ${out}`);
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(runCli(process.argv.slice(2)));
}
