// Parsers for the trajectory log and reference waypoint CSVs emitted by the
// simulator CLI. The log starts with '#' comment lines (scenario hash, config
// echo) followed by a header row; every row is one control tick.

export interface TrajectoryLog {
  header: Record<string, string>;
  columns: Map<string, number[]>;
  modes: string[];
  classifications: string[];
  length: number;
}

export interface ReferencePoint {
  x: number;
  y: number;
  theta: number;
}

export const REQUIRED_COLUMNS = [
  "t",
  "truth_xl",
  "truth_yl",
  "truth_xf",
  "truth_yf",
  "cmd_vl",
  "cmd_vf",
  "r_error",
  "phi_leader",
  "phi_follower",
  "tracking_error",
  "mode",
] as const;

const NUMERIC_EXCLUDED = new Set(["mode", "classification"]);

export function parseTrajectoryCsv(text: string): TrajectoryLog {
  const header: Record<string, string> = {};
  let names: string[] | null = null;
  const rows: string[][] = [];

  for (const rawLine of text.split("\n")) {
    const line = rawLine.trimEnd();
    if (!line) continue;
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      const eq = body.indexOf("=");
      if (eq > 0) header[body.slice(0, eq).trim()] = body.slice(eq + 1);
      continue;
    }
    if (names === null) {
      names = line.split(",");
      continue;
    }
    rows.push(line.split(","));
  }
  if (names === null) {
    throw new Error("trajectory CSV has no header row");
  }
  const missing = REQUIRED_COLUMNS.filter((c) => !names!.includes(c));
  if (missing.length) {
    throw new Error(`trajectory CSV is missing columns: ${missing.join(", ")}`);
  }

  const index = new Map(names.map((n, i) => [n, i]));
  const columns = new Map<string, number[]>();
  for (const name of names) {
    if (NUMERIC_EXCLUDED.has(name)) continue;
    const i = index.get(name)!;
    columns.set(
      name,
      rows.map((r) => Number(r[i])),
    );
  }
  const modeIdx = index.get("mode")!;
  const clsIdx = index.get("classification") ?? modeIdx;
  return {
    header,
    columns,
    modes: rows.map((r) => r[modeIdx] ?? ""),
    classifications: rows.map((r) => r[clsIdx] ?? ""),
    length: rows.length,
  };
}

export function parseReferenceCsv(text: string): ReferencePoint[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (!lines.length || !lines[0]!.startsWith("x,y,theta")) {
    throw new Error("reference CSV must start with an 'x,y,theta' header");
  }
  return lines.slice(1).map((line) => {
    const [x, y, theta] = line.split(",").map(Number);
    return { x: x!, y: y!, theta: theta! };
  });
}

export function column(log: TrajectoryLog, name: string): number[] {
  const col = log.columns.get(name);
  if (!col) throw new Error(`trajectory CSV is missing columns: ${name}`);
  return col;
}
