// Figure construction: top view (reference vs executed trajectory, plus the
// tracking-error strip with its 2-sigma margin) and the three-panel
// velocity / bearing / distance-error figure with behavior-mode shading.

import { column, ReferencePoint, TrajectoryLog } from "./csv.js";
import { axisTicks, el, extent, fmt, linearScale, polyline, Scale, svgDocument, text } from "./svg.js";

export interface PlotOptions {
  shadeModes: boolean;
  sigmaBand: boolean;
}

export const DEFAULT_OPTIONS: PlotOptions = { shadeModes: true, sigmaBand: true };

const SHADED_MODES = new Set(["Deceleration", "Waiting"]);

export interface ModeInterval {
  t0: number;
  t1: number;
}

export function modeIntervals(times: number[], modes: string[]): ModeInterval[] {
  const out: ModeInterval[] = [];
  const dt = times.length > 1 ? times[1]! - times[0]! : 0.1;
  let start: number | null = null;
  for (let i = 0; i < modes.length; i++) {
    const shaded = SHADED_MODES.has(modes[i]!);
    if (shaded && start === null) start = times[i]!;
    if (!shaded && start !== null) {
      out.push({ t0: start, t1: times[i]! });
      start = null;
    }
  }
  if (start !== null) out.push({ t0: start, t1: times[times.length - 1]! + dt });
  return out;
}

interface Panel {
  x: number;
  y: number;
  width: number;
  height: number;
}

function frame(panel: Panel, title: string, xLabel: string, yLabel: string, sx: Scale, sy: Scale): string[] {
  const parts: string[] = [
    el("rect", {
      x: panel.x, y: panel.y, width: panel.width, height: panel.height,
      fill: "none", stroke: "#444", "stroke-width": 1,
    }),
    text(panel.x + 4, panel.y - 5, title, { "font-size": 12, "font-weight": "bold" }),
    text(panel.x + panel.width / 2 - 15, panel.y + panel.height + 26, xLabel),
    text(panel.x - 38, panel.y + 12, yLabel),
  ];
  for (const v of axisTicks(sx)) {
    const px = sx(v);
    parts.push(el("line", { x1: px, y1: panel.y + panel.height, x2: px, y2: panel.y + panel.height + 4, stroke: "#444" }));
    parts.push(text(px - 8, panel.y + panel.height + 15, fmt(v), { "font-size": 9 }));
  }
  for (const v of axisTicks(sy, 4)) {
    const py = sy(v);
    parts.push(el("line", { x1: panel.x - 4, y1: py, x2: panel.x, y2: py, stroke: "#444" }));
    parts.push(text(panel.x - 34, py + 3, fmt(v), { "font-size": 9 }));
  }
  return parts;
}

function shadeRects(intervals: ModeInterval[], panel: Panel, sx: Scale): string[] {
  return intervals.map((iv) =>
    el("rect", {
      class: "mode-shade",
      "data-t0": fmt(iv.t0),
      "data-t1": fmt(iv.t1),
      x: sx(iv.t0),
      y: panel.y,
      width: Math.max(sx(iv.t1) - sx(iv.t0), 0.5),
      height: panel.height,
      fill: "#aaccee",
      "fill-opacity": 0.45,
    }),
  );
}

function sigmaBandRect(values: number[], panel: Panel, sy: Scale): string {
  const mean = values.reduce((a, b) => a + b, 0) / (values.length || 1);
  const variance = values.reduce((a, b) => a + (b - mean) ** 2, 0) / (values.length || 1);
  const sd = Math.sqrt(variance);
  const top = sy(mean + 2 * sd);
  const bottom = sy(mean - 2 * sd);
  return el("rect", {
    class: "sigma-band",
    x: panel.x,
    y: Math.min(top, bottom),
    width: panel.width,
    height: Math.abs(bottom - top),
    fill: "#bbe6bb",
    "fill-opacity": 0.5,
  });
}

function midpoints(log: TrajectoryLog): { xs: number[]; ys: number[] } {
  const xl = column(log, "truth_xl");
  const yl = column(log, "truth_yl");
  const xf = column(log, "truth_xf");
  const yf = column(log, "truth_yf");
  return {
    xs: xl.map((v, i) => 0.5 * (v + xf[i]!)),
    ys: yl.map((v, i) => 0.5 * (v + yf[i]!)),
  };
}

export function renderTopview(
  log: TrajectoryLog,
  reference: ReferencePoint[],
  options: PlotOptions = DEFAULT_OPTIONS,
): string {
  const mid = midpoints(log);
  const refX = reference.map((p) => p.x);
  const refY = reference.map((p) => p.y);
  const [xLo, xHi] = extent([...mid.xs, ...refX]);
  const [yLo, yHi] = extent([...mid.ys, ...refY]);

  const width = 560;
  const mapPanel: Panel = { x: 60, y: 30, width: 460, height: 330 };
  // equal-aspect mapping into the panel
  const unit = Math.min(mapPanel.width / (xHi - xLo), mapPanel.height / (yHi - yLo));
  const sx = linearScale([xLo, xHi], [mapPanel.x, mapPanel.x + unit * (xHi - xLo)]);
  const sy = linearScale([yLo, yHi], [mapPanel.y + unit * (yHi - yLo), mapPanel.y]);

  const body: string[] = [
    ...frame(mapPanel, "top view", "x [m]", "y [m]", sx, sy),
    polyline(refX, refY, sx, sy, { class: "reference", stroke: "#e8851c", "stroke-width": 2, "stroke-dasharray": "6 3" }),
    polyline(mid.xs, mid.ys, sx, sy, { class: "trajectory", stroke: "#2c6fbb", "stroke-width": 1.5 }),
    el("circle", { cx: sx(mid.xs[0]!), cy: sy(mid.ys[0]!), r: 4, fill: "#2c6fbb" }),
    el("circle", { cx: sx(refX[refX.length - 1]!), cy: sy(refY[refY.length - 1]!), r: 4, fill: "none", stroke: "#e8851c" }),
    text(mapPanel.x + mapPanel.width - 130, mapPanel.y + 16, "reference", { fill: "#e8851c" }),
    text(mapPanel.x + mapPanel.width - 130, mapPanel.y + 30, "trajectory", { fill: "#2c6fbb" }),
  ];

  let height = mapPanel.y + mapPanel.height + 50;
  if (options.sigmaBand) {
    const times = column(log, "t");
    const err = column(log, "tracking_error").map((v) => 100 * v); // cm
    const errPanel: Panel = { x: 60, y: height, width: 460, height: 120 };
    const st = linearScale(extent(times, 0), [errPanel.x, errPanel.x + errPanel.width]);
    const se = linearScale(extent([0, ...err]), [errPanel.y + errPanel.height, errPanel.y]);
    body.push(...frame(errPanel, "tracking error", "t [s]", "[cm]", st, se));
    body.push(sigmaBandRect(err, errPanel, se));
    if (options.shadeModes) body.push(...shadeRects(modeIntervals(times, log.modes), errPanel, st));
    body.push(polyline(times, err, st, se, { class: "tracking-error", stroke: "#b03030", "stroke-width": 1.2 }));
    height += errPanel.height + 60;
  }
  return svgDocument(width, height, body);
}

export function renderTriptych(log: TrajectoryLog, options: PlotOptions = DEFAULT_OPTIONS): string {
  const times = column(log, "t");
  const intervals = options.shadeModes ? modeIntervals(times, log.modes) : [];
  const width = 640;
  const panelW = 540;
  const panelH = 120;
  const gap = 52;
  const x0 = 70;
  const st = linearScale(extent(times, 0), [x0, x0 + panelW]);

  const deg = (v: number) => (180 * v) / Math.PI;
  const panels: {
    title: string;
    unit: string;
    series: { name: string; values: number[]; color: string }[];
    band?: number[];
  }[] = [
    {
      title: "linear velocities",
      unit: "[m/s]",
      series: [
        { name: "v-leader", values: column(log, "cmd_vl"), color: "#2c6fbb" },
        { name: "v-follower", values: column(log, "cmd_vf"), color: "#b03030" },
      ],
    },
    {
      title: "bearing angles",
      unit: "[deg]",
      series: [
        { name: "phi-leader", values: column(log, "phi_leader").map(deg), color: "#2c6fbb" },
        { name: "phi-follower", values: column(log, "phi_follower").map(deg), color: "#b03030" },
      ],
    },
    {
      title: "distance error",
      unit: "[mm]",
      series: [{ name: "r-error", values: column(log, "r_error").map((v) => 1000 * v), color: "#3a7d3a" }],
      band: options.sigmaBand ? column(log, "r_error").map((v) => 1000 * v) : undefined,
    },
  ];

  const body: string[] = [];
  let y = 30;
  for (const spec of panels) {
    const panel: Panel = { x: x0, y, width: panelW, height: panelH };
    const all = spec.series.flatMap((s) => s.values);
    const sy = linearScale(extent(all), [panel.y + panel.height, panel.y]);
    body.push(...frame(panel, spec.title, "t [s]", spec.unit, st, sy));
    if (spec.band) body.push(sigmaBandRect(spec.band, panel, sy));
    body.push(...shadeRects(intervals, panel, st));
    let legendY = panel.y + 14;
    for (const series of spec.series) {
      body.push(polyline(times, series.values, st, sy, {
        class: series.name, stroke: series.color, "stroke-width": 1.2,
      }));
      body.push(text(panel.x + panel.width - 90, legendY, series.name, { fill: series.color }));
      legendY += 13;
    }
    y += panelH + gap;
  }
  return svgDocument(width, y + 10, body);
}
