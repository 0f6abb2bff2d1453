// Minimal SVG assembly: fixed float formatting keeps output byte-deterministic.

export function fmt(v: number): string {
  if (!Number.isFinite(v)) return "0";
  return v.toFixed(3).replace(/\.?0+$/, "") || "0";
}

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  children: string[] = [],
): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join(" ");
  if (!children.length) return `<${tag} ${parts}/>`;
  return `<${tag} ${parts}>${children.join("")}</${tag}>`;
}

export function text(x: number, y: number, content: string, attrs: Record<string, string | number> = {}): string {
  return el("text", { x, y, "font-size": 11, "font-family": "sans-serif", ...attrs }, [content]);
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = domain;
  return scale;
}

export function extent(values: number[], pad = 0.05): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) return [0, 1];
  const span = hi - lo || 1;
  return [lo - pad * span, hi + pad * span];
}

export function polyline(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  attrs: Record<string, string | number>,
): string {
  const pts = xs.map((x, i) => `${fmt(sx(x))},${fmt(sy(ys[i]!))}`).join(" ");
  return el("polyline", { points: pts, fill: "none", ...attrs });
}

export function axisTicks(scale: Scale, count = 5): number[] {
  const [d0, d1] = scale.domain;
  const step = (d1 - d0) / (count - 1);
  return Array.from({ length: count }, (_, i) => d0 + i * step);
}

export function svgDocument(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    el("rect", { x: 0, y: 0, width, height, fill: "white" }),
    ...body,
    "</svg>",
  ].join("\n");
}
