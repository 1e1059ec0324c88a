/**
 * Dependency-free SVG line chart. Pure string construction so the scaling
 * math is unit-testable; the DOM layer drops the markup into a container.
 */

export interface Series {
  label: string;
  points: { step: number; value: number }[];
}

export interface ChartOptions {
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
  padding?: number;
}

const PALETTE = [
  "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
  "#b279a2", "#9d755d", "#eeca3b", "#bab0ac", "#439894",
];

export function colorFor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

export function scalePoint(
  step: number,
  value: number,
  maxStep: number,
  opts: Required<ChartOptions>,
): [number, number] {
  const { width, height, yMin, yMax, padding } = opts;
  const x = maxStep === 0
    ? padding
    : padding + (step / maxStep) * (width - 2 * padding);
  const frac = (value - yMin) / (yMax - yMin);
  const y = height - padding - frac * (height - 2 * padding);
  return [x, y];
}

export function polylineFor(
  series: Series,
  maxStep: number,
  opts: Required<ChartOptions>,
): string {
  return series.points
    .map(({ step, value }) => scalePoint(step, value, maxStep, opts).map((v) => v.toFixed(1)).join(","))
    .join(" ");
}

export function renderLineChart(seriesList: Series[], options: ChartOptions = {}): string {
  const opts: Required<ChartOptions> = {
    width: options.width ?? 640,
    height: options.height ?? 240,
    yMin: options.yMin ?? 0,
    yMax: options.yMax ?? 1,
    padding: options.padding ?? 24,
  };
  const maxStep = Math.max(1, ...seriesList.flatMap((s) => s.points.map((p) => p.step)));
  const lines = seriesList
    .map(
      (s, i) =>
        `<polyline fill="none" stroke="${colorFor(i)}" stroke-width="1.5" ` +
        `points="${polylineFor(s, maxStep, opts)}"><title>${s.label}</title></polyline>`,
    )
    .join("");
  const midY = scalePoint(0, (opts.yMin + opts.yMax) / 2, maxStep, opts)[1].toFixed(1);
  return (
    `<svg viewBox="0 0 ${opts.width} ${opts.height}" xmlns="http://www.w3.org/2000/svg">` +
    `<line x1="${opts.padding}" y1="${midY}" x2="${opts.width - opts.padding}" y2="${midY}" ` +
    `stroke="#ccc" stroke-dasharray="4 3"/>` +
    lines +
    `</svg>`
  );
}
