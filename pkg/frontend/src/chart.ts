// Minimal dependency-free SVG line chart: R@1 for both retrieval directions
// against the fraction of paired data.

import { SeriesPoint } from "./state.js";

const WIDTH = 560;
const HEIGHT = 260;
const PAD = 40;

function scale(points: SeriesPoint[][]): {
  sx: (x: number) => number;
  sy: (y: number) => number;
  xMin: number;
  xMax: number;
} {
  const xs = points.flat().map((p) => p.x);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs, xMin + 1e-9);
  const sx = (x: number) =>
    PAD + ((x - xMin) / (xMax - xMin)) * (WIDTH - 2 * PAD);
  const sy = (y: number) => HEIGHT - PAD - y * (HEIGHT - 2 * PAD);
  return { sx, sy, xMin, xMax };
}

export function polylinePoints(
  series: SeriesPoint[],
  sx: (x: number) => number,
  sy: (y: number) => number,
): string {
  return series.map((p) => `${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`).join(" ");
}

export function renderChart(
  text: SeriesPoint[],
  image: SeriesPoint[],
): string {
  if (text.length === 0 && image.length === 0) {
    return `<p class="placeholder">No completed epochs yet.</p>`;
  }
  const { sx, sy, xMin, xMax } = scale([text, image]);
  const gridY = [0, 0.25, 0.5, 0.75, 1.0]
    .map(
      (v) =>
        `<line x1="${PAD}" y1="${sy(v)}" x2="${WIDTH - PAD}" y2="${sy(v)}" class="grid"/>` +
        `<text x="4" y="${sy(v) + 4}" class="tick">${(v * 100).toFixed(0)}</text>`,
    )
    .join("");
  const marks = (series: SeriesPoint[], cls: string) =>
    series
      .map(
        (p) =>
          `<circle cx="${sx(p.x).toFixed(1)}" cy="${sy(p.y).toFixed(1)}" r="3" class="${cls}"/>`,
      )
      .join("");
  return `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="recall by paired fraction">
    ${gridY}
    <polyline class="series text" fill="none" points="${polylinePoints(text, sx, sy)}"/>
    <polyline class="series image" fill="none" points="${polylinePoints(image, sx, sy)}"/>
    ${marks(text, "series text")}${marks(image, "series image")}
    <text x="${PAD}" y="${HEIGHT - 8}" class="tick">paired ${(xMin * 100).toFixed(0)}%</text>
    <text x="${WIDTH - PAD - 70}" y="${HEIGHT - 8}" class="tick">paired ${(xMax * 100).toFixed(0)}%</text>
    <text x="${WIDTH - PAD - 150}" y="${PAD - 10}" class="legend">R@1: text (blue) / image (orange)</text>
  </svg>`;
}
