// Trajectory viewer: one SVG per manifest subplot, series colors and titles
// exactly as the manifest declares them.

import type { PlotManifest } from './api.js';
import type { Trajectory } from './state.js';

const WIDTH = 640;
const HEIGHT = 220;
const MARGIN = { left: 56, right: 12, top: 26, bottom: 30 };

const SVG_NS = 'http://www.w3.org/2000/svg';

function svgElement(tag: string, attrs: Record<string, string>): SVGElement {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, value);
  }
  return el;
}

function niceFormat(value: number): string {
  if (value === 0) return '0';
  const magnitude = Math.abs(value);
  if (magnitude >= 1e4 || magnitude < 1e-2) return value.toExponential(1);
  return value.toPrecision(3);
}

export function renderSubplots(
  container: HTMLElement,
  manifest: PlotManifest,
  trajectory: Trajectory,
  downloadUrl: string | null,
): void {
  container.textContent = '';
  if (manifest.subplots.length === 0) {
    const empty = document.createElement('p');
    empty.className = 'empty-state';
    empty.textContent = 'This version declares no plots.';
    container.appendChild(empty);
    return;
  }

  const hours = trajectory.times.map((t) => t / 3600);
  const tMax = hours.length ? hours[hours.length - 1] : 1;

  for (const subplot of manifest.subplots) {
    const figure = document.createElement('figure');
    figure.className = 'subplot';
    figure.dataset.subplot = String(subplot.index);

    const svg = svgElement('svg', {
      viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
      width: String(WIDTH),
      height: String(HEIGHT),
      role: 'img',
    }) as SVGSVGElement;

    const innerW = WIDTH - MARGIN.left - MARGIN.right;
    const innerH = HEIGHT - MARGIN.top - MARGIN.bottom;

    let yMax = 0;
    for (const series of subplot.series) {
      const values = trajectory.series.get(series.species) ?? [];
      for (const v of values) yMax = Math.max(yMax, v);
    }
    if (yMax <= 0) yMax = 1;

    const x = (t: number) => MARGIN.left + (t / (tMax || 1)) * innerW;
    const y = (v: number) => MARGIN.top + innerH - (v / yMax) * innerH;

    svg.appendChild(
      svgElement('rect', {
        x: String(MARGIN.left),
        y: String(MARGIN.top),
        width: String(innerW),
        height: String(innerH),
        fill: 'none',
        stroke: '#888',
        'stroke-width': '1',
      }),
    );

    const title = svgElement('text', {
      x: String(MARGIN.left),
      y: '16',
      class: 'subplot-title',
      'font-size': '13',
    });
    title.textContent = `subplot ${subplot.index}: ` + subplot.series.map((s) => s.label).join(', ');
    svg.appendChild(title);

    for (const series of subplot.series) {
      const values = trajectory.series.get(series.species);
      if (!values || values.length === 0) continue;
      const points = values
        .map((v, i) => `${x(hours[i]).toFixed(2)},${y(v).toFixed(2)}`)
        .join(' ');
      const line = svgElement('polyline', {
        points,
        fill: 'none',
        stroke: series.color,
        'stroke-width': '1.6',
        'data-species': series.species,
      });
      svg.appendChild(line);
    }

    // axes annotations: max value and time horizon, verbatim from the data
    const yLabel = svgElement('text', {
      x: '4',
      y: String(MARGIN.top + 10),
      'font-size': '11',
    });
    yLabel.textContent = niceFormat(yMax);
    svg.appendChild(yLabel);
    const xLabel = svgElement('text', {
      x: String(WIDTH - MARGIN.right - 60),
      y: String(HEIGHT - 8),
      'font-size': '11',
    });
    xLabel.textContent = `${niceFormat(tMax)} h`;
    svg.appendChild(xLabel);

    figure.appendChild(svg);
    container.appendChild(figure);
  }

  if (downloadUrl) {
    const link = document.createElement('a');
    link.href = downloadUrl;
    link.download = 'trajectory.csv';
    link.textContent = 'download trajectory.csv';
    link.className = 'download-link';
    container.appendChild(link);
  }
}
