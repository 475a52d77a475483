/**
 * Spectrum view models: pure data reshaping, no DOM.  The line view sums
 * every leading axis down to the last (time-of-flight channels); the
 * heatmap sums the trailing axis away and shows the first two.
 */

import { DecodedSpectrum } from './decoder.js';

export interface LineView {
  channels: number;
  sums: number[];
  total: number;
  argmax: number;
}

export interface HeatmapView {
  rows: number;
  cols: number;
  /** Row-major cell sums, rows x cols. */
  cells: number[];
  max: number;
}

export interface Placeholder {
  kind: 'placeholder';
  message: string;
}

export function placeholder(message = 'no data'): Placeholder {
  return { kind: 'placeholder', message };
}

export function lineView(s: DecodedSpectrum): LineView {
  const channels = s.dims.length ? s.dims[s.dims.length - 1] : 0;
  const sums = new Array<number>(channels).fill(0);
  for (let i = 0; i < s.counts.length; i++) {
    sums[i % channels] += s.counts[i];
  }
  let argmax = 0;
  let total = 0;
  for (let c = 0; c < channels; c++) {
    total += sums[c];
    if (sums[c] > sums[argmax]) {
      argmax = c;
    }
  }
  return { channels, sums, total, argmax };
}

export function heatmapView(s: DecodedSpectrum): HeatmapView | null {
  if (s.dims.length < 2) {
    return null;
  }
  const [rows, cols] = s.dims;
  const tail = s.counts.length / (rows * cols);
  const cells = new Array<number>(rows * cols).fill(0);
  for (let i = 0; i < s.counts.length; i++) {
    cells[Math.floor(i / tail)] += s.counts[i];
  }
  let max = 0;
  for (const c of cells) {
    if (c > max) {
      max = c;
    }
  }
  return { rows, cols, cells, max };
}
