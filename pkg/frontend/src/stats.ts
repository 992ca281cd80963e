/** Small statistics helpers for the figure builders. */

export interface Bin {
  start: number;
  end: number;
  density: number;
  count: number;
}

function quantileSorted(sorted: number[], q: number): number {
  if (sorted.length === 0) return NaN;
  const pos = q * (sorted.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

/** Freedman-Diaconis bin count; falls back to Sturges when IQR collapses. */
export function fdBinCount(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const iqr = quantileSorted(sorted, 0.75) - quantileSorted(sorted, 0.25);
  const range = sorted[sorted.length - 1] - sorted[0];
  if (iqr <= 0 || range <= 0) {
    return Math.max(1, Math.ceil(Math.log2(values.length) + 1));
  }
  const width = (2 * iqr) / Math.cbrt(values.length);
  return Math.max(1, Math.min(400, Math.ceil(range / width)));
}

/** Density-normalized histogram with Freedman-Diaconis binning. */
export function histogram(values: number[], nBins?: number): Bin[] {
  if (values.length === 0) return [];
  const k = nBins ?? fdBinCount(values);
  const min = Math.min(...values);
  const max = Math.max(...values);
  const width = (max - min) / k || 1;
  const bins: Bin[] = Array.from({ length: k }, (_, i) => ({
    start: min + i * width,
    end: min + (i + 1) * width,
    density: 0,
    count: 0,
  }));
  for (const v of values) {
    const idx = Math.min(Math.floor((v - min) / width), k - 1);
    bins[idx].count++;
  }
  for (const b of bins) b.density = b.count / (values.length * width);
  return bins;
}

/** Gaussian kernel density estimate on a uniform grid (Silverman bandwidth). */
export function kde(values: number[], gridSize = 241): { x: number[]; y: number[] } {
  const n = values.length;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  const sd = Math.sqrt(values.reduce((a, b) => a + (b - mean) ** 2, 0) / Math.max(1, n - 1));
  const sorted = [...values].sort((a, b) => a - b);
  const iqr = quantileSorted(sorted, 0.75) - quantileSorted(sorted, 0.25);
  const h = 0.9 * Math.min(sd || 1, (iqr || sd || 1) / 1.34) * Math.pow(n, -0.2) || 1;
  const lo = sorted[0] - 3 * h;
  const hi = sorted[n - 1] + 3 * h;
  const xs: number[] = [];
  const ys: number[] = [];
  for (let i = 0; i < gridSize; i++) {
    const x = lo + ((hi - lo) * i) / (gridSize - 1);
    let s = 0;
    for (const v of values) {
      const z = (x - v) / h;
      s += Math.exp(-0.5 * z * z);
    }
    xs.push(x);
    ys.push(s / (n * h * Math.sqrt(2 * Math.PI)));
  }
  return { x: xs, y: ys };
}

export function extent(values: number[]): [number, number] {
  return [Math.min(...values), Math.max(...values)];
}
