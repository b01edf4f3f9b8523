/** Box-plot statistics with numpy-compatible (type-7) quantiles. */

export interface BoxStats {
  label: string;
  n: number;
  median: number;
  q1: number;
  q3: number;
  loWhisker: number;
  hiWhisker: number;
  outliers: number[];
}

/** Linear-interpolation quantile of a sorted array (type 7). */
export function quantileSorted(sorted: number[], q: number): number {
  if (sorted.length === 0) throw new Error("quantile of empty sample");
  if (sorted.length === 1) return sorted[0];
  const pos = q * (sorted.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  const frac = pos - lo;
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

/** Whiskers reach the most extreme points within 1.5 IQR of the box. */
export function boxStats(label: string, values: number[]): BoxStats {
  const sorted = [...values].sort((a, b) => a - b);
  const q1 = quantileSorted(sorted, 0.25);
  const median = quantileSorted(sorted, 0.5);
  const q3 = quantileSorted(sorted, 0.75);
  const iqr = q3 - q1;
  const loFence = q1 - 1.5 * iqr;
  const hiFence = q3 + 1.5 * iqr;
  const inside = sorted.filter((v) => v >= loFence && v <= hiFence);
  const loWhisker = inside.length ? inside[0] : q1;
  const hiWhisker = inside.length ? inside[inside.length - 1] : q3;
  const outliers = sorted.filter((v) => v < loFence || v > hiFence);
  return { label, n: sorted.length, median, q1, q3, loWhisker, hiWhisker, outliers };
}
