/** Box-plot figure for harness trial CSVs.
 *
 * One panel per group, boxes from quartiles, whiskers at the most extreme
 * points within 1.5 IQR, outliers as dots, horizontal reference line at the
 * true order.  The quartile numbers behind the picture are written to a
 * sidecar JSON next to the image so downstream checks never parse pixels,
 * and rendering is a pure function of (CSV bytes, spec). */

import { readFileSync, writeFileSync } from "node:fs";

import { groupValues, orderedLabels, parseTrialsCsv, SchemaError } from "./csv";
import { encodePng } from "./png";
import { Color, Raster } from "./raster";
import { BoxStats, boxStats } from "./stats";

export interface PlotSpec {
  csvPaths: string[];
  groupBy: string;
  truth: number;
  outPath: string;
  title?: string;
}

export interface SidecarDoc {
  group_by: string;
  truth: number;
  groups: Array<{
    label: string;
    n: number;
    median: number;
    q1: number;
    q3: number;
    lo_whisker: number;
    hi_whisker: number;
    n_outliers: number;
  }>;
}

const BLACK: Color = [0, 0, 0];
const BOX: Color = [70, 110, 180];
const REF: Color = [200, 60, 40];
const GRID: Color = [220, 220, 220];

export function computeStats(csvTexts: string[], groupBy: string): BoxStats[] {
  const merged = new Map<string, number[]>();
  for (const text of csvTexts) {
    const table = parseTrialsCsv(text);
    for (const [label, vals] of groupValues(table, groupBy)) {
      const bucket = merged.get(label);
      if (bucket) bucket.push(...vals);
      else merged.set(label, [...vals]);
    }
  }
  return orderedLabels(merged).map((label) => boxStats(label, merged.get(label)!));
}

export function renderBoxplots(spec: PlotSpec): { png: Buffer; sidecar: SidecarDoc } {
  const texts = spec.csvPaths.map((p) => readFileSync(p, "utf8"));
  const stats = computeStats(texts, spec.groupBy);
  if (stats.length === 0) throw new SchemaError("no groups to plot");
  for (const s of stats) {
    if (s.n === 0) process.stderr.write(`warning: empty group '${s.label}'\n`);
  }

  const panelW = 90;
  const marginL = 64;
  const marginR = 20;
  const marginT = 28;
  const marginB = 36;
  const plotH = 380;
  const width = marginL + panelW * stats.length + marginR;
  const height = marginT + plotH + marginB;

  let lo = Math.min(spec.truth, ...stats.map((s) => Math.min(s.loWhisker, ...s.outliers, s.q1)));
  let hi = Math.max(spec.truth, ...stats.map((s) => Math.max(s.hiWhisker, ...s.outliers, s.q3)));
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.06 * (hi - lo);
  lo -= pad;
  hi += pad;
  const yOf = (v: number) => marginT + Math.round(((hi - v) / (hi - lo)) * plotH);

  const img = new Raster(width, height);
  // frame and ticks
  img.vline(marginL, marginT, marginT + plotH, BLACK);
  img.hline(marginL, width - marginR, marginT + plotH, BLACK);
  for (const t of niceTicks(lo, hi, 8)) {
    const y = yOf(t);
    img.hline(marginL + 1, width - marginR, y, GRID);
    img.hline(marginL - 4, marginL, y, BLACK);
    img.text(6, y - 3, formatTick(t), BLACK);
  }
  // reference line at the true order
  img.hline(marginL + 1, width - marginR, yOf(spec.truth), REF);

  stats.forEach((s, i) => {
    const cx = marginL + panelW * i + Math.floor(panelW / 2);
    const half = 22;
    const yQ1 = yOf(s.q1);
    const yQ3 = yOf(s.q3);
    const yMed = yOf(s.median);
    // whiskers
    img.vline(cx, yOf(s.hiWhisker), yQ3, BLACK);
    img.vline(cx, yQ1, yOf(s.loWhisker), BLACK);
    img.hline(cx - 10, cx + 10, yOf(s.hiWhisker), BLACK);
    img.hline(cx - 10, cx + 10, yOf(s.loWhisker), BLACK);
    // box (degenerate boxes render as a line)
    for (let y = Math.min(yQ3, yQ1); y <= Math.max(yQ3, yQ1); y++) {
      img.hline(cx - half, cx + half, y, y === yQ3 || y === yQ1 ? BLACK : BOX);
    }
    img.hline(cx - half, cx + half, yMed, BLACK);
    for (const o of s.outliers) {
      img.fillRect(cx - 1, yOf(o) - 1, 3, 3, BLACK);
    }
    const label = s.label.slice(0, 12);
    img.text(cx - 3 * label.length, marginT + plotH + 10, label, BLACK);
  });
  if (spec.title) img.text(marginL, 8, spec.title, BLACK);

  const png = encodePng(width, height, img.pixels);
  const sidecar: SidecarDoc = {
    group_by: spec.groupBy,
    truth: spec.truth,
    groups: stats.map((s) => ({
      label: s.label,
      n: s.n,
      median: s.median,
      q1: s.q1,
      q3: s.q3,
      lo_whisker: s.loWhisker,
      hi_whisker: s.hiWhisker,
      n_outliers: s.outliers.length,
    })),
  };
  return { png, sidecar };
}

export function renderToFiles(spec: PlotSpec): string {
  const { png, sidecar } = renderBoxplots(spec);
  writeFileSync(spec.outPath, png);
  const sidecarPath = spec.outPath.replace(/\.png$/, "") + ".stats.json";
  writeFileSync(sidecarPath, JSON.stringify(sidecar, null, 2) + "\n");
  return sidecarPath;
}

export function niceTicks(lo: number, hi: number, target: number): number[] {
  const span = hi - lo;
  const rawStep = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (rawStep <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let t = first; t <= hi + 1e-12; t += step) ticks.push(Number(t.toFixed(12)));
  return ticks;
}

function formatTick(t: number): string {
  if (t === 0) return "0";
  const abs = Math.abs(t);
  if (abs >= 0.01 && abs < 10_000) {
    return Number(t.toFixed(4)).toString();
  }
  return t.toExponential(1);
}
