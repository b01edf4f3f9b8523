import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { computeStats, renderToFiles, SidecarDoc } from "../src/boxplot";
import { parseTrialsCsv, groupValues, SchemaError } from "../src/csv";
import { main } from "../src/cli";

const HEADER = "trial,seed,n,sigma_bar,family,alpha_true,alpha_hat,alpha_tilde_bar,sigma2,regime,xi";

function makeCsv(rows: Array<{ n: number; alpha: number }>): string {
  const lines = [HEADER];
  rows.forEach((r, i) => {
    lines.push(`${i},${1000 + i},${r.n},,GeneralizedHyperbolic,1.0,${r.alpha},1.1,0.01,P,`);
  });
  return lines.join("\n") + "\n";
}

/** Independent median recomputation: sort and midpoint-average. */
function medianOf(values: number[]): number {
  const s = [...values].sort((a, b) => a - b);
  const m = s.length >> 1;
  return s.length % 2 ? s[m] : (s[m - 1] + s[m]) / 2;
}

describe("csv parsing", () => {
  it("rejects a missing group-by column", () => {
    const table = parseTrialsCsv(makeCsv([{ n: 10, alpha: 1 }]));
    expect(() => groupValues(table, "bogus")).toThrow(SchemaError);
  });

  it("rejects ragged rows", () => {
    expect(() => parseTrialsCsv(HEADER + "\n1,2,3\n")).toThrow(SchemaError);
  });
});

describe("renderBoxplots", () => {
  function write(rows: Array<{ n: number; alpha: number }>): string {
    const dir = mkdtempSync(join(tmpdir(), "lsplot-"));
    const path = join(dir, "trials.csv");
    writeFileSync(path, makeCsv(rows));
    return path;
  }

  it("sidecar medians equal independently recomputed medians to 1e-12", () => {
    const rows: Array<{ n: number; alpha: number }> = [];
    let state = 11;
    const rand = () => (state = (state * 48271) % 2147483647) / 2147483647;
    for (const n of [100, 200, 400]) {
      for (let i = 0; i < 31; i++) rows.push({ n, alpha: 1 + (rand() - 0.5) });
    }
    const csvPath = write(rows);
    const out = csvPath.replace("trials.csv", "fig.png");
    const sidecarPath = renderToFiles({
      csvPaths: [csvPath], groupBy: "n", truth: 1.0, outPath: out,
    });
    const sidecar: SidecarDoc = JSON.parse(readFileSync(sidecarPath, "utf8"));
    expect(sidecar.groups.map((g) => g.label)).toEqual(["100", "200", "400"]);
    for (const g of sidecar.groups) {
      const vals = rows.filter((r) => String(r.n) === g.label).map((r) => r.alpha);
      expect(Math.abs(g.median - medianOf(vals))).toBeLessThanOrEqual(1e-12);
    }
  });

  it("byte-identical images from identical inputs", () => {
    const csvPath = write([
      { n: 10, alpha: 0.9 }, { n: 10, alpha: 1.1 }, { n: 10, alpha: 1.0 },
      { n: 20, alpha: 1.2 }, { n: 20, alpha: 0.8 }, { n: 20, alpha: 1.05 },
    ]);
    const outA = csvPath.replace("trials.csv", "a.png");
    const outB = csvPath.replace("trials.csv", "b.png");
    renderToFiles({ csvPaths: [csvPath], groupBy: "n", truth: 1.0, outPath: outA });
    renderToFiles({ csvPaths: [csvPath], groupBy: "n", truth: 1.0, outPath: outB });
    const a = readFileSync(outA);
    const b = readFileSync(outB);
    expect(a.equals(b)).toBe(true);
    // PNG magic
    expect(a.subarray(0, 4)).toEqual(Buffer.from([0x89, 0x50, 0x4e, 0x47]));
  });

  it("degenerate single constant group renders without error", () => {
    const csvPath = write([{ n: 10, alpha: 1 }, { n: 10, alpha: 1 }]);
    const out = csvPath.replace("trials.csv", "deg.png");
    const sidecarPath = renderToFiles({
      csvPaths: [csvPath], groupBy: "n", truth: 1.0, outPath: out,
    });
    const doc: SidecarDoc = JSON.parse(readFileSync(sidecarPath, "utf8"));
    expect(doc.groups).toHaveLength(1);
    expect(doc.groups[0].q1).toBe(doc.groups[0].q3);
  });

  it("merges multiple CSVs into shared groups", () => {
    const a = write([{ n: 10, alpha: 1.0 }, { n: 10, alpha: 2.0 }]);
    const b = write([{ n: 10, alpha: 3.0 }]);
    const stats = computeStats(
      [readFileSync(a, "utf8"), readFileSync(b, "utf8")], "n");
    expect(stats).toHaveLength(1);
    expect(stats[0].n).toBe(3);
    expect(stats[0].median).toBe(2.0);
  });
});

describe("cli", () => {
  it("renders via argv and returns 0", () => {
    const dir = mkdtempSync(join(tmpdir(), "lsplot-cli-"));
    const csvPath = join(dir, "trials.csv");
    writeFileSync(csvPath, makeCsv([
      { n: 5, alpha: 0.8 }, { n: 5, alpha: 1.2 }, { n: 9, alpha: 1.0 },
    ]));
    const out = join(dir, "fig.png");
    const rc = main(["--csv", csvPath, "--group-by", "n", "--truth", "1.0", "--out", out]);
    expect(rc).toBe(0);
    expect(readFileSync(out).length).toBeGreaterThan(100);
  });

  it("usage errors exit 2", () => {
    expect(main(["--group-by", "n"])).toBe(2);
  });

  it("schema errors exit 2", () => {
    const dir = mkdtempSync(join(tmpdir(), "lsplot-cli2-"));
    const csvPath = join(dir, "bad.csv");
    writeFileSync(csvPath, "a,b\n1,2\n");
    expect(main(["--csv", csvPath, "--group-by", "n", "--truth", "1", "--out",
                 join(dir, "x.png")])).toBe(2);
  });
});
