/** Reader for the estimation harness trials.csv schema. */

export const TRIALS_COLUMNS = [
  "trial", "seed", "n", "sigma_bar", "family", "alpha_true",
  "alpha_hat", "alpha_tilde_bar", "sigma2", "regime", "xi",
];

export class SchemaError extends Error {}

export interface TrialsTable {
  columns: string[];
  rows: string[][];
}

export function parseTrialsCsv(text: string): TrialsTable {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0) throw new SchemaError("empty CSV");
  const columns = lines[0].split(",");
  for (const want of ["trial", "alpha_hat"]) {
    if (!columns.includes(want)) {
      throw new SchemaError(`trials CSV is missing the '${want}' column`);
    }
  }
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    if (lines[i] === "") continue;
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(`row ${i} has ${parts.length} fields, header has ${columns.length}`);
    }
    rows.push(parts);
  }
  return { columns, rows };
}

/** alpha_hat values grouped by the given column, in first-seen group order. */
export function groupValues(table: TrialsTable, groupBy: string): Map<string, number[]> {
  const gi = table.columns.indexOf(groupBy);
  if (gi < 0) throw new SchemaError(`group-by column '${groupBy}' not in CSV header`);
  const vi = table.columns.indexOf("alpha_hat");
  const groups = new Map<string, number[]>();
  for (const row of table.rows) {
    const key = row[gi];
    const val = Number(row[vi]);
    if (!Number.isFinite(val)) {
      throw new SchemaError(`non-finite alpha_hat value '${row[vi]}'`);
    }
    const bucket = groups.get(key);
    if (bucket) bucket.push(val);
    else groups.set(key, [val]);
  }
  if (groups.size === 0) throw new SchemaError("no data rows in trials CSV");
  return groups;
}

/** Sort group labels numerically when they all parse as numbers. */
export function orderedLabels(groups: Map<string, number[]>): string[] {
  const labels = [...groups.keys()];
  if (labels.every((l) => Number.isFinite(Number(l)))) {
    return labels.sort((a, b) => Number(a) - Number(b));
  }
  return labels.sort();
}
