/** CSV reading for the artifact schemas (numeric cells, string method ids). */

export type Row = Record<string, string | number>;

export class MissingColumnError extends Error {
  constructor(file: string, column: string) {
    super(`missing column "${column}" in ${file}`);
    this.name = "MissingColumnError";
  }
}

export function parseCsv(text: string, required: string[], fileName = "csv"): Row[] {
  const lines = text.trim().split("\n");
  if (lines.length === 0 || lines[0].trim() === "") {
    throw new Error(`${fileName} is empty`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  for (const col of required) {
    if (!header.includes(col)) throw new MissingColumnError(fileName, col);
  }
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    const row: Row = {};
    header.forEach((h, i) => {
      const raw = (cells[i] ?? "").trim();
      const num = Number(raw);
      row[h] = raw !== "" && Number.isFinite(num) ? num : raw;
    });
    return row;
  });
}

export function column(rows: Row[], name: string): number[] {
  return rows.map((r) => r[name] as number);
}
