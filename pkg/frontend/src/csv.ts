/** Minimal RFC-4180 CSV reader (quoted fields, CRLF tolerant). */

export interface Table {
  columns: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const rows: string[][] = [];
  let field = "";
  let row: string[] = [];
  let inQuotes = false;
  let i = 0;
  const push = () => {
    row.push(field);
    field = "";
  };
  const pushRow = () => {
    push();
    rows.push(row);
    row = [];
  };
  while (i < text.length) {
    const c = text[i];
    if (inQuotes) {
      if (c === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          inQuotes = false;
        }
      } else {
        field += c;
      }
    } else if (c === '"') {
      inQuotes = true;
    } else if (c === ",") {
      push();
    } else if (c === "\n") {
      pushRow();
    } else if (c !== "\r") {
      field += c;
    }
    i++;
  }
  if (field.length > 0 || row.length > 0) pushRow();
  if (rows.length === 0) throw new Error("empty CSV");
  return { columns: rows[0], rows: rows.slice(1) };
}

export function columnIndex(t: Table, name: string): number {
  const i = t.columns.indexOf(name);
  if (i < 0) throw new Error(`missing column: ${name}`);
  return i;
}

export function numbers(t: Table, name: string): number[] {
  const i = columnIndex(t, name);
  return t.rows.map((r) => Number(r[i]));
}
