import { SchemaError, validateDecisionTable } from "./schema";
import type { DecisionRowView, DecisionTableView } from "./types";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(p: number): string {
  return p.toFixed(3);
}

function bar(doc: Document, row: DecisionRowView): HTMLElement {
  const wrap = el(doc, "div", "prob-bar");
  const segments: [string, number][] = [
    ["underdosing", row.p_underdosing],
    ["target", row.p_target],
    ["overdosing", row.p_overdosing],
  ];
  for (const [kind, value] of segments) {
    const seg = el(doc, "span", `seg seg-${kind}`);
    seg.style.width = `${(100 * value).toFixed(2)}%`;
    seg.title = `${kind}: ${fmt(value)}`;
    wrap.appendChild(seg);
  }
  return wrap;
}

function cellFor(doc: Document, row: DecisionRowView, recommended: boolean): HTMLTableCellElement {
  const cell = doc.createElement("td");
  cell.className = "combo-cell";
  cell.dataset.combo = `${row.dose}${row.schedule}`;
  if (!row.ewoc_ok) cell.classList.add("ineligible");
  if (recommended) cell.classList.add("recommended");
  cell.appendChild(bar(doc, row));
  cell.appendChild(
    el(
      doc,
      "div",
      "probs",
      `UD ${fmt(row.p_underdosing)} | TT ${fmt(row.p_target)} | OD ${fmt(row.p_overdosing)}`,
    ),
  );
  if (row.mean_dlt_prob !== null) {
    cell.appendChild(el(doc, "div", "mean", `mean DLT risk ${fmt(row.mean_dlt_prob)}`));
  }
  if (!row.ewoc_ok) cell.appendChild(el(doc, "div", "flag", "not admissible"));
  if (recommended) cell.appendChild(el(doc, "div", "flag flag-rec", "recommended"));
  return cell;
}

/**
 * Render the doses-by-schedules decision grid into the container.
 *
 * Every number shown comes from the payload; a payload that fails
 * validation produces a blocking error banner and nothing else.
 */
export function renderDecisionGrid(container: HTMLElement, payload: unknown): DecisionTableView | null {
  const doc = container.ownerDocument;
  container.replaceChildren();
  let table: DecisionTableView;
  try {
    table = validateDecisionTable(payload);
  } catch (err) {
    const banner = el(
      doc,
      "div",
      "banner banner-error",
      err instanceof SchemaError ? err.message : `invalid payload: ${String(err)}`,
    );
    container.appendChild(banner);
    return null;
  }

  if (table.rows.every((row) => !row.ewoc_ok)) {
    container.appendChild(
      el(doc, "div", "banner banner-stop", "Stop: all combinations overdosing"),
    );
  }

  const doses = [...new Set(table.rows.map((r) => r.dose))].sort((a, b) => a - b);
  const schedules = [...new Set(table.rows.map((r) => r.schedule))];
  const byKey = new Map(table.rows.map((r) => [`${r.schedule}|${r.dose}`, r]));

  const grid = doc.createElement("table");
  grid.className = "decision-grid";
  const head = doc.createElement("tr");
  head.appendChild(el(doc, "th", undefined, "schedule \\ dose"));
  for (const dose of doses) head.appendChild(el(doc, "th", undefined, String(dose)));
  grid.appendChild(head);

  for (const schedule of schedules) {
    const tr = doc.createElement("tr");
    tr.appendChild(el(doc, "th", undefined, schedule));
    for (const dose of doses) {
      const row = byKey.get(`${schedule}|${dose}`);
      if (!row) {
        tr.appendChild(el(doc, "td", "combo-cell missing", "-"));
        continue;
      }
      const recommended =
        table.recommendation !== null &&
        table.recommendation.dose === dose &&
        table.recommendation.schedule === schedule;
      tr.appendChild(cellFor(doc, row, recommended));
    }
    grid.appendChild(tr);
  }
  container.appendChild(grid);

  const note = table.recommendation
    ? `recommended next combination: ${table.recommendation.dose}${table.recommendation.schedule}`
    : "no admissible combination";
  container.appendChild(el(doc, "div", "grid-note", note));
  return table;
}
