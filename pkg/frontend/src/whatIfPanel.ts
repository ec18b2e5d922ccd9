import { ApiClient, ApiError, ConflictError } from "./api";
import { renderDecisionGrid } from "./decisionGrid";
import type { DecisionTableView, PatientRecordView } from "./types";

export interface CellDelta {
  dose: number;
  schedule: string;
  d_overdosing: number;
  d_target: number;
}

/** Per-cell probability changes between the current and hypothetical tables. */
export function cellDeltas(current: DecisionTableView, hypothetical: DecisionTableView): CellDelta[] {
  const byKey = new Map(current.rows.map((r) => [`${r.schedule}|${r.dose}`, r]));
  return hypothetical.rows.map((row) => {
    const base = byKey.get(`${row.schedule}|${row.dose}`);
    return {
      dose: row.dose,
      schedule: row.schedule,
      d_overdosing: base ? row.p_overdosing - base.p_overdosing : NaN,
      d_target: base ? row.p_target - base.p_target : NaN,
    };
  });
}

function deltaList(doc: Document, deltas: CellDelta[]): HTMLElement {
  const list = doc.createElement("ul");
  list.className = "delta-list";
  for (const d of deltas) {
    const item = doc.createElement("li");
    item.dataset.combo = `${d.dose}${d.schedule}`;
    const sign = d.d_overdosing >= 0 ? "+" : "";
    item.textContent = `${d.dose}${d.schedule}: overdosing ${sign}${d.d_overdosing.toFixed(3)}`;
    item.className = d.d_overdosing > 0 ? "delta-up" : "delta-down";
    list.appendChild(item);
  }
  return list;
}

/**
 * Side-by-side current vs hypothetical grids plus per-cell deltas.  Pure
 * render; the session itself is never mutated by a what-if.
 */
export function renderWhatIfPanel(
  container: HTMLElement,
  current: DecisionTableView,
  hypothetical: DecisionTableView,
): CellDelta[] {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const left = doc.createElement("div");
  left.className = "what-if-current";
  const right = doc.createElement("div");
  right.className = "what-if-hypothetical";
  renderDecisionGrid(left, current);
  renderDecisionGrid(right, hypothetical);
  container.appendChild(left);
  container.appendChild(right);
  const deltas = cellDeltas(current, hypothetical);
  container.appendChild(deltaList(doc, deltas));
  return deltas;
}

/**
 * Ask the service for a what-if table and render it; conflicts and network
 * failures surface as a banner with a retry affordance instead of a partial
 * render.
 */
export async function runWhatIf(
  api: ApiClient,
  sessionId: string,
  current: DecisionTableView,
  hypothetical: PatientRecordView[],
  container: HTMLElement,
): Promise<CellDelta[] | null> {
  const doc = container.ownerDocument;
  try {
    const envelope = await api.whatIf(sessionId, hypothetical);
    return renderWhatIfPanel(container, current, envelope.decision);
  } catch (err) {
    container.replaceChildren();
    const banner = doc.createElement("div");
    banner.className = "banner banner-error";
    if (err instanceof ConflictError) {
      banner.textContent = "session changed underneath you; refresh and retry";
    } else if (err instanceof ApiError && err.status === 0) {
      banner.textContent = "offline: request queued nowhere, retry when connected";
    } else {
      banner.textContent = `what-if failed: ${String(err)}`;
    }
    const retry = doc.createElement("button");
    retry.className = "retry";
    retry.textContent = "retry";
    retry.addEventListener("click", () => {
      void runWhatIf(api, sessionId, current, hypothetical, container);
    });
    banner.appendChild(retry);
    container.appendChild(banner);
    return null;
  }
}
