import { ApiClient, ConflictError } from "./api";
import { daysToHours, describeConversion } from "./convert";
import { renderDecisionGrid } from "./decisionGrid";
import { renderExposureChart } from "./exposureChart";
import { runWhatIf } from "./whatIfPanel";
import type { DecisionTableView, PatientRecordView } from "./types";

interface AppState {
  sessionId: string | null;
  revision: number;
  decision: DecisionTableView | null;
  mutationInFlight: boolean;
}

/** Wire the live-trial page.  Server-authoritative: every number rendered
 * comes from the most recent service payload. */
export function bootstrap(root: HTMLElement, api: ApiClient): AppState {
  const doc = root.ownerDocument;
  const state: AppState = { sessionId: null, revision: 0, decision: null, mutationInFlight: false };

  const gridHost = doc.createElement("div");
  gridHost.id = "grid";
  const whatIfHost = doc.createElement("div");
  whatIfHost.id = "what-if";
  const chartHost = doc.createElement("div");
  chartHost.id = "chart";
  const status = doc.createElement("div");
  status.id = "status";

  const form = doc.createElement("form");
  form.id = "record-form";
  form.innerHTML = `
    <input name="dose" type="number" step="any" placeholder="dose" required />
    <input name="every_hours" type="number" step="any" placeholder="every (h)" required />
    <label><input name="dlt" type="checkbox" /> DLT</label>
    <input name="time_days" type="number" step="any" placeholder="time (days)" required />
    <span id="conversion"></span>
    <button type="submit">add record</button>
  `;

  const conversion = form.querySelector<HTMLElement>("#conversion")!;
  form.querySelector<HTMLInputElement>("[name=time_days]")!.addEventListener("input", (ev) => {
    const days = Number((ev.target as HTMLInputElement).value);
    conversion.textContent = Number.isFinite(days) ? describeConversion(days) : "";
  });

  async function refresh(): Promise<void> {
    if (!state.sessionId) return;
    const envelope = await api.getDecision(state.sessionId);
    state.revision = envelope.revision;
    state.decision = renderDecisionGrid(gridHost, envelope.decision);
    status.textContent = `revision ${state.revision}`;
  }

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (!state.sessionId || state.mutationInFlight) return;
    const data = new FormData(form);
    const record: PatientRecordView = {
      dose: Number(data.get("dose")),
      freq: 1 / Number(data.get("every_hours")),
      dlt: data.get("dlt") === "on",
      time_hours: daysToHours(Number(data.get("time_days"))),
    };
    state.mutationInFlight = true;
    api
      .postRecord(state.sessionId, record, state.revision)
      .then((envelope) => {
        state.revision = envelope.revision;
        state.decision = renderDecisionGrid(gridHost, envelope.decision);
        status.textContent = `revision ${state.revision}`;
      })
      .catch(async (err) => {
        if (err instanceof ConflictError) {
          status.textContent = "conflict: session changed elsewhere, reloaded";
          await refresh();
        } else {
          status.textContent = String(err);
        }
      })
      .finally(() => {
        state.mutationInFlight = false;
      });
  });

  const whatIfButton = doc.createElement("button");
  whatIfButton.id = "what-if-dlt";
  whatIfButton.textContent = "what if: DLT at recommended combination?";
  whatIfButton.addEventListener("click", () => {
    if (!state.sessionId || !state.decision?.recommendation) return;
    const rec = state.decision.recommendation;
    void runWhatIf(api, state.sessionId, state.decision, [
      { dose: rec.dose, freq: rec.freq, dlt: true, time_hours: daysToHours(14) },
    ], whatIfHost);
  });

  root.replaceChildren(status, form, gridHost, whatIfButton, whatIfHost, chartHost);

  void api.createSession({}).then(async (envelope) => {
    state.sessionId = envelope.sessionId;
    state.revision = envelope.revision;
    state.decision = renderDecisionGrid(gridHost, envelope.decision);
    status.textContent = `session ${envelope.sessionId} | revision ${state.revision}`;
    const rec = envelope.decision.recommendation;
    if (rec) {
      const samples = await api.getExposure(envelope.sessionId, rec.dose, rec.freq);
      renderExposureChart(chartHost, samples);
    }
  });

  return state;
}

declare global {
  interface Window {
    TITEPK_API_BASE?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = window.TITEPK_API_BASE ?? "http://127.0.0.1:8000";
  bootstrap(document.getElementById("app")!, new ApiClient(base));
}
