// @vitest-environment jsdom
// End-to-end suite against the real trial service over HTTP.
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ConflictError } from "../src/api";
import { renderDecisionGrid } from "../src/decisionGrid";
import { renderWhatIfPanel } from "../src/whatIfPanel";

const PORT = 8400 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;

const fixture = JSON.parse(
  readFileSync("fixtures/prior_decision_table.json", "utf8"),
);

let server: ChildProcess;
const api = new ApiClient(BASE, (input, init) => globalThis.fetch(input, init));

function host(): HTMLElement {
  const div = document.createElement("div");
  document.body.appendChild(div);
  return div;
}

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 45_000;
  while (Date.now() < deadline) {
    try {
      const response = await globalThis.fetch(`${BASE}/openapi.json`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("trial service did not come up in time");
}

beforeAll(async () => {
  const storeDir = mkdtempSync(join(tmpdir(), "titepk-sessions-"));
  server = spawn(
    "python3",
    ["-m", "uvicorn", "titepk.service:app", "--host", "127.0.0.1", "--port", String(PORT)],
    {
      env: { ...process.env, TITEPK_SESSIONS_DIR: storeDir },
      stdio: "ignore",
    },
  );
  await waitForServer();
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("live service", () => {
  it("serves a prior-only grid matching the fixture payload snapshot", async () => {
    const session = await api.createSession({});
    expect(session.revision).toBe(0);
    expect(session.decision.rows).toHaveLength(fixture.rows.length);
    for (const [i, row] of session.decision.rows.entries()) {
      const exp = fixture.rows[i];
      expect(row.dose).toBe(exp.dose);
      expect(row.schedule).toBe(exp.schedule);
      expect(row.p_overdosing).toBeCloseTo(exp.p_overdosing, 9);
      expect(row.p_target).toBeCloseTo(exp.p_target, 9);
      expect(row.p_underdosing).toBeCloseTo(exp.p_underdosing, 9);
      expect(row.ewoc_ok).toBe(exp.ewoc_ok);
    }
    expect(session.decision.recommendation).toEqual(fixture.recommendation);

    const live = host();
    const snapshot = host();
    renderDecisionGrid(live, session.decision);
    renderDecisionGrid(snapshot, fixture);
    expect(live.innerHTML).toBe(snapshot.innerHTML);
  });

  it("raises displayed P(OD) at the tested cell under a what-if DLT", async () => {
    const session = await api.createSession({});
    const rec = session.decision.recommendation!;
    const before = session.decision.rows.find(
      (r) => r.dose === rec.dose && r.schedule === rec.schedule,
    )!;
    const envelope = await api.whatIf(session.sessionId, [
      { dose: rec.dose, freq: rec.freq, dlt: true, time_hours: 336 },
    ]);
    const after = envelope.decision.rows.find(
      (r) => r.dose === rec.dose && r.schedule === rec.schedule,
    )!;
    expect(after.p_overdosing).toBeGreaterThan(before.p_overdosing);

    const container = host();
    renderWhatIfPanel(container, session.decision, envelope.decision);
    const item = container.querySelector(`[data-combo="${rec.dose}${rec.schedule}"].delta-up`);
    expect(item).not.toBeNull();

    // a what-if never moves the session
    const current = await api.getDecision(session.sessionId);
    expect(current.revision).toBe(0);
  });

  it("restores the grid snapshot after a record add/delete round trip", async () => {
    const session = await api.createSession({});
    const before = host();
    renderDecisionGrid(before, session.decision);

    const added = await api.postRecord(
      session.sessionId,
      { dose: 16, freq: 1 / 48, dlt: true, time_hours: 120 },
      session.revision,
    );
    expect(added.revision).toBe(1);
    const during = host();
    renderDecisionGrid(during, added.decision);
    expect(during.innerHTML).not.toBe(before.innerHTML);

    const restored = await api.deleteRecord(session.sessionId, 0, added.revision);
    expect(restored.revision).toBe(2);
    const after = host();
    renderDecisionGrid(after, restored.decision);
    expect(after.innerHTML).toBe(before.innerHTML);
  });

  it("rejects a stale revision with a conflict", async () => {
    const session = await api.createSession({});
    await api.postRecord(
      session.sessionId,
      { dose: 8, freq: 1 / 192, dlt: false, time_hours: 672 },
      0,
    );
    await expect(
      api.postRecord(session.sessionId, { dose: 8, freq: 1 / 192, dlt: false, time_hours: 672 }, 0),
    ).rejects.toBeInstanceOf(ConflictError);
    const records = await api.getRecords(session.sessionId);
    expect(records.records).toHaveLength(1);
  });

  it("serves exposure samples whose reference curve ends at one", async () => {
    const session = await api.createSession({});
    const samples = await api.getExposure(session.sessionId, 24, 1 / 96, 673);
    expect(samples.cumulative_exposure.at(-1)).toBeCloseTo(1.0, 9);
    expect(samples.times_hours).toHaveLength(673);
  });
});
