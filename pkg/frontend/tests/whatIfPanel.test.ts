// @vitest-environment jsdom
import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { cellDeltas, renderWhatIfPanel, runWhatIf } from "../src/whatIfPanel";

const fixture = JSON.parse(
  readFileSync("fixtures/prior_decision_table.json", "utf8"),
);

function bumpedCopy(delta: number) {
  const copy = structuredClone(fixture);
  for (const row of copy.rows) {
    const shift = Math.min(delta, row.p_underdosing);
    row.p_underdosing -= shift;
    row.p_overdosing += shift;
    row.ewoc_ok = row.p_overdosing < copy.bound;
  }
  copy.recommendation = null;
  for (const row of copy.rows) {
    if (row.ewoc_ok) {
      copy.recommendation = { dose: row.dose, schedule: row.schedule, freq: row.freq };
    }
  }
  return copy;
}

function host(): HTMLElement {
  const div = document.createElement("div");
  document.body.appendChild(div);
  return div;
}

describe("what-if panel", () => {
  it("computes per-cell deltas against the current table", () => {
    const hypothetical = bumpedCopy(0.05);
    const deltas = cellDeltas(fixture, hypothetical);
    expect(deltas).toHaveLength(12);
    for (const d of deltas) {
      expect(d.d_overdosing).toBeGreaterThan(0);
    }
  });

  it("renders side-by-side grids plus the delta list", () => {
    const container = host();
    const deltas = renderWhatIfPanel(container, fixture, bumpedCopy(0.03));
    expect(container.querySelectorAll("table.decision-grid")).toHaveLength(2);
    expect(container.querySelectorAll(".delta-list li")).toHaveLength(deltas.length);
    expect(container.querySelector(".delta-up")).not.toBeNull();
  });

  it("surfaces a conflict with a retry affordance and no partial render", async () => {
    const responses = [new Response("stale revision", { status: 409 })];
    const api = new ApiClient("http://service", async () => responses.shift()!);
    const container = host();
    const result = await runWhatIf(api, "s1", fixture, [], container);
    expect(result).toBeNull();
    expect(container.querySelector(".banner-error")?.textContent).toContain("refresh and retry");
    expect(container.querySelector("button.retry")).not.toBeNull();
    expect(container.querySelector("table.decision-grid")).toBeNull();
  });

  it("reports offline failures without optimistic rendering", async () => {
    const api = new ApiClient("http://service", async () => {
      throw new TypeError("fetch failed");
    });
    const container = host();
    const result = await runWhatIf(api, "s1", fixture, [], container);
    expect(result).toBeNull();
    expect(container.querySelector(".banner-error")?.textContent).toContain("offline");
  });
});
