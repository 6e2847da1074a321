// @vitest-environment jsdom
import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, type RunMetrics } from "../src/api.js";
import { runAndCompare } from "../src/compareView.js";

type Handler = (init?: RequestInit) => { status: number; body: unknown };

function fakeFetch(routes: Record<string, Handler>): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const key = `${method} ${url}`;
    const handler = routes[key];
    if (!handler) throw new Error(`unrouted request: ${key}`);
    const { status, body } = handler(init);
    return {
      ok: status >= 200 && status < 300,
      status,
      statusText: String(status),
      json: async () => body,
    } as Response;
  }) as typeof fetch;
}

const METRICS_A: RunMetrics = {
  id: "runA",
  ticks: [0, 5, 9],
  metrics: { meals: [10, 55.5, 90], outings: [4, 20, null] },
};
const METRICS_B: RunMetrics = {
  id: "runB",
  ticks: [0, 5, 9],
  metrics: { meals: [12, 40, 77], outings: [6, 18, 30] },
};

function status(id: string, state: string, completed = 0) {
  return {
    id,
    scenario: "lockdown",
    seed: null,
    state,
    progress: { completed, total: 10 },
    error: state === "failed" ? "division by zero [tick=3]" : null,
    archive: state === "done" ? `/runs/${id}` : null,
  };
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("runAndCompare", () => {
  it("starts jobs, polls to done, overlays charts, tabulates final values", async () => {
    let startCount = 0;
    const polls: Record<string, number> = { runA: 0, runB: 0 };
    vi.stubGlobal(
      "fetch",
      fakeFetch({
        "POST /runs": () => ({
          status: 202,
          body: status(startCount++ === 0 ? "runA" : "runB", "queued"),
        }),
        "GET /runs/runA": () => ({
          status: 200,
          body: status("runA", ++polls.runA < 2 ? "running" : "done", 10),
        }),
        "GET /runs/runB": () => ({
          status: 200,
          body: status("runB", ++polls.runB < 3 ? "running" : "done", 10),
        }),
        "GET /runs/runA/metrics": () => ({ status: 200, body: METRICS_A }),
        "GET /runs/runB/metrics": () => ({ status: 200, body: METRICS_B }),
      }),
    );
    const root = document.createElement("div");
    const outcome = await runAndCompare(
      new ApiClient(""),
      [{ scenario: "lockdown", seed: 1 }, { scenario: "lockdown", seed: 2 }],
      root,
      1, // fast polling for the test; production default is 1000 ms
    );

    expect(outcome.statuses.map((s) => s.state)).toEqual(["done", "done"]);
    // two overlaid series per metric chart
    const charts = [...root.querySelectorAll<SVGSVGElement>("svg.metric-chart")];
    expect(charts.map((c) => c.dataset.metric)).toEqual(["meals", "outings"]);
    for (const chart of charts) {
      const groups = [...chart.querySelectorAll<SVGGElement>("g.run-series")];
      expect(groups.map((g) => g.dataset.runId)).toEqual(["runA", "runB"]);
    }
    // chart markers carry exactly the payload values
    const mealsChart = charts[0];
    const aDots = [...mealsChart.querySelectorAll<SVGCircleElement>('g[data-run-id="runA"] circle')];
    expect(aDots.map((d) => Number(d.dataset.value))).toEqual(METRICS_A.metrics.meals);
    // final-value table mirrors the last payload entries
    const finalRow = root.querySelector('tr[data-metric="meals"]')!;
    const cells = [...finalRow.querySelectorAll("td")].slice(1);
    expect(cells.map((c) => c.textContent)).toEqual(["90", "77"]);
    const outingsRow = root.querySelector('tr[data-metric="outings"]')!;
    const outingsCells = [...outingsRow.querySelectorAll("td")].slice(1);
    expect(outingsCells.map((c) => c.textContent)).toEqual(["—", "30"]);
  });

  it("renders a failure state with the server diagnostics", async () => {
    vi.stubGlobal(
      "fetch",
      fakeFetch({
        "POST /runs": () => ({ status: 202, body: status("runX", "queued") }),
        "GET /runs/runX": () => ({ status: 200, body: status("runX", "failed") }),
      }),
    );
    const root = document.createElement("div");
    const outcome = await runAndCompare(new ApiClient(""), [{ scenario: "boom" }], root, 1);
    expect(outcome.statuses[0].state).toBe("failed");
    const failed = root.querySelector(".run-failed")!;
    expect(failed.querySelector("pre.diagnostics")!.textContent).toContain(
      "division by zero",
    );
    expect(root.querySelector("svg.metric-chart")).toBeNull();
  });
});
