// @vitest-environment jsdom
//
// End-to-end acceptance against a live engine server:
// 1. the policy form compiles the subsidy example to JSON the server
//    accepts unmodified (201);
// 2. the comparison view renders exactly the values served by
//    GET /runs/{id}/metrics for two overlaid runs.

import { spawn, type ChildProcess } from "node:child_process";
import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync, unlinkSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { compilePolicyForm } from "../src/policyForm.js";
import { runAndCompare } from "../src/compareView.js";

const PORT = 8461;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let workdir: string;

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "facetsim-ui-"));
  execFileSync("python3", [
    "-c",
    `import shutil; from facetsim.demos import demo_workspace; shutil.copytree(demo_workspace(), ${JSON.stringify(join(workdir, "ws"))})`,
  ]);
  // the bundled workspace already ships this policy; the form recreates it
  unlinkSync(join(workdir, "ws", "policies", "insurance-subsidy.json"));

  server = spawn(
    "facetsim-server",
    ["--workspace", join(workdir, "ws"), "--bind", `127.0.0.1:${PORT}`],
    { stdio: "ignore" },
  );
  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      const res = await fetch(`${BASE}/health`);
      if (res.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("server did not come up");
    await new Promise((r) => setTimeout(r, 200));
  }
});

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

describe("policy form against the live server", () => {
  it("server accepts the compiled subsidy JSON unmodified with 201", async () => {
    const doc = compilePolicyForm({
      name: "insurance-subsidy",
      targetType: "Migrant",
      rows: [{ variable: "income", comparator: "<", value: 30000 }],
      action: { op: "multiply", variable: "insurance_cost", operand: 0.5 },
      mode: "once",
    });
    const res = await fetch(`${BASE}/policies`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    expect(res.status).toBe(201);
    expect(await res.json()).toEqual(doc);
  });
});

describe("comparison view against the live server", () => {
  it("renders exactly the values served by GET /runs/{id}/metrics for two runs", async () => {
    const api = new ApiClient(BASE);
    const root = document.createElement("div");
    const outcome = await runAndCompare(
      api,
      [
        { scenario: "lockdown", seed: 1 },
        { scenario: "lockdown", seed: 2 },
      ],
      root,
      100,
    );
    expect(outcome.statuses.map((s) => s.state)).toEqual(["done", "done"]);

    for (const status of outcome.statuses) {
      const payload = await api.getRunMetrics(status.id);
      for (const [metric, values] of Object.entries(payload.metrics)) {
        const dots = [
          ...root.querySelectorAll<SVGCircleElement>(
            `svg[data-metric="${metric}"] g[data-run-id="${status.id}"] circle`,
          ),
        ];
        expect(dots.map((d) => Number(d.dataset.tick))).toEqual(payload.ticks);
        expect(dots.map((d) => Number(d.dataset.value))).toEqual(values);
        const cell = root.querySelector(
          `tr[data-metric="${metric}"] td[data-run-id="${status.id}"]`,
        )!;
        expect(cell.textContent).toBe(String(values[values.length - 1]));
      }
    }
  });
});
