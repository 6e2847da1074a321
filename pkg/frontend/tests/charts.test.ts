// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { renderMetricChart } from "../src/charts.js";

describe("renderMetricChart", () => {
  it("plots one marker per collected tick carrying the exact value", () => {
    const svg = renderMetricChart("meals", [
      { runId: "r1", ticks: [0, 5, 10], values: [3, 18.5, 42] },
    ]);
    const dots = [...svg.querySelectorAll("circle")];
    expect(dots.map((d) => d.dataset.tick)).toEqual(["0", "5", "10"]);
    expect(dots.map((d) => Number(d.dataset.value))).toEqual([3, 18.5, 42]);
  });

  it("overlays one series group per run", () => {
    const svg = renderMetricChart("meals", [
      { runId: "a", ticks: [0, 1], values: [1, 2] },
      { runId: "b", ticks: [0, 1], values: [2, 4] },
    ]);
    const groups = [...svg.querySelectorAll<SVGGElement>("g.run-series")];
    expect(groups.map((g) => g.dataset.runId)).toEqual(["a", "b"]);
  });

  it("breaks the line at null cells instead of interpolating", () => {
    const svg = renderMetricChart("m", [
      { runId: "r", ticks: [0, 1, 2, 3], values: [1, null, 2, 3] },
    ]);
    const lines = [...svg.querySelectorAll("polyline")];
    // the single-point segment before the null draws no line; 2-3 does
    expect(lines).toHaveLength(1);
    expect(lines[0].getAttribute("points")!.split(" ")).toHaveLength(2);
    expect(svg.querySelectorAll("circle")).toHaveLength(3);
  });

  it("renders a placeholder when there is nothing to plot", () => {
    const svg = renderMetricChart("m", [{ runId: "r", ticks: [], values: [] }]);
    expect(svg.textContent).toContain("no data");
  });
});
