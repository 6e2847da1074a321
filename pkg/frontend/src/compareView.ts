/** Run-and-compare: start jobs, poll until terminal, overlay each metric's
 * series across runs, and tabulate final values. A failed run renders its
 * server diagnostics instead of charts. */

import { ApiClient, pollRun, type RunMetrics, type RunStatus } from "./api.js";
import { renderMetricChart, type Series } from "./charts.js";

export interface RunRequestSpec {
  scenario: string;
  seed?: number | null;
}

export interface CompareOutcome {
  statuses: RunStatus[];
  metrics: RunMetrics[]; // one per successful run, aligned with statuses
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function formatCell(value: number | null | undefined): string {
  if (value === null || value === undefined) return "—";
  return String(value);
}

/** Start the requested runs, poll them, and render the comparison into
 * `root`. Returns the terminal statuses and metric payloads for callers
 * that want the raw numbers. */
export async function runAndCompare(
  api: ApiClient,
  requests: RunRequestSpec[],
  root: HTMLElement,
  pollIntervalMs = 1000,
): Promise<CompareOutcome> {
  root.replaceChildren(el("p", "compare-status", "starting runs…"));

  const started = await Promise.all(
    requests.map((r) => api.startRun(r.scenario, r.seed)),
  );
  const progress = el("p", "compare-status");
  root.replaceChildren(progress);

  const statuses = await Promise.all(
    started.map((s) =>
      pollRun(api, s.id, pollIntervalMs, (status) => {
        progress.textContent = started
          .map((j) => (j.id === status.id ? status : null))
          .filter(Boolean)
          .map((st) => `${st!.scenario} [${st!.id}]: ${st!.state} ${st!.progress.completed}/${st!.progress.total}`)
          .join(" · ") || progress.textContent;
      }),
    ),
  );

  root.replaceChildren();
  const failed = statuses.filter((s) => s.state === "failed");
  for (const status of failed) {
    const box = el("div", "run-failed");
    box.dataset.runId = status.id;
    box.appendChild(el("h3", undefined, `run ${status.id} (${status.scenario}) failed`));
    box.appendChild(el("pre", "diagnostics", status.error ?? "unknown error"));
    root.appendChild(box);
  }
  const succeeded = statuses.filter((s) => s.state === "done");
  const payloads = await Promise.all(succeeded.map((s) => api.getRunMetrics(s.id)));
  if (payloads.length > 0) {
    renderComparison(root, succeeded, payloads);
  }
  return { statuses, metrics: payloads };
}

/** Overlaid per-metric charts plus a final-value table, straight from the
 * metric payloads (charts carry the exact values in data attributes). */
export function renderComparison(
  root: HTMLElement,
  statuses: RunStatus[],
  payloads: RunMetrics[],
): void {
  const shared = Object.keys(payloads[0]?.metrics ?? {}).filter((name) =>
    payloads.every((p) => name in p.metrics),
  );

  const charts = el("div", "charts");
  for (const metric of shared) {
    const section = el("section", "metric-section");
    section.appendChild(el("h3", undefined, metric));
    const series: Series[] = payloads.map((p) => ({
      runId: p.id,
      ticks: p.ticks,
      values: p.metrics[metric],
    }));
    section.appendChild(renderMetricChart(metric, series));
    charts.appendChild(section);
  }
  root.appendChild(charts);

  const table = el("table", "final-values");
  const head = el("tr");
  head.appendChild(el("th", undefined, "metric"));
  for (const status of statuses) {
    head.appendChild(el("th", undefined, `${status.scenario} [${status.id}]`));
  }
  table.appendChild(head);
  for (const metric of shared) {
    const row = el("tr");
    row.dataset.metric = metric;
    row.appendChild(el("td", undefined, metric));
    payloads.forEach((p) => {
      const values = p.metrics[metric];
      const cell = el("td", undefined, formatCell(values[values.length - 1]));
      cell.dataset.runId = p.id;
      row.appendChild(cell);
    });
    table.appendChild(row);
  }
  root.appendChild(table);
}
