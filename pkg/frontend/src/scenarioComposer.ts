/** Scenario composer: facet checklist, one flow binding per agent type,
 * policy multiselect, and the globals form. The server stays the single
 * validator — a rejected submission returns the diagnostics report, from
 * which the composer extracts per-facet dependency hints. */

import { ApiClient, ApiError, type Report, type ScenarioDoc } from "./api.js";

export interface ScenarioComposerModel {
  name: string;
  facets: string[];
  flowBindings: Record<string, string>;
  policies: string[]; // workspace-relative policy file paths
  globals: {
    iterations: number;
    dataCollectionInterval: number;
    seed: number;
    populations: Record<string, number>;
  };
  metrics: Array<Record<string, unknown>>;
}

/** Client-side completeness gate; the real validation happens server-side. */
export function composerProblems(model: ScenarioComposerModel): string[] {
  const problems: string[] = [];
  if (!model.name.trim()) problems.push("scenario needs a name");
  if (model.facets.length === 0) problems.push("select at least one facet");
  if (!Number.isInteger(model.globals.iterations) || model.globals.iterations < 1) {
    problems.push("iterations must be a whole number >= 1");
  }
  if (
    !Number.isInteger(model.globals.dataCollectionInterval) ||
    model.globals.dataCollectionInterval < 1
  ) {
    problems.push("collection interval must be a whole number >= 1");
  }
  return problems;
}

export function compileScenario(model: ScenarioComposerModel): ScenarioDoc {
  return {
    name: model.name,
    facets: [...model.facets],
    flow_bindings: { ...model.flowBindings },
    policies: [...model.policies],
    globals: {
      iterations: model.globals.iterations,
      data_collection_interval: model.globals.dataCollectionInterval,
      seed: model.globals.seed,
      populations: { ...model.globals.populations },
    },
    metrics: model.metrics,
  };
}

/** facet name -> the dependency names the server said were missing. */
export function dependencyHints(report: Report): Record<string, string[]> {
  const hints: Record<string, string[]> = {};
  for (const diag of report.errors) {
    if (diag.code !== "MISSING_DEPENDENCY" || !diag.where) continue;
    const match = diag.message.match(/unselected facet\(s\): (.+)$/);
    if (match) {
      hints[diag.where] = match[1].split(",").map((s) => s.trim());
    }
  }
  return hints;
}

export interface SubmitResult {
  ok: boolean;
  report: Report | null;
  hints: Record<string, string[]>;
}

/** POST the compiled scenario; a 4xx comes back as structured hints rather
 * than a thrown error so the form can annotate itself. */
export async function submitScenario(
  api: ApiClient,
  model: ScenarioComposerModel,
): Promise<SubmitResult> {
  const problems = composerProblems(model);
  if (problems.length > 0) {
    return {
      ok: false,
      report: {
        ok: false,
        errors: problems.map((p) => ({ code: "FORM", where: null, message: p })),
        warnings: [],
      },
      hints: {},
    };
  }
  try {
    await api.createScenario(compileScenario(model));
    return { ok: true, report: null, hints: {} };
  } catch (err) {
    if (err instanceof ApiError && err.report) {
      return { ok: false, report: err.report, hints: dependencyHints(err.report) };
    }
    throw err;
  }
}
