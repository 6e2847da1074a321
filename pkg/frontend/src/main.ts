/** Workbench shell: policy builder, scenario composer, run comparison. */

import { ApiClient, type PolicyDoc } from "./api.js";
import {
  allowedComparators,
  compilePolicyForm,
  validatePolicyForm,
  type ConditionRow,
  type PolicyFormModel,
} from "./policyForm.js";
import {
  composerProblems,
  submitScenario,
  type ScenarioComposerModel,
} from "./scenarioComposer.js";
import { runAndCompare } from "./compareView.js";

const api = new ApiClient("");

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

function option(value: string, label?: string): HTMLOptionElement {
  const opt = el("option");
  opt.value = value;
  opt.textContent = label ?? value;
  return opt;
}

// ---------------------------------------------------------------------------
// Policy builder
// ---------------------------------------------------------------------------

function policyPanel(): HTMLElement {
  const panel = el("section", "panel");
  panel.appendChild(el("h2", undefined, "New policy"));

  const form: PolicyFormModel = {
    name: "",
    targetType: "",
    rows: [],
    action: { op: "multiply", variable: "", operand: "" },
    mode: "once",
  };

  const nameInput = el("input");
  nameInput.placeholder = "policy name";
  nameInput.addEventListener("input", () => {
    form.name = nameInput.value;
    refresh();
  });

  const targetInput = el("input");
  targetInput.placeholder = "target agent type (e.g. Migrant)";
  targetInput.addEventListener("input", () => {
    form.targetType = targetInput.value;
    refresh();
  });

  const rowsBox = el("div", "condition-rows");
  const addRow = el("button", undefined, "add condition");
  addRow.addEventListener("click", () => {
    form.rows.push({ variable: "", comparator: "<", value: "" });
    renderRows();
    refresh();
  });

  function renderRows(): void {
    rowsBox.replaceChildren();
    form.rows.forEach((row, i) => {
      const line = el("div", "condition-row");
      const variable = el("input");
      variable.placeholder = "variable";
      variable.value = row.variable;
      variable.addEventListener("input", () => {
        row.variable = variable.value;
        refresh();
      });
      const cmp = el("select");
      for (const c of allowedComparators("number")) cmp.appendChild(option(c));
      cmp.value = row.comparator;
      cmp.addEventListener("change", () => {
        row.comparator = cmp.value as ConditionRow["comparator"];
        refresh();
      });
      const value = el("input");
      value.placeholder = "value";
      value.addEventListener("input", () => {
        const raw = value.value;
        const num = Number(raw);
        row.value = raw !== "" && Number.isFinite(num) ? num :
          raw === "true" ? true : raw === "false" ? false : raw;
        refresh();
      });
      const remove = el("button", undefined, "×");
      remove.addEventListener("click", () => {
        form.rows.splice(i, 1);
        renderRows();
        refresh();
      });
      line.append(variable, cmp, value, remove);
      rowsBox.appendChild(line);
    });
  }

  const opSelect = el("select");
  for (const op of ["set", "add", "multiply"]) opSelect.appendChild(option(op));
  opSelect.value = form.action.op;
  opSelect.addEventListener("change", () => {
    form.action.op = opSelect.value as PolicyFormModel["action"]["op"];
    refresh();
  });
  const actionVar = el("input");
  actionVar.placeholder = "variable to change";
  actionVar.addEventListener("input", () => {
    form.action.variable = actionVar.value;
    refresh();
  });
  const operand = el("input");
  operand.placeholder = "operand (number or expression)";
  operand.addEventListener("input", () => {
    form.action.operand = operand.value;
    refresh();
  });
  const modeSelect = el("select");
  for (const mode of ["once", "continuous"]) modeSelect.appendChild(option(mode));
  modeSelect.addEventListener("change", () => {
    form.mode = modeSelect.value as PolicyFormModel["mode"];
    refresh();
  });

  const preview = el("pre", "preview");
  const problems = el("ul", "problems");
  const submit = el("button", "primary", "create policy");
  const outcome = el("p", "outcome");
  submit.addEventListener("click", async () => {
    try {
      const doc = compilePolicyForm(form);
      await api.createPolicy(doc as PolicyDoc);
      outcome.textContent = `stored policy ${doc.name}`;
      outcome.className = "outcome ok";
    } catch (err) {
      outcome.textContent = String(err instanceof Error ? err.message : err);
      outcome.className = "outcome error";
    }
  });

  function refresh(): void {
    const issues = validatePolicyForm(form);
    problems.replaceChildren(...issues.map((p) => el("li", undefined, p)));
    submit.disabled = issues.length > 0;
    preview.textContent =
      issues.length === 0 ? JSON.stringify(compilePolicyForm(form), null, 2) : "";
  }

  const actionLine = el("div", "condition-row");
  actionLine.append(opSelect, actionVar, operand, modeSelect);
  panel.append(nameInput, targetInput, rowsBox, addRow, actionLine, problems, preview, submit, outcome);
  refresh();
  return panel;
}

// ---------------------------------------------------------------------------
// Scenario composer
// ---------------------------------------------------------------------------

function composerPanel(): HTMLElement {
  const panel = el("section", "panel");
  panel.appendChild(el("h2", undefined, "Compose scenario"));

  const model: ScenarioComposerModel = {
    name: "",
    facets: [],
    flowBindings: {},
    policies: [],
    globals: { iterations: 20, dataCollectionInterval: 5, seed: 42, populations: {} },
    metrics: [],
  };

  const facetsBox = el("div", "facet-checklist");
  const policiesBox = el("div", "policy-multiselect");
  const hintsBox = el("ul", "dependency-hints");
  const problems = el("ul", "problems");
  const submit = el("button", "primary", "validate & save");
  const outcome = el("p", "outcome");

  void api.listFacets().then((facets) => {
    for (const facet of facets) {
      const label = el("label");
      const box = el("input");
      box.type = "checkbox";
      box.value = facet.name;
      box.addEventListener("change", () => {
        model.facets = box.checked
          ? [...model.facets, facet.name]
          : model.facets.filter((f) => f !== facet.name);
        refresh();
      });
      label.append(box, document.createTextNode(" " + facet.name));
      facetsBox.appendChild(label);
    }
  });
  void api.listPolicies().then((policies) => {
    for (const policy of policies) {
      const label = el("label");
      const box = el("input");
      box.type = "checkbox";
      const path = `policies/${policy.name}.json`;
      box.addEventListener("change", () => {
        model.policies = box.checked
          ? [...model.policies, path]
          : model.policies.filter((p) => p !== path);
      });
      label.append(box, document.createTextNode(" " + policy.name));
      policiesBox.appendChild(label);
    }
  });

  const nameInput = el("input");
  nameInput.placeholder = "scenario name";
  nameInput.addEventListener("input", () => {
    model.name = nameInput.value;
    refresh();
  });
  const bindings = el("textarea");
  bindings.placeholder = '{"Migrant": "flows/migrant-documents.graphml"}';
  bindings.addEventListener("input", () => {
    try {
      model.flowBindings = JSON.parse(bindings.value || "{}");
      bindings.classList.remove("invalid");
    } catch {
      bindings.classList.add("invalid");
    }
    refresh();
  });
  const populations = el("textarea");
  populations.placeholder = '{"Migrant": 100}';
  populations.addEventListener("input", () => {
    try {
      model.globals.populations = JSON.parse(populations.value || "{}");
      populations.classList.remove("invalid");
    } catch {
      populations.classList.add("invalid");
    }
    refresh();
  });
  const iterations = el("input");
  iterations.type = "number";
  iterations.value = "20";
  iterations.addEventListener("input", () => {
    model.globals.iterations = Number(iterations.value);
    refresh();
  });
  const seed = el("input");
  seed.type = "number";
  seed.value = "42";
  seed.addEventListener("input", () => {
    model.globals.seed = Number(seed.value);
  });

  submit.addEventListener("click", async () => {
    const result = await submitScenario(api, model);
    hintsBox.replaceChildren();
    if (result.ok) {
      outcome.textContent = `scenario ${model.name} saved`;
      outcome.className = "outcome ok";
      return;
    }
    outcome.className = "outcome error";
    outcome.textContent = "rejected by the server:";
    for (const [facet, missing] of Object.entries(result.hints)) {
      hintsBox.appendChild(
        el("li", undefined, `${facet} also needs: ${missing.join(", ")}`),
      );
    }
    for (const diag of result.report?.errors ?? []) {
      hintsBox.appendChild(el("li", undefined, `${diag.code}: ${diag.message}`));
    }
  });

  function refresh(): void {
    const issues = composerProblems(model);
    problems.replaceChildren(...issues.map((p) => el("li", undefined, p)));
    submit.disabled = issues.length > 0;
  }

  panel.append(
    nameInput,
    el("h3", undefined, "facets"),
    facetsBox,
    el("h3", undefined, "flow bindings"),
    bindings,
    el("h3", undefined, "populations"),
    populations,
    el("h3", undefined, "iterations / seed"),
    iterations,
    seed,
    el("h3", undefined, "policies"),
    policiesBox,
    problems,
    submit,
    outcome,
    hintsBox,
  );
  refresh();
  return panel;
}

// ---------------------------------------------------------------------------
// Run & compare
// ---------------------------------------------------------------------------

function comparePanel(): HTMLElement {
  const panel = el("section", "panel");
  panel.appendChild(el("h2", undefined, "Run & compare"));
  const picker = el("div", "run-picker");
  const chartsRoot = el("div", "compare-root");

  const selected: Array<{ scenario: string; seed: number | null }> = [];
  const chosen = el("ul", "chosen-runs");

  const scenarioSelect = el("select");
  void api.listScenarios().then((scenarios) => {
    for (const scenario of scenarios) scenarioSelect.appendChild(option(scenario.name));
  });
  const seedInput = el("input");
  seedInput.type = "number";
  seedInput.placeholder = "seed (optional)";
  const add = el("button", undefined, "add run");
  add.addEventListener("click", () => {
    const seed = seedInput.value === "" ? null : Number(seedInput.value);
    selected.push({ scenario: scenarioSelect.value, seed });
    chosen.appendChild(
      el("li", undefined, `${scenarioSelect.value} (seed ${seed ?? "scenario default"})`),
    );
  });
  const go = el("button", "primary", "run & compare");
  go.addEventListener("click", () => {
    if (selected.length === 0) return;
    void runAndCompare(api, selected, chartsRoot);
  });

  picker.append(scenarioSelect, seedInput, add, go);
  panel.append(picker, chosen, chartsRoot);
  return panel;
}

function mount(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.append(policyPanel(), composerPanel(), comparePanel());
}

mount();
