/** Policy builder: condition rows + one action row compile to a policy document.
 *
 * The form is schema-driven: each row picks a variable of the target agent
 * type, a comparator the variable's kind allows, and a value. Rows join
 * with `and`; no rows means the policy applies to every agent of the type.
 */

import type { PolicyDoc } from "./api.js";

export type VarKind = "number" | "boolean" | "text";
export type Comparator = "<" | "<=" | ">" | ">=" | "==" | "!=";

export interface ConditionRow {
  variable: string;
  comparator: Comparator;
  value: number | boolean | string;
}

export interface ActionRow {
  op: "set" | "add" | "multiply";
  variable: string;
  operand: number | string;
}

export interface PolicyFormModel {
  name: string;
  targetType: string;
  rows: ConditionRow[];
  action: ActionRow;
  mode: "once" | "continuous";
}

const NUMBER_COMPARATORS: Comparator[] = ["<", "<=", ">", ">=", "==", "!="];
const EQUALITY_ONLY: Comparator[] = ["==", "!="];

/** Comparators the form offers for a variable kind (booleans and text
 * support equality only). */
export function allowedComparators(kind: VarKind): Comparator[] {
  return kind === "number" ? NUMBER_COMPARATORS : EQUALITY_ONLY;
}

function renderValue(value: number | boolean | string): string {
  if (typeof value === "number") return String(value);
  if (typeof value === "boolean") return value ? "true" : "false";
  return `"${value.replace(/\\/g, "\\\\").replace(/"/g, '\\"')}"`;
}

function renderRow(row: ConditionRow): string {
  return `agent.${row.variable} ${row.comparator} ${renderValue(row.value)}`;
}

/** Problems that make the form unsubmittable; empty list means compilable. */
export function validatePolicyForm(
  form: PolicyFormModel,
  varKinds?: Record<string, VarKind>,
): string[] {
  const problems: string[] = [];
  if (!form.name.trim()) problems.push("policy needs a name");
  if (!form.targetType.trim()) problems.push("pick a target agent type");
  form.rows.forEach((row, i) => {
    if (!row.variable.trim()) problems.push(`condition row ${i + 1}: pick a variable`);
    if (row.value === "") problems.push(`condition row ${i + 1}: enter a value`);
    const kind = varKinds?.[row.variable];
    if (kind && !allowedComparators(kind).includes(row.comparator)) {
      problems.push(
        `condition row ${i + 1}: ${kind} variables support only == and !=`,
      );
    }
  });
  if (!form.action.variable.trim()) problems.push("action: pick a variable");
  if (form.action.operand === "") problems.push("action: enter an operand");
  if (!["set", "add", "multiply"].includes(form.action.op)) {
    problems.push(`action: unknown op ${form.action.op}`);
  }
  if (!["once", "continuous"].includes(form.mode)) {
    problems.push(`unknown mode ${form.mode}`);
  }
  return problems;
}

/** Compile the form to the policy JSON the server stores unmodified. */
export function compilePolicyForm(form: PolicyFormModel): PolicyDoc {
  const problems = validatePolicyForm(form);
  if (problems.length > 0) {
    throw new Error(`policy form incomplete: ${problems.join("; ")}`);
  }
  const condition =
    form.rows.length === 0 ? "true" : form.rows.map(renderRow).join(" and ");
  return {
    name: form.name,
    target_agent_type: form.targetType,
    condition,
    action: {
      op: form.action.op,
      variable: form.action.variable,
      operand:
        typeof form.action.operand === "number"
          ? String(form.action.operand)
          : form.action.operand,
    },
    mode: form.mode,
  };
}
