import { describe, expect, it } from "vitest";

import {
  allowedComparators,
  compilePolicyForm,
  validatePolicyForm,
  type PolicyFormModel,
} from "../src/policyForm.js";

const subsidyForm: PolicyFormModel = {
  name: "insurance-subsidy",
  targetType: "Migrant",
  rows: [{ variable: "income", comparator: "<", value: 30000 }],
  action: { op: "multiply", variable: "insurance_cost", operand: 0.5 },
  mode: "once",
};

describe("compilePolicyForm", () => {
  it("compiles the subsidy example to the exact policy document", () => {
    expect(compilePolicyForm(subsidyForm)).toEqual({
      name: "insurance-subsidy",
      target_agent_type: "Migrant",
      condition: "agent.income < 30000",
      action: { op: "multiply", variable: "insurance_cost", operand: "0.5" },
      mode: "once",
    });
  });

  it("joins several rows with and", () => {
    const form: PolicyFormModel = {
      ...subsidyForm,
      rows: [
        { variable: "income", comparator: "<", value: 30000 },
        { variable: "has_job", comparator: "==", value: false },
        { variable: "work_visa_category", comparator: "!=", value: "restricted" },
      ],
    };
    expect(compilePolicyForm(form).condition).toBe(
      'agent.income < 30000 and agent.has_job == false and agent.work_visa_category != "restricted"',
    );
  });

  it("compiles zero condition rows to the universal condition", () => {
    expect(compilePolicyForm({ ...subsidyForm, rows: [] }).condition).toBe("true");
  });

  it("escapes quotes and backslashes in text values", () => {
    const form: PolicyFormModel = {
      ...subsidyForm,
      rows: [{ variable: "region", comparator: "==", value: 'we"ird\\' }],
    };
    expect(compilePolicyForm(form).condition).toBe('agent.region == "we\\"ird\\\\"');
  });

  it("keeps string operands verbatim (expressions pass through)", () => {
    const form: PolicyFormModel = {
      ...subsidyForm,
      action: { op: "set", variable: "income", operand: "model.minimum_wage * 40 * 52" },
    };
    expect(compilePolicyForm(form).action.operand).toBe("model.minimum_wage * 40 * 52");
  });

  it("refuses an incomplete form", () => {
    expect(() => compilePolicyForm({ ...subsidyForm, name: "" })).toThrow(/name/);
  });
});

describe("validatePolicyForm", () => {
  it("restricts boolean variables to equality comparators", () => {
    const form: PolicyFormModel = {
      ...subsidyForm,
      rows: [{ variable: "has_job", comparator: "<", value: true }],
    };
    const problems = validatePolicyForm(form, { has_job: "boolean" });
    expect(problems.some((p) => p.includes("only == and !="))).toBe(true);
  });

  it("accepts equality on text variables", () => {
    const form: PolicyFormModel = {
      ...subsidyForm,
      rows: [{ variable: "visa", comparator: "==", value: "restricted" }],
    };
    expect(validatePolicyForm(form, { visa: "text" })).toEqual([]);
  });

  it("offers all six comparators only for numbers", () => {
    expect(allowedComparators("number")).toHaveLength(6);
    expect(allowedComparators("boolean")).toEqual(["==", "!="]);
    expect(allowedComparators("text")).toEqual(["==", "!="]);
  });

  it("flags missing action fields", () => {
    const problems = validatePolicyForm({
      ...subsidyForm,
      action: { op: "add", variable: "", operand: "" },
    });
    expect(problems.length).toBeGreaterThanOrEqual(2);
  });
});
