import json

import pytest

from facetsim.engine import AgentState, initialize_run, step
from facetsim.errors import ValidationFailure
from facetsim.policies import (
    Policy,
    PolicyAction,
    applicable_agents,
    apply_policy,
    parse_policy,
    policy_to_obj,
    validate_policy,
)
from facetsim.expr import parse_expression

from simbuild import behaviour, action, chain_flow, metric, one_type_spec, scenario_for, var

SUBSIDY_JSON = json.dumps(
    {
        "name": "insurance-subsidy",
        "target_agent_type": "Migrant",
        "condition": "agent.income < 30000",
        "action": {"op": "multiply", "variable": "insurance_cost", "operand": "0.5"},
        "mode": "once",
    }
)


def migrant(id_, income, insurance=1000.0):
    return AgentState(id_, "Migrant", {"income": float(income), "insurance_cost": insurance})


class TestParsePolicy:
    def test_subsidy_example(self):
        policy = parse_policy(SUBSIDY_JSON)
        assert policy.name == "insurance-subsidy"
        assert policy.target_agent_type == "Migrant"
        assert policy.mode == "once"
        assert policy.action.op == "multiply"
        assert policy_to_obj(policy) == json.loads(SUBSIDY_JSON)

    def test_universal_condition(self):
        doc = json.dumps(
            {
                "name": "flat-grant",
                "target_agent_type": "Migrant",
                "condition": True,
                "action": {"op": "set", "variable": "income", "operand": "30000"},
                "mode": "continuous",
            }
        )
        policy = parse_policy(doc)
        assert policy.condition.root == parse_expression("true").root

    def test_unknown_op(self):
        doc = SUBSIDY_JSON.replace('"multiply"', '"divide"')
        with pytest.raises(ValidationFailure) as exc:
            parse_policy(doc)
        assert "UNKNOWN_OP" in exc.value.report.error_codes()

    def test_unknown_mode(self):
        doc = SUBSIDY_JSON.replace('"once"', '"sometimes"')
        with pytest.raises(ValidationFailure) as exc:
            parse_policy(doc)
        assert "UNKNOWN_MODE" in exc.value.report.error_codes()

    def test_bad_condition_expression(self):
        doc = SUBSIDY_JSON.replace("agent.income < 30000", "agent.")
        with pytest.raises(ValidationFailure) as exc:
            parse_policy(doc)
        assert "EXPRESSION" in exc.value.report.error_codes()


class TestValidatePolicy:
    def spec(self):
        return one_type_spec(
            "Migrant",
            [var("income", "number", 25000), var("insurance_cost", "number", 1000)],
            [],
        )

    def test_subsidy_validates(self):
        assert validate_policy(parse_policy(SUBSIDY_JSON), self.spec()).ok

    def test_unknown_variable(self):
        policy = parse_policy(SUBSIDY_JSON.replace("insurance_cost", "premium"))
        report = validate_policy(policy, self.spec())
        assert "UNDECLARED_VARIABLE" in report.error_codes()

    def test_unknown_target_type(self):
        policy = parse_policy(SUBSIDY_JSON.replace("Migrant", "Ghost"))
        report = validate_policy(policy, self.spec())
        assert "UNKNOWN_AGENT_TYPE" in report.error_codes()

    def test_boolean_condition_required(self):
        policy = parse_policy(SUBSIDY_JSON.replace("agent.income < 30000", "agent.income"))
        report = validate_policy(policy, self.spec())
        assert "TYPE_MISMATCH" in report.error_codes()


class TestApplicableAgents:
    POLICY = parse_policy(SUBSIDY_JSON)

    def test_strict_inequality(self):
        pop = [migrant(0, 20000), migrant(1, 30000), migrant(2, 40000)]
        assert applicable_agents(self.POLICY, pop, {}) == [0]

    def test_false_condition(self):
        policy = Policy(
            "noop", "Migrant", parse_expression("false"),
            PolicyAction("set", "income", parse_expression("0")), "continuous",
        )
        assert applicable_agents(policy, [migrant(0, 10)], {}) == []

    def test_once_excludes_already_applied(self):
        pop = [migrant(0, 10000), migrant(1, 15000)]
        applied = {0, 1}
        assert applicable_agents(self.POLICY, pop, {}, applied=applied) == []

    def test_continuous_ignores_applied_set(self):
        policy = Policy(
            "tax", "Migrant", parse_expression("true"),
            PolicyAction("multiply", "income", parse_expression("0.99")), "continuous",
        )
        assert applicable_agents(policy, [migrant(0, 10)], {}, applied={0}) == [0]

    def test_ascending_id_order(self):
        pop = [migrant(5, 100), migrant(2, 100), migrant(9, 100)]
        assert applicable_agents(self.POLICY, pop, {}) == [2, 5, 9]


class TestApplyPolicy:
    def test_multiply_halves(self):
        a = migrant(0, 20000, insurance=1000.0)
        old, new = apply_policy(parse_policy(SUBSIDY_JSON), a, {})
        assert (old, new) == (1000.0, 500.0)
        assert a.vars["insurance_cost"] == 500.0

    def test_add_zero_is_identity(self):
        policy = Policy(
            "noop", "Migrant", parse_expression("true"),
            PolicyAction("add", "income", parse_expression("0")), "once",
        )
        a = migrant(0, 12345.5)
        apply_policy(policy, a, {})
        assert a.vars["income"] == 12345.5

    def test_set_from_model_var(self):
        policy = Policy(
            "living-wage", "Migrant", parse_expression("true"),
            PolicyAction("set", "income", parse_expression("model.minimum_wage * 40 * 52")),
            "once",
        )
        a = migrant(0, 0)
        apply_policy(policy, a, {"minimum_wage": 12.70})
        assert a.vars["income"] == 26416.0  # 12.70 * 2080, exact in float64

    def test_operand_sees_pre_application_state(self):
        policy = Policy(
            "double", "Migrant", parse_expression("true"),
            PolicyAction("set", "income", parse_expression("agent.income * 2")), "once",
        )
        a = migrant(0, 100)
        old, new = apply_policy(policy, a, {})
        assert (old, new) == (100.0, 200.0)

    def test_range_clamp_warns(self):
        decl = var("income", "number", 0, bounds=(0.0, 50000.0))
        policy = Policy(
            "windfall", "Migrant", parse_expression("true"),
            PolicyAction("add", "income", parse_expression("100000")), "once",
        )
        clamps = []
        a = migrant(0, 10000)
        apply_policy(policy, a, {}, var_decl=decl, on_range_clamp=clamps.append)
        assert a.vars["income"] == 50000.0
        assert clamps == [110000.0]

    def test_numeric_op_on_boolean_rejected(self):
        policy = Policy(
            "bad", "Migrant", parse_expression("true"),
            PolicyAction("add", "flag", parse_expression("1")), "once",
        )
        a = AgentState(0, "Migrant", {"flag": True})
        with pytest.raises(Exception) as exc:
            apply_policy(policy, a, {})
        assert "TYPE_MISMATCH" in str(getattr(exc.value, "code", exc.value))


def subsidy_world(policies, seed=7, incomes=(20000, 30000, 40000)):
    spec = one_type_spec(
        "Migrant",
        [
            var("income", "number", 25000),
            var("insurance_cost", "number", 1000),
            var("slot", "number", 0),
        ],
        [behaviour("idle", action("add", "slot", "0"))],
    )
    flow = chain_flow(["idle"], agent_type="Migrant")
    scenario = scenario_for(
        spec,
        {"Migrant": flow},
        iterations=4,
        seed=seed,
        populations={"Migrant": len(incomes)},
        policies=policies,
        metrics=[metric("mean_cost", "mean", "Migrant", "insurance_cost")],
    )
    state = initialize_run(spec, scenario)
    for agent, income in zip(state.agents, incomes):
        agent.vars["income"] = float(income)
    return state


class TestPolicyInsideEngine:
    def test_once_applies_at_most_once_even_if_condition_holds(self):
        state = subsidy_world([parse_policy(SUBSIDY_JSON)])
        first = step(state)
        assert first.policy_applications == [1]  # only the 20000 agent
        assert state.agents[0].vars["insurance_cost"] == 500.0
        second = step(state)
        assert second.policy_applications == [0]  # condition still true, already applied
        assert state.agents[0].vars["insurance_cost"] == 500.0

    def test_continuous_multiply_compounds(self):
        doc = json.loads(SUBSIDY_JSON)
        doc["mode"] = "continuous"
        policy = parse_policy(json.dumps(doc))
        state = subsidy_world([policy])
        step(state)
        step(state)
        assert state.agents[0].vars["insurance_cost"] == 250.0

    def test_disjoint_write_sets_commute(self):
        p1 = Policy(
            "raise-income", "Migrant", parse_expression("true"),
            PolicyAction("add", "income", parse_expression("1000")), "once",
        )
        p2 = Policy(
            "halve-cost", "Migrant", parse_expression("true"),
            PolicyAction("multiply", "insurance_cost", parse_expression("0.5")), "once",
        )
        state_a = subsidy_world([p1, p2])
        state_b = subsidy_world([p2, p1])
        step(state_a)
        step(state_b)
        assert [a.vars for a in state_a.agents] == [a.vars for a in state_b.agents]
