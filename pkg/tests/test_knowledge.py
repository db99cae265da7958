"""Rule base semantics: propose, validation, aggregation, parse/serialize."""

import math
import random

import pytest

from conftest import random_partition_rule_base
from rulerev.knowledge import (
    Condition,
    KnowledgeBase,
    KnowledgeError,
    Rule,
    RuleBase,
    aggregate,
    parse_kb,
    serialize_kb,
    validate_rule_base,
)

MS = {"ms": ("M1", "M2")}


def worked_example_rules() -> RuleBase:
    # if (M1 < 5) -> 2; if (M1 >= 5) and (M2 < 3) -> 1; if (M1 >= 5) and (M2 >= 3) -> 0
    return RuleBase(
        "A",
        "ms",
        ("M1", "M2"),
        (
            Rule((Condition("M1", upper=5),), 2),
            Rule((Condition("M1", 5, math.inf, True), Condition("M2", upper=3)), 1),
            Rule((Condition("M1", 5, math.inf, True), Condition("M2", 3, math.inf, True)), 0),
        ),
    )


class TestCondition:
    def test_contains_respects_closedness(self):
        cond = Condition("M1", 0, 5, True, False)
        assert cond.contains(0) and cond.contains(4.999)
        assert not cond.contains(5) and not cond.contains(-0.001)

    def test_point_interval(self):
        cond = Condition("M1", 2, 2, True, True)
        assert cond.contains(2) and not cond.contains(2.0001)

    def test_bad_intervals_rejected(self):
        with pytest.raises(KnowledgeError):
            Condition("M1", 5, 3)
        with pytest.raises(KnowledgeError):
            Condition("M1", 2, 2, True, False)

    def test_infinite_bounds_normalised_open(self):
        assert not Condition("M1", lower_closed=True).lower_closed


class TestPropose:
    def test_worked_example_low_m1(self):
        rb = worked_example_rules()
        assert rb.propose((4.0, 100.0)) == 2
        assert rb.propose((4.0, -100.0)) == 2

    def test_worked_example_mid(self):
        rb = worked_example_rules()
        assert rb.propose((6.0, 2.0)) == 1
        assert rb.propose((6.0, 3.0)) == 0

    def test_empty_rule_base_proposes_zero(self):
        rb = RuleBase("A", "ms", ("M1", "M2"), ())
        assert rb.propose((0.0, 0.0)) == 0

    def test_arity_mismatch(self):
        rb = worked_example_rules()
        with pytest.raises(KnowledgeError, match="arity"):
            rb.propose((1.0,))

    def test_unmatched_point_defaults_to_zero(self):
        rb = RuleBase("A", "ms", ("M1", "M2"), (Rule((Condition("M1", upper=0),), 4),))
        assert rb.propose((1.0, 0.0)) == 0
        assert rb.propose((-1.0, 0.0)) == 4


class TestValidate:
    def test_worked_example_is_a_partition(self):
        assert validate_rule_base(worked_example_rules()) == []

    def test_overlap_reported_with_witness(self):
        rb = RuleBase(
            "A",
            "ms",
            ("M1", "M2"),
            (
                Rule((Condition("M1", upper=1),), 1),
                Rule((Condition("M1", upper=2),), 2),
            ),
        )
        violations = validate_rule_base(rb)
        assert len(violations) == 1
        v = violations[0]
        assert v.kind == "overlap" and v.rules == (0, 1)
        point = v.witness["M1"]
        for rule in rb.rules:
            assert rule.interval_for("M1").contains(point)

    def test_point_overlap_witness(self):
        rb = RuleBase(
            "A",
            "ms",
            ("M1",)[:1] + ("M2",),
            (
                Rule((Condition("M1", upper=0, upper_closed=True),), 1),
                Rule((Condition("M1", 0, math.inf, True),), 2),
            ),
        )
        violations = validate_rule_base(rb)
        assert violations[0].witness["M1"] == 0

    def test_weight_range_checked_when_max_given(self):
        rb = RuleBase("A", "ms", ("M1", "M2"), (Rule((), 7),))
        assert validate_rule_base(rb) == []
        bad = validate_rule_base(rb, weight_max=5)
        assert bad and bad[0].kind == "weight-range"

    def test_random_partitions_validate_clean(self):
        # cross-checked against brute-force point sampling on a grid
        rng = random.Random(42)
        grid = [x / 2.0 for x in range(-22, 23)]
        for _ in range(50):
            rb = random_partition_rule_base(rng)
            assert validate_rule_base(rb) == []
            for x in grid:
                for y in grid:
                    hits = sum(
                        1
                        for rule in rb.rules
                        if rule.interval_for("M1").contains(x)
                        and rule.interval_for("M2").contains(y)
                    )
                    assert hits == 1, (x, y)


class TestAggregate:
    def test_worked_aggregation_example(self):
        rb = RuleBase(
            "A",
            "ms",
            ("M1", "M2"),
            (
                Rule((Condition("M1", upper=5),), 1),
                Rule((Condition("M1", 5, math.inf, True), Condition("M2", upper=3)), 3),
                Rule((Condition("M1", 5, math.inf, True), Condition("M2", 3, math.inf, True)), 3),
            ),
        )
        out = aggregate(rb)
        assert out.rules == (
            Rule((Condition("M1", upper=5),), 1),
            Rule((Condition("M1", 5, math.inf, True),), 3),
        )

    def test_single_rule_unchanged(self):
        rb = RuleBase("A", "ms", ("M1", "M2"), (Rule((Condition("M1", upper=5),), 1),))
        assert aggregate(rb).rules == rb.rules

    def test_full_partition_same_weight_collapses_to_universal(self):
        rb = RuleBase(
            "A",
            "ms",
            ("M1", "M2"),
            (
                Rule((Condition("M1", upper=0),), 2),
                Rule((Condition("M1", 0, math.inf, True),), 2),
            ),
        )
        out = aggregate(rb)
        assert out.rules == (Rule((), 2),)

    def test_random_bases_semantically_preserved(self):
        rng = random.Random(7)
        for _ in range(100):
            rb = random_partition_rule_base(rng, max_cuts=2)
            out = aggregate(rb)
            assert len(out.rules) <= len(rb.rules)
            for _ in range(60):
                point = (rng.uniform(-12, 12), rng.uniform(-12, 12))
                assert rb.propose(point) == out.propose(point)


class TestParseSerialize:
    def test_worked_example_round_trips(self):
        kb = KnowledgeBase({"A": worked_example_rules()}, 5)
        again = parse_kb(serialize_kb(kb), MS)
        assert again == kb

    def test_noaction_round_trips(self):
        kb = KnowledgeBase({"A": RuleBase("A", "ms", ("M1", "M2"), ())}, 5)
        assert parse_kb(serialize_kb(kb), MS) == kb

    def test_weight_above_max_rejected_naming_rule(self):
        text = """
        {"weight_max": 5, "actions": [{"action": "A", "measure_set": "ms",
          "rules": [{"conditions": [], "weight": 7}]}]}
        """
        with pytest.raises(KnowledgeError, match=r"actions\[0\].rules\[0\]"):
            parse_kb(text, MS)

    def test_malformed_json(self):
        with pytest.raises(KnowledgeError, match="invalid JSON"):
            parse_kb("{nope", MS)

    def test_unknown_measure_positioned(self):
        text = """
        {"actions": [{"action": "A", "measure_set": "ms",
          "rules": [{"conditions": [{"measure": "M9", "lt": 1}], "weight": 1}]}]}
        """
        with pytest.raises(KnowledgeError, match=r"conditions\[0\].*M9"):
            parse_kb(text, MS)

    def test_conflicting_bound_keys(self):
        text = """
        {"actions": [{"action": "A", "measure_set": "ms",
          "rules": [{"conditions": [{"measure": "M1", "gte": 1, "gt": 2}], "weight": 1}]}]}
        """
        with pytest.raises(KnowledgeError, match="both 'gte' and 'gt'"):
            parse_kb(text, MS)

    def test_unknown_action_when_catalog_given(self):
        text = '{"actions": [{"action": "Z", "measure_set": "ms", "rules": []}]}'
        with pytest.raises(KnowledgeError, match="unknown action"):
            parse_kb(text, MS, actions=["A"])

    def test_missing_action_when_catalog_given(self):
        text = '{"actions": [{"action": "A", "measure_set": "ms", "rules": []}]}'
        with pytest.raises(KnowledgeError, match="no rule base"):
            parse_kb(text, MS, actions=["A", "B"])

    def test_random_bases_round_trip(self):
        rng = random.Random(3)
        for _ in range(25):
            kb = KnowledgeBase({"A": random_partition_rule_base(rng)}, 5)
            assert parse_kb(serialize_kb(kb), MS) == kb
