"""Production-rule knowledge bases: interval rules with integer action weights.

A knowledge base holds one rule base per action.  Each rule maps a
conjunction of interval conditions over the action's measure set to an
integer weight in [0, weight_max].  A measure vector matched by no rule
gets weight 0, which means "do not propose the action for this state".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

DEFAULT_WEIGHT_MAX = 5

_NEG_INF = float("-inf")
_POS_INF = float("inf")


class KnowledgeError(Exception):
    """Malformed rule, rule base, or knowledge base file."""


def _fmt(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class Condition:
    """Interval constraint on one measure.  Infinite bounds are open."""

    measure: str
    lower: float = _NEG_INF
    upper: float = _POS_INF
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self) -> None:
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise KnowledgeError(f"NaN bound on measure {self.measure!r}")
        if math.isinf(self.lower) and self.lower_closed:
            object.__setattr__(self, "lower_closed", False)
        if math.isinf(self.upper) and self.upper_closed:
            object.__setattr__(self, "upper_closed", False)
        if self.lower > self.upper:
            raise KnowledgeError(
                f"empty interval on {self.measure!r}: lower {self.lower} > upper {self.upper}"
            )
        if self.lower == self.upper and not (self.lower_closed and self.upper_closed):
            raise KnowledgeError(
                f"degenerate interval on {self.measure!r} needs both ends closed"
            )

    @property
    def is_universal(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)

    def contains(self, value: float) -> bool:
        if value < self.lower or (value == self.lower and not self.lower_closed):
            return False
        if value > self.upper or (value == self.upper and not self.upper_closed):
            return False
        return True

    def __str__(self) -> str:
        if self.is_universal:
            return f"{self.measure}: any"
        if self.lower == self.upper:
            return f"{self.measure} == {_fmt(self.lower)}"
        if math.isinf(self.lower):
            return f"{self.measure} {'<=' if self.upper_closed else '<'} {_fmt(self.upper)}"
        if math.isinf(self.upper):
            return f"{self.measure} {'>=' if self.lower_closed else '>'} {_fmt(self.lower)}"
        lop = "<=" if self.lower_closed else "<"
        uop = "<=" if self.upper_closed else "<"
        return f"{_fmt(self.lower)} {lop} {self.measure} {uop} {_fmt(self.upper)}"


def _intersection(a: Condition, b: Condition) -> tuple[float, bool, float, bool] | None:
    """Intersection of two intervals as (lower, lower_closed, upper, upper_closed)."""
    if a.lower > b.lower:
        lo, lc = a.lower, a.lower_closed
    elif b.lower > a.lower:
        lo, lc = b.lower, b.lower_closed
    else:
        lo, lc = a.lower, a.lower_closed and b.lower_closed
    if a.upper < b.upper:
        up, uc = a.upper, a.upper_closed
    elif b.upper < a.upper:
        up, uc = b.upper, b.upper_closed
    else:
        up, uc = a.upper, a.upper_closed and b.upper_closed
    if lo > up or (lo == up and not (lc and uc)):
        return None
    return lo, lc, up, uc


def _interior_point(lo: float, lc: bool, up: float, uc: bool) -> float:
    """Some point inside a non-empty interval."""
    if lo == up:
        return lo
    if math.isinf(lo) and math.isinf(up):
        return 0.0
    if math.isinf(lo):
        return up if uc else up - 1.0
    if math.isinf(up):
        return lo if lc else lo + 1.0
    return (lo + up) / 2.0


def _union_interval(a: Condition, b: Condition) -> Condition | None:
    """Union of two intervals on the same measure, if it is itself an interval."""
    if (b.lower, not b.lower_closed) < (a.lower, not a.lower_closed):
        a, b = b, a
    touching = a.upper == b.lower and (a.upper_closed or b.lower_closed)
    if not (a.upper > b.lower or touching):
        return None
    if (a.upper, a.upper_closed) >= (b.upper, b.upper_closed):
        up, uc = a.upper, a.upper_closed
    else:
        up, uc = b.upper, b.upper_closed
    return Condition(a.measure, a.lower, up, a.lower_closed, uc)


@dataclass(frozen=True)
class Rule:
    """Conjunction of interval conditions (at most one per measure) and a weight."""

    conditions: tuple[Condition, ...]
    weight: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "conditions", tuple(self.conditions))
        names = [c.measure for c in self.conditions]
        if len(set(names)) != len(names):
            raise KnowledgeError(f"rule repeats a measure in its conditions: {names}")
        if not isinstance(self.weight, int) or self.weight < 0:
            raise KnowledgeError(f"rule weight must be an integer >= 0, got {self.weight!r}")

    def interval_for(self, measure: str) -> Condition:
        for cond in self.conditions:
            if cond.measure == measure:
                return cond
        return Condition(measure)

    def __str__(self) -> str:
        if not self.conditions:
            return f"if anything then weight = {self.weight}"
        body = " and ".join(f"({c})" for c in self.conditions)
        return f"if {body} then weight = {self.weight}"


@dataclass(frozen=True)
class RuleBase:
    """Ordered production rules of one action over its measure set."""

    action_id: str
    measure_set_id: str
    measure_names: tuple[str, ...]
    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "measure_names", tuple(self.measure_names))
        object.__setattr__(self, "rules", tuple(self.rules))
        for i, rule in enumerate(self.rules):
            for cond in rule.conditions:
                if cond.measure not in self.measure_names:
                    raise KnowledgeError(
                        f"rule {i} of action {self.action_id!r} references unknown "
                        f"measure {cond.measure!r}"
                    )
        # position-resolved conditions for fast matching
        compiled = tuple(
            tuple((self.measure_names.index(c.measure), c) for c in rule.conditions)
            for rule in self.rules
        )
        object.__setattr__(self, "_compiled", compiled)

    def propose(self, values: Sequence[float]) -> int:
        """Weight of the unique matching rule, or 0 when no rule matches."""
        if len(values) != len(self.measure_names):
            raise KnowledgeError(
                f"measure vector arity {len(values)} does not match measure set "
                f"{self.measure_set_id!r} (arity {len(self.measure_names)}) "
                f"for action {self.action_id!r}"
            )
        for rule, conds in zip(self.rules, self._compiled):  # type: ignore[attr-defined]
            for idx, cond in conds:
                v = values[idx]
                if v < cond.lower or (v == cond.lower and not cond.lower_closed):
                    break
                if v > cond.upper or (v == cond.upper and not cond.upper_closed):
                    break
            else:
                return rule.weight
        return 0


@dataclass(frozen=True)
class Violation:
    """One validation finding; overlap findings carry a witness point."""

    kind: str
    rules: tuple[int, ...]
    message: str
    witness: Mapping[str, float] | None = None


def validate_rule_base(rb: RuleBase, weight_max: int | None = None) -> list[Violation]:
    """Check weight bounds (when weight_max given) and pairwise disjointness.

    Returns an empty list iff the rule base is valid.  Overlaps name the
    offending rule pair and a point matched by both rules.
    """
    out: list[Violation] = []
    if weight_max is not None:
        for i, rule in enumerate(rb.rules):
            if rule.weight > weight_max:
                out.append(
                    Violation(
                        "weight-range",
                        (i,),
                        f"rule {i} of action {rb.action_id!r} has weight "
                        f"{rule.weight} above weight_max {weight_max}",
                    )
                )
    for i in range(len(rb.rules)):
        for j in range(i + 1, len(rb.rules)):
            a, b = rb.rules[i], rb.rules[j]
            measures = sorted(
                {c.measure for c in a.conditions} | {c.measure for c in b.conditions}
            )
            witness: dict[str, float] = {}
            for m in measures:
                inter = _intersection(a.interval_for(m), b.interval_for(m))
                if inter is None:
                    break
                witness[m] = _interior_point(*inter)
            else:
                out.append(
                    Violation(
                        "overlap",
                        (i, j),
                        f"rules {i} and {j} of action {rb.action_id!r} overlap",
                        witness,
                    )
                )
    return out


def aggregate(rb: RuleBase) -> RuleBase:
    """Merge same-weight rules differing in a single measure interval.

    The result proposes the same weight for every measure vector and never
    has more rules than the input.  Merging is greedy, in measure-name
    order, iterated to a fixed point; minimal rule count is not guaranteed.
    """
    order = {m: k for k, m in enumerate(rb.measure_names)}
    rules = list(rb.rules)
    changed = True
    while changed:
        changed = False
        for m in sorted(rb.measure_names):
            merged = _merge_pair_on(rules, m, order)
            if merged is not None:
                rules = merged
                changed = True
                break
    return RuleBase(rb.action_id, rb.measure_set_id, rb.measure_names, tuple(rules))


def _merge_pair_on(rules: list[Rule], measure: str, order: Mapping[str, int]) -> list[Rule] | None:
    for i in range(len(rules)):
        a = rules[i]
        rest_a = {c.measure: c for c in a.conditions if c.measure != measure}
        for j in range(i + 1, len(rules)):
            b = rules[j]
            if a.weight != b.weight:
                continue
            rest_b = {c.measure: c for c in b.conditions if c.measure != measure}
            if rest_a != rest_b:
                continue
            union = _union_interval(a.interval_for(measure), b.interval_for(measure))
            if union is None:
                continue
            conds = [c for c in a.conditions if c.measure != measure]
            if not union.is_universal:
                conds.append(union)
            conds.sort(key=lambda c: order[c.measure])
            out = list(rules)
            out[i] = Rule(tuple(conds), a.weight)
            del out[j]
            return out
    return None


@dataclass(frozen=True)
class KnowledgeBase:
    """One rule base per action, plus the shared weight ceiling."""

    rule_bases: Mapping[str, RuleBase]
    weight_max: int = DEFAULT_WEIGHT_MAX

    def __post_init__(self) -> None:
        if self.weight_max < 1:
            raise KnowledgeError("weight_max must be >= 1")
        object.__setattr__(self, "rule_bases", dict(self.rule_bases))

    def propose(self, action_id: str, values: Sequence[float]) -> int:
        rb = self.rule_bases.get(action_id)
        if rb is None:
            raise KnowledgeError(f"no rule base for action {action_id!r}")
        return rb.propose(values)

    def validate(self) -> dict[str, list[Violation]]:
        found = {}
        for action_id, rb in self.rule_bases.items():
            violations = validate_rule_base(rb, self.weight_max)
            if violations:
                found[action_id] = violations
        return found

    def aggregated(self) -> "KnowledgeBase":
        return KnowledgeBase(
            {a: aggregate(rb) for a, rb in self.rule_bases.items()}, self.weight_max
        )


def empty_knowledge_base(domain: Any, weight_max: int = DEFAULT_WEIGHT_MAX) -> KnowledgeBase:
    """Knowledge base proposing no action for any state (all rule bases empty)."""
    bases = {}
    for spec in domain.actions:
        names = tuple(domain.measure_sets[spec.measure_set])
        bases[spec.action_id] = RuleBase(spec.action_id, spec.measure_set, names, ())
    return KnowledgeBase(bases, weight_max)


_LOWER_KEYS = ("gte", "gt")
_UPPER_KEYS = ("lte", "lt")
_CONDITION_KEYS = {"measure", *_LOWER_KEYS, *_UPPER_KEYS}


def _parse_condition(doc: Any, names: Sequence[str], where: str) -> Condition:
    if not isinstance(doc, dict):
        raise KnowledgeError(f"{where}: condition must be an object")
    unknown = set(doc) - _CONDITION_KEYS
    if unknown:
        raise KnowledgeError(f"{where}: unknown keys {sorted(unknown)}")
    measure = doc.get("measure")
    if not isinstance(measure, str):
        raise KnowledgeError(f"{where}: missing or non-string 'measure'")
    if measure not in names:
        raise KnowledgeError(f"{where}: unknown measure {measure!r}")
    if "gte" in doc and "gt" in doc:
        raise KnowledgeError(f"{where}: both 'gte' and 'gt' given")
    if "lte" in doc and "lt" in doc:
        raise KnowledgeError(f"{where}: both 'lte' and 'lt' given")
    lower, lower_closed = _NEG_INF, False
    upper, upper_closed = _POS_INF, False
    for key, closed in (("gte", True), ("gt", False)):
        if key in doc:
            if not isinstance(doc[key], (int, float)) or isinstance(doc[key], bool):
                raise KnowledgeError(f"{where}: '{key}' must be a number")
            lower, lower_closed = float(doc[key]), closed
    for key, closed in (("lte", True), ("lt", False)):
        if key in doc:
            if not isinstance(doc[key], (int, float)) or isinstance(doc[key], bool):
                raise KnowledgeError(f"{where}: '{key}' must be a number")
            upper, upper_closed = float(doc[key]), closed
    try:
        return Condition(measure, lower, upper, lower_closed, upper_closed)
    except KnowledgeError as exc:
        raise KnowledgeError(f"{where}: {exc}") from exc


def parse_kb(
    text: str,
    measure_sets: Mapping[str, Sequence[str]],
    *,
    actions: Iterable[str] | None = None,
) -> KnowledgeBase:
    """Parse the knowledge base file format.

    ``measure_sets`` maps measure set ids to ordered measure names; when
    ``actions`` is given, the file must define exactly those actions.
    Errors carry the position of the offending entry.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KnowledgeError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise KnowledgeError("top level must be an object")
    weight_max = doc.get("weight_max", DEFAULT_WEIGHT_MAX)
    if not isinstance(weight_max, int) or weight_max < 1:
        raise KnowledgeError(f"weight_max must be an integer >= 1, got {weight_max!r}")
    entries = doc.get("actions")
    if not isinstance(entries, list):
        raise KnowledgeError("missing 'actions' list")
    bases: dict[str, RuleBase] = {}
    for ai, entry in enumerate(entries):
        where = f"actions[{ai}]"
        if not isinstance(entry, dict):
            raise KnowledgeError(f"{where}: must be an object")
        action = entry.get("action")
        if not isinstance(action, str):
            raise KnowledgeError(f"{where}: missing or non-string 'action'")
        if action in bases:
            raise KnowledgeError(f"{where}: duplicate action {action!r}")
        if actions is not None and action not in actions:
            raise KnowledgeError(f"{where}: unknown action {action!r}")
        ms = entry.get("measure_set")
        if not isinstance(ms, str) or ms not in measure_sets:
            raise KnowledgeError(f"{where}: unknown measure set {ms!r}")
        names = tuple(measure_sets[ms])
        rules = []
        for ri, rdoc in enumerate(entry.get("rules", [])):
            rwhere = f"{where}.rules[{ri}]"
            if not isinstance(rdoc, dict):
                raise KnowledgeError(f"{rwhere}: must be an object")
            weight = rdoc.get("weight")
            if not isinstance(weight, int):
                raise KnowledgeError(f"{rwhere}: missing or non-integer 'weight'")
            if weight < 0 or weight > weight_max:
                raise KnowledgeError(
                    f"{rwhere}: weight {weight} outside [0, {weight_max}]"
                )
            conds = tuple(
                _parse_condition(cdoc, names, f"{rwhere}.conditions[{ci}]")
                for ci, cdoc in enumerate(rdoc.get("conditions", []))
            )
            try:
                rules.append(Rule(conds, weight))
            except KnowledgeError as exc:
                raise KnowledgeError(f"{rwhere}: {exc}") from exc
        bases[action] = RuleBase(action, ms, names, tuple(rules))
    if actions is not None:
        missing = [a for a in actions if a not in bases]
        if missing:
            raise KnowledgeError(f"file defines no rule base for actions {missing}")
    return KnowledgeBase(bases, weight_max)


def _condition_doc(cond: Condition) -> dict[str, Any]:
    doc: dict[str, Any] = {"measure": cond.measure}
    if not math.isinf(cond.lower):
        doc["gte" if cond.lower_closed else "gt"] = cond.lower
    if not math.isinf(cond.upper):
        doc["lte" if cond.upper_closed else "lt"] = cond.upper
    return doc


def serialize_kb(kb: KnowledgeBase) -> str:
    """Inverse of parse_kb: parse_kb(serialize_kb(kb), ...) equals kb."""
    doc = {
        "weight_max": kb.weight_max,
        "actions": [
            {
                "action": rb.action_id,
                "measure_set": rb.measure_set_id,
                "rules": [
                    {
                        "conditions": [_condition_doc(c) for c in rule.conditions],
                        "weight": rule.weight,
                    }
                    for rule in rb.rules
                ],
            }
            for rb in kb.rule_bases.values()
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
