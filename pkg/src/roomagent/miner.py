"""Co-occurrence binding, predictive rule mining, exceptions and object registry.

A history is a sequence of ``(frame, action)`` pairs where ``action`` is the
button pressed *at* that frame (``None`` for the newest frame).  A rule's
condition is a temporal pattern of up to ``window`` ``(group, action)`` steps
ending at tick ``t``; its consequent is a group expected in frame ``t + 1``.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .signals import Channel, SignalFrame, SignalGroup, members_of, popcount

History = Sequence[tuple[SignalFrame, "int | None"]]

DEFAULT_WINDOW = 2
DEFAULT_GROUP_SIZE = 4
EPS = 1e-12


class RuleStatus(Enum):
    ACTIVE = "Active"
    QUARANTINED = "Quarantined"


@dataclass(frozen=True)
class TemporalPattern:
    """``(group, action)`` steps, oldest first."""

    steps: tuple[tuple[SignalGroup, int], ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a temporal pattern needs at least one step")

    @classmethod
    def single(cls, group: SignalGroup, action: int) -> "TemporalPattern":
        return cls(((group, action),))

    @property
    def final_group(self) -> SignalGroup:
        return self.steps[-1][0]

    @property
    def action(self) -> int:
        return self.steps[-1][1]

    def __len__(self) -> int:
        return len(self.steps)

    def size(self) -> int:
        return sum(len(g) for g, _ in self.steps)

    def key(self) -> tuple:
        return tuple((g.key(), a) for g, a in self.steps)

    def union_mask(self) -> int:
        m = 0
        for g, _ in self.steps:
            m |= g.mask
        return m


@dataclass(frozen=True)
class ExceptionRecord:
    context: SignalGroup
    misses: int = 1


@dataclass(frozen=True)
class Rule:
    condition: TemporalPattern
    consequent: SignalGroup
    support: int
    hits: int
    priority: float = 0.0
    exceptions: tuple[ExceptionRecord, ...] = ()
    status: RuleStatus = RuleStatus.ACTIVE

    def __post_init__(self):
        if not 0 <= self.hits <= self.support:
            raise ValueError("need 0 <= hits <= support")

    @property
    def id(self) -> str:
        """Stable across re-mining: a rule is identified by what it says."""
        cond = "+".join(f"{g.mask:x}@{a}" for g, a in self.condition.steps)
        return f"{cond}>{self.consequent.mask:x}"

    @property
    def action(self) -> int:
        return self.condition.action

    @property
    def confidence(self) -> float:
        return self.hits / self.support if self.support else 0.0

    @property
    def active(self) -> bool:
        return self.status is RuleStatus.ACTIVE

    def key(self) -> tuple:
        return (self.condition.key(), self.consequent.key())

    def involves(self, mask: int) -> bool:
        return bool((self.condition.union_mask() | self.consequent.mask) & mask)


def rule_order(r: Rule) -> tuple:
    return (-r.priority, -r.support, r.key())


def decision_order(r: Rule) -> tuple:
    """Which of several matching rules 'fires'.

    Shorter patterns win over longer ones of equal standing, then the most
    specific condition and consequent; the lexicographic key is the last resort.
    """
    return (-r.confidence, -r.priority, -r.support, len(r.condition), -r.condition.size(),
            -len(r.consequent), r.key())


# -- binding ---------------------------------------------------------------------


@dataclass
class CooccurrenceStats:
    """Counts of co-active signal sets of size <= ``max_size``.

    External and recalled signals are tallied separately so that recall never
    inflates the evidence for external binding.
    """

    max_size: int = DEFAULT_GROUP_SIZE
    external: Counter = field(default_factory=Counter)
    recalled: Counter = field(default_factory=Counter)
    frames: int = 0

    def count(self, g: SignalGroup | int) -> int:
        m = g if isinstance(g, int) else g.mask
        return self.external.get(m, 0) + self.recalled.get(m, 0)


def _subsets(mask: int, max_size: int) -> Iterable[int]:
    ids = [1 << i for i in members_of(mask)]
    for k in range(1, min(max_size, len(ids)) + 1):
        for combo in combinations(ids, k):
            yield sum(combo)


def observe(stats: CooccurrenceStats, frame: SignalFrame) -> CooccurrenceStats:
    stats.frames += 1
    for m in _subsets(frame.external_mask(), stats.max_size):
        stats.external[m] += 1
    for m in _subsets(frame.recall_mask(), stats.max_size):
        stats.recalled[m] += 1
    return stats


def candidate_groups(stats: CooccurrenceStats, s_min: int) -> set[SignalGroup]:
    if s_min < 1:
        raise ValueError("s_min must be >= 1")
    out = {SignalGroup(m) for m, c in stats.external.items() if c >= s_min}
    out |= {SignalGroup(m) for m, c in stats.recalled.items() if c >= s_min}
    return out


# -- mining ----------------------------------------------------------------------


def _passes(hits: int, support: int, theta: float) -> bool:
    return hits > 0 and hits / support >= theta - EPS


def mine_rules(
    history: History,
    candidates: Iterable[SignalGroup],
    theta_conf: float,
    s_min: int,
    *,
    window: int = DEFAULT_WINDOW,
    targets: Iterable[SignalGroup] | None = None,
    priority_of: Mapping[SignalGroup, float] | None = None,
) -> list[Rule]:
    """All rules with support >= s_min and confidence >= theta_conf.

    ``targets`` restricts which candidate groups may appear as consequents
    (used by budgeted, priority-ordered discovery).
    """
    if not 0 < theta_conf <= 1:
        raise ValueError("theta_conf must be in (0, 1]")
    if s_min < 1 or window < 1:
        raise ValueError("s_min and window must be >= 1")
    frames = [f.mask for f, _ in history]
    acts = [a for _, a in history]
    T = len(frames)
    if T < 2:
        return []
    cand = sorted({g.mask for g in candidates})
    allowed = None if targets is None else {g.mask for g in targets}

    sub_cache: dict[int, tuple[int, ...]] = {}

    def subs(m: int) -> tuple[int, ...]:
        if m not in sub_cache:
            sub_cache[m] = tuple(c for c in cand if c & ~m == 0)
        return sub_cache[m]

    # pattern -> Counter(next frame mask); a pattern is a tuple of (mask, action)
    nxt: dict[tuple, Counter] = defaultdict(Counter)
    for t in range(T - 1):
        a = acts[t]
        if a is None:
            continue
        for g in subs(frames[t]):
            nxt[((g, a),)][frames[t + 1]] += 1
    frequent = {p for p, c in nxt.items() if sum(c.values()) >= s_min}
    for p in [p for p in nxt if p not in frequent]:
        del nxt[p]

    prev_level = frequent
    for length in range(2, window + 1):
        level: dict[tuple, Counter] = defaultdict(Counter)
        for t in range(length - 1, T - 1):
            steps = [(t - length + 1 + k) for k in range(length)]
            if any(acts[s] is None for s in steps):
                continue
            # extend frequent (length-1)-patterns ending at t-1 by a frequent step at t
            heads = [p for p in _patterns_at(steps[:-1], frames, acts, subs) if p in prev_level]
            if not heads:
                continue
            a = acts[t]
            tails = [g for g in subs(frames[t]) if ((g, a),) in frequent]
            for h in heads:
                for g in tails:
                    level[h + ((g, a),)][frames[t + 1]] += 1
        prev_level = {p for p, c in level.items() if sum(c.values()) >= s_min}
        for p in prev_level:
            nxt[p] = level[p]
        if not prev_level:
            break

    rules = []
    for pattern, outcomes in nxt.items():
        support = sum(outcomes.values())
        hits: Counter = Counter()
        for m, n in outcomes.items():
            for c in subs(m):
                hits[c] += n
        for c, h in hits.items():
            if allowed is not None and c not in allowed:
                continue
            if _passes(h, support, theta_conf):
                cons = SignalGroup(c)
                steps = tuple((SignalGroup(g), a) for g, a in pattern)
                pr = priority_of.get(cons, 0.0) if priority_of else 0.0
                rules.append(Rule(TemporalPattern(steps), cons, support, h, priority=pr))
    rules.sort(key=rule_order)
    return rules


def _patterns_at(ticks: list[int], frames, acts, subs) -> list[tuple]:
    out: list[tuple] = [()]
    for s in ticks:
        out = [p + ((g, acts[s]),) for p in out for g in subs(frames[s])]
    return out


def action_rule_stats(history: History, action: int, consequent: SignalGroup) -> tuple[int, int]:
    """(support, hits) of the action-only rule ``action -> consequent``."""
    support = hits = 0
    for (f, a), (nf, _) in zip(history, history[1:]):
        if a == action:
            support += 1
            hits += consequent.mask & ~nf.mask == 0
    return support, hits


# -- prediction and outcome bookkeeping -----------------------------------------


@dataclass(frozen=True)
class Prediction:
    group: SignalGroup
    confidence: float
    rule: str


def matches(pattern: TemporalPattern, window: Sequence[tuple[SignalFrame, "int | None"]], action: int) -> bool:
    n = len(pattern.steps)
    if n > len(window):
        return False
    for k, (g, a) in enumerate(reversed(pattern.steps)):
        frame, taken = window[-1 - k]
        if g.mask & ~frame.mask:
            return False
        if (action if k == 0 else taken) != a:
            return False
    return True


def exception_active(rule: Rule, frame: SignalFrame, x_min: int) -> bool:
    return any(e.misses >= x_min and e.context.mask & ~frame.mask == 0 for e in rule.exceptions)


def matching_rules(rules: Iterable[Rule], window, action: int, *, x_min: int = 2) -> list[Rule]:
    if not window:
        raise ValueError("window must hold at least the current frame")
    current = window[-1][0]
    out = [
        r for r in rules
        if r.active and r.action == action and matches(r.condition, window, action)
        and not exception_active(r, current, x_min)
    ]
    out.sort(key=decision_order)
    return out


def predict(rules: Iterable[Rule], window, action: int, *, x_min: int = 2) -> list[Prediction]:
    """Predictions for pressing ``action`` now, strongest first."""
    return [Prediction(r.consequent, r.confidence, r.id) for r in matching_rules(rules, window, action, x_min=x_min)]


def record_outcome(rule: Rule, matched_frame: SignalFrame, next_frame: SignalFrame,
                   *, theta_demote: float = 0.5) -> Rule:
    hit = rule.consequent.mask & ~next_frame.mask == 0
    exceptions = rule.exceptions
    if not hit:
        surplus = matched_frame.mask & ~rule.condition.final_group.mask
        if surplus:
            ctx = SignalGroup(surplus)
            merged = False
            out = []
            for e in exceptions:
                if e.context == ctx:
                    e = ExceptionRecord(ctx, e.misses + 1)
                    merged = True
                out.append(e)
            if not merged:
                out.append(ExceptionRecord(ctx, 1))
            exceptions = tuple(out)
    r = replace(rule, support=rule.support + 1, hits=rule.hits + hit, exceptions=exceptions)
    status = RuleStatus.QUARANTINED if r.confidence < theta_demote else RuleStatus.ACTIVE
    return replace(r, status=status)


# -- objects ---------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    defining_group: SignalGroup
    relations: tuple[str, ...]
    label: int | None = None
    aliases: tuple[SignalGroup, ...] = ()


def closure(mask: int, frames: Sequence[int], strip: int = 0) -> int:
    """Largest set (minus ``strip``) present in every frame that contains ``mask``."""
    out = -1
    for f in frames:
        if mask & ~f == 0:
            out &= f
    if out == -1:
        return 0
    return out & ~strip


def occurrences(mask: int, frames: Sequence[int]) -> tuple[int, ...]:
    return tuple(i for i, f in enumerate(frames) if mask & ~f == 0)


def define_objects(
    rules: Iterable[Rule],
    label_channel: Channel | None,
    frames: Sequence[SignalFrame],
    *,
    recall_flag: int,
    world_actions: int | None = None,
    s_min: int = 3,
) -> list[ObjectRecord]:
    """One object per closed external group named by an Active rule.

    Groups are stripped of label and recall-flag signals, then closed over the
    external frames: groups that always co-occur denote the same external
    cause.  Object ids follow first occurrence, so they do not depend on how
    the light array is numbered.
    """
    labels = label_channel.mask if label_channel else 0
    strip = labels | (1 << recall_flag)
    ext = [f.mask for f in frames if not f.is_recall]
    by_closure: dict[int, dict] = {}
    closure_cache: dict[int, int] = {}
    for r in rules:
        if not r.active or r.involves(1 << recall_flag):
            continue
        if world_actions is not None and any(a >= world_actions for _, a in r.condition.steps):
            continue
        for g in [g for g, _ in r.condition.steps] + [r.consequent]:
            m = g.mask & ~strip
            if not m:
                continue
            if m not in closure_cache:
                closure_cache[m] = closure(m, ext, strip)
            c = closure_cache[m]
            if not c:
                continue
            entry = by_closure.setdefault(c, {"rules": set(), "aliases": set()})
            entry["rules"].add(r.id)
            entry["aliases"].add(m)

    keyed = sorted(by_closure, key=lambda c: occurrences(c, ext))
    out = []
    for oid, c in enumerate(keyed):
        occ = occurrences(c, ext)
        label = None
        best = None
        for l in members_of(labels):
            with_label = [i for i in occ if ext[i] >> l & 1]
            if len(with_label) != len(occ) or len(occ) < s_min:
                continue
            stray = sum(1 for f in ext if f >> l & 1) - len(occ)
            if best is None or stray < best:
                best, label = stray, l
        entry = by_closure[c]
        out.append(ObjectRecord(
            id=oid,
            defining_group=SignalGroup(c),
            relations=tuple(sorted(entry["rules"])),
            label=label,
            aliases=tuple(SignalGroup(m) for m in sorted(entry["aliases"])),
        ))
    return out


def object_lookup(objects: Iterable[ObjectRecord]) -> dict[int, int]:
    """Stripped group mask -> object id."""
    out = {}
    for o in objects:
        for g in o.aliases:
            out[g.mask] = o.id
    return out


def relation_edges(rules: Iterable[Rule], objects: Sequence[ObjectRecord], strip: int) -> list[tuple[int, int, int]]:
    """``(subject object, action, object)`` for every Active rule linking two objects."""
    look = object_lookup(objects)
    edges = set()
    for r in rules:
        if not r.active:
            continue
        s = look.get(r.condition.final_group.mask & ~strip)
        o = look.get(r.consequent.mask & ~strip)
        if s is not None and o is not None:
            edges.add((s, r.action, o))
    return sorted(edges)


# -- rule store (JSON lines) -----------------------------------------------------


def rule_to_dict(r: Rule) -> dict:
    return {
        "id": r.id,
        "condition": [[list(g.members), a] for g, a in r.condition.steps],
        "action": r.action,
        "consequent": list(r.consequent.members),
        "support": r.support,
        "hits": r.hits,
        "confidence": round(r.confidence, 12),
        "priority": round(r.priority, 12),
        "status": r.status.value,
        "exceptions": [[list(e.context.members), e.misses] for e in r.exceptions],
    }


def rule_from_dict(d: Mapping) -> Rule:
    steps = tuple((SignalGroup.from_members(g), int(a)) for g, a in d["condition"])
    return Rule(
        condition=TemporalPattern(steps),
        consequent=SignalGroup.from_members(d["consequent"]),
        support=int(d["support"]),
        hits=int(d["hits"]),
        priority=float(d.get("priority", 0.0)),
        exceptions=tuple(ExceptionRecord(SignalGroup.from_members(c), int(m)) for c, m in d.get("exceptions", [])),
        status=RuleStatus(d.get("status", "Active")),
    )


def dumps_rules(rules: Iterable[Rule]) -> str:
    return "".join(json.dumps(rule_to_dict(r), separators=(",", ":")) + "\n" for r in rules)


def loads_rules(text: str) -> list[Rule]:
    return [rule_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def size_of(mask: int) -> int:
    return popcount(mask)
