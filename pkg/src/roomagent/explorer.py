"""Exploration by mode switching: notice when the frame cannot settle a task,
then press the button that experience says will tell the contenders apart."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .miner import ObjectRecord, Rule, object_lookup, predict
from .priority import PriorityMap
from .signals import Action, SignalFrame, SignalGroup, TaskSpec

if TYPE_CHECKING:
    from .agent import Agent
    from .simulation import Simulation


class Status(Enum):
    RESOLVED = "Resolved"
    AMBIGUOUS = "Ambiguous"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class AmbiguityReport:
    status: Status
    contenders: tuple[int, ...] = ()
    discriminating: Mapping[int, frozenset[int]] = field(default_factory=dict)
    groups: Mapping[int, SignalGroup] = field(default_factory=dict)


def _owner(objects: Mapping[int, ObjectRecord], aliases: Mapping[int, int], mask: int) -> ObjectRecord | None:
    """The object a group names: an exact alias, else the smallest superset."""
    if mask in aliases:
        return objects[aliases[mask]]
    best = None
    for o in objects.values():
        if mask & ~o.defining_group.mask == 0:
            if best is None or (len(o.defining_group), o.id) < (len(best.defining_group), best.id):
                best = o
    return best


def detect_ambiguity(
    frame: SignalFrame,
    objects: Sequence[ObjectRecord],
    rules: Iterable[Rule],
    *,
    target: int = 0,
    exclude_actions: Iterable[int] = (),
    strip: int = 0,
) -> AmbiguityReport:
    """Classify ``frame`` with respect to a task whose signals are ``target``.

    Contenders are the task-relevant objects the frame only partly shows, plus
    the objects named by two same-condition rules that predict disjoint
    outcomes.  ``strip`` masks signals that never define objects (labels, R).
    """
    if not frame.mask:
        return AmbiguityReport(Status.UNKNOWN)
    relevant = [o for o in objects if not target or o.defining_group.mask & target]
    if any(o.defining_group.mask & ~frame.mask == 0 for o in relevant):
        return AmbiguityReport(Status.RESOLVED)
    contenders = {o.id: o for o in relevant if o.defining_group.mask & frame.mask}

    by_id = {o.id: o for o in objects}
    aliases = object_lookup(objects)
    excluded = set(exclude_actions)
    matching = [
        r for r in rules
        if r.active and len(r.condition) == 1 and r.action not in excluded
        and r.condition.final_group.mask & ~frame.mask == 0
    ]
    same: dict[tuple, list[Rule]] = defaultdict(list)
    for r in matching:
        same[(r.condition.final_group, r.action)].append(r)
    for group in same.values():
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if a.consequent.mask & b.consequent.mask:
                    continue
                if target and not (a.consequent.mask | b.consequent.mask) & target:
                    continue
                for c in (a.consequent, b.consequent):
                    o = _owner(by_id, aliases, c.mask & ~strip) if c.mask & ~strip else None
                    if o is not None and o.defining_group.mask & ~frame.mask:
                        contenders.setdefault(o.id, o)

    if len(contenders) < 2:
        return AmbiguityReport(Status.UNKNOWN, tuple(sorted(contenders)))
    union, inter = 0, -1
    for o in contenders.values():
        union |= o.defining_group.mask
        inter &= o.defining_group.mask
    differing = union & ~inter & ~frame.mask
    expected: dict[int, int] = defaultdict(int)
    for r in matching:
        expected[r.action] |= r.consequent.mask
    disc = {}
    for a in sorted(expected):
        m = expected[a] & differing
        if m:
            disc[a] = frozenset(i for i in range(m.bit_length()) if m >> i & 1)
    return AmbiguityReport(
        Status.AMBIGUOUS,
        tuple(sorted(contenders)),
        disc,
        {k: o.defining_group for k, o in contenders.items()},
    )


def select_action(report: AmbiguityReport, pm: PriorityMap, *,
                  motor_actions: Sequence[Action] = (), rng: random.Random | None = None) -> int:
    """Most discriminating action, each signal weighted by 1 + the highest
    priority among contenders that contain it; ties go to the lowest id."""
    if report.status is not Status.AMBIGUOUS:
        raise ValueError("select_action needs an Ambiguous report")
    if not report.discriminating:
        if not motor_actions:
            raise ValueError("no discriminating action and no motor fallback")
        return (rng or random.Random(0)).choice(list(motor_actions)).index
    best, best_score = None, -1.0
    for a in sorted(report.discriminating):
        score = 0.0
        for s in report.discriminating[a]:
            score += 1 + max((pm[g] for g in report.groups.values() if s in g), default=0.0)
        if score > best_score:
            best, best_score = a, score
    return best


# -- closed loop -----------------------------------------------------------------


@dataclass(frozen=True)
class TaskOutcome:
    task: str
    success: bool
    ticks: int
    mode_switches: int
    actions: tuple[int, ...] = ()


def task_priorities(agent: "Agent", task: TaskSpec) -> PriorityMap:
    return agent.task_priorities(task.target_mask)


@dataclass
class _TaskState:
    task: TaskSpec
    pm: PriorityMap
    context: SignalFrame
    tried: set[int] = field(default_factory=set)
    actions: list[int] = field(default_factory=list)
    switches: int = 0
    done: bool = False
    success: bool = False
    ticks: int = 0


def _decide(agent: "Agent", st: _TaskState) -> int:
    iface = agent.iface
    strip = iface.label_mask | 1 << iface.recall_flag
    rep = detect_ambiguity(st.context, agent.objects, agent.hypotheses, target=st.task.target_mask,
                           exclude_actions=st.tried, strip=strip)
    if rep.status is Status.AMBIGUOUS:
        a = select_action(rep, st.pm, motor_actions=iface.motor_actions, rng=agent.rng)
        if rep.discriminating:
            assert any(r.action == a for r in agent.hypotheses), "exploration must be experience-guided"
        return a
    window = agent.window()
    best, best_score = None, 0.0
    for act in iface.motor_actions:
        preds = predict(agent.rules_for(act.index), window, act.index, x_min=agent.params.x_min)
        score = max((p.confidence * st.pm[p.group] for p in preds), default=0.0)
        if score > best_score:
            best, best_score = act.index, score
    return best if best is not None else agent.novelty_action()


def _after(agent: "Agent", st: _TaskState, action: int | None, frame: SignalFrame) -> None:
    if action is not None:
        st.tried.add(action)
    if agent.mode == 0:
        # in the default view every frame is a fresh context
        st.context = frame
        st.tried.clear()


def run_task(sim: "Simulation", task: TaskSpec, tick_budget: int | None = None) -> TaskOutcome:
    """Observe, check for ambiguity, act; until the task's target shows up or the budget runs out."""
    return run_interleaved(sim, [task], tick_budget)[0]


def run_interleaved(sim: "Simulation", tasks: Sequence[TaskSpec], tick_budget: int | None = None) -> list[TaskOutcome]:
    """Serve several tasks round-robin from one body.

    Each tick belongs to one task, but every frame is checked against all of
    them.  A task's tick count is the wall-clock ticks elapsed until it is met.
    """
    if not tasks:
        return []
    if tick_budget is not None and tick_budget < 1:
        raise ValueError("tick_budget must be >= 1")
    if tasks[0].start is not None:
        sim.reset(tasks[0].start)
    agent = sim.agent
    states = [_TaskState(t, task_priorities(agent, t), agent.frame) for t in tasks]
    budgets = [tick_budget or t.budget for t in tasks]
    for st in states:
        if st.task.satisfied_by(agent.frame):
            st.done = st.success = True
    elapsed, turn = 0, 0
    while not all(st.done for st in states):
        live = [i for i, st in enumerate(states) if not st.done]
        i = live[turn % len(live)]
        turn += 1
        st = states[i]
        before = agent.mode
        a = _decide(agent, st)
        frame = sim.press(a)
        elapsed += 1
        st.actions.append(a)
        if agent.mode != before:
            st.switches += 1
        for j, other in enumerate(states):
            if other.done:
                continue
            _after(agent, other, a if j == i else None, frame)
            if other.task.satisfied_by(frame):
                other.done = other.success = True
                other.ticks = elapsed
            elif elapsed >= budgets[j]:
                other.done = True
                other.ticks = elapsed
    return [TaskOutcome(st.task.name, st.success, st.ticks, st.switches, tuple(st.actions)) for st in states]
