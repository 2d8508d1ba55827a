"""The learning agent.  It sees frames and its own buttons, nothing else."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .episodes import NOT_RECORDED, AssignmentFault, EpisodeStore, GateConfig, locate_faulty_rule, recall, store_episode
from .miner import (
    CooccurrenceStats, ObjectRecord, Rule, candidate_groups, define_objects, matching_rules, mine_rules,
    observe, record_outcome,
)
from .priority import PriorityMap, apply_priorities, propagate
from .signals import ActionKind, AgentInterface, SignalFrame, members_of


@dataclass(frozen=True)
class Params:
    window: int = 2
    group_size: int = 4
    theta_conf: float = 0.9
    theta_demote: float = 0.5
    theta_explore: float = 0.1
    s_min: int = 3
    x_min: int = 2
    gamma: float = 0.9
    budget: int | None = None
    mine_every: int = 25
    reflect_limit: int = 16
    recalls_per_episode: int | None = None
    no_recall: bool = False

    def __post_init__(self):
        checks = [
            (1 <= self.window <= 4, "window must be in [1, 4]"),
            (1 <= self.group_size <= 8, "group_size must be in [1, 8]"),
            (0 < self.theta_conf <= 1, "theta_conf must be in (0, 1]"),
            (0 < self.theta_demote <= self.theta_conf, "theta_demote must be in (0, theta_conf]"),
            (0 < self.theta_explore <= self.theta_conf, "theta_explore must be in (0, theta_conf]"),
            (self.s_min >= 1, "s_min must be >= 1"),
            (self.x_min >= 1, "x_min must be >= 1"),
            (0 < self.gamma < 1, "gamma must be in (0, 1)"),
            (self.budget is None or self.budget >= 1, "budget must be >= 1"),
            (self.mine_every >= 1, "mine_every must be >= 1"),
            (self.reflect_limit >= 0, "reflect_limit must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def n_recalls(self) -> int:
        # s_min + 1 consecutive presses give the recall rule s_min matches
        return self.recalls_per_episode or self.s_min + 1


class Agent:
    def __init__(self, iface: AgentInterface, params: Params | None = None, seed: int = 0):
        self.iface = iface
        self.params = params or Params()
        self.rng = random.Random(seed)
        self.stats = CooccurrenceStats(self.params.group_size)
        self.history: list[tuple[SignalFrame, int | None]] = []
        self.hypotheses: list[Rule] = []
        self.rules: list[Rule] = []
        self.objects: list[ObjectRecord] = []
        self.priorities = PriorityMap({}, {}, self.params.gamma)
        self.episodes = EpisodeStore.for_channels(iface.channels)
        self.mode = 0
        self.mode_switches = 0
        self._pending: tuple[int, SignalFrame] | None = None
        self._by_action: dict[int, list[int]] | None = None
        self._task_pm: dict[int, PriorityMap] = {}
        self.rule_counts: list[tuple[int, int]] = []

    # -- perception and action -------------------------------------------------

    @property
    def frame(self) -> SignalFrame:
        return self.history[-1][0]

    @property
    def tick(self) -> int:
        return self.frame.tick

    def window(self) -> list[tuple[SignalFrame, int | None]]:
        return self.history[-self.params.window:]

    def perceive(self, frame: SignalFrame) -> None:
        if self.history and frame.tick <= self.tick:
            raise ValueError("frame ticks must strictly increase")
        self.history.append((frame, None))
        observe(self.stats, frame)
        if self._pending is not None:
            tick, matched = self._pending
            self._pending = None
            self._credit(tick, matched, frame)

    def commit(self, action: int) -> Rule | None:
        """Record that ``action`` is pressed now; returns the rule that fired."""
        act = self.iface.action(action)
        frame = self.frame
        fired = None
        if act.kind is not ActionKind.RECALL:
            ranked = matching_rules(self.rules_for(action), self.window(), action, x_min=self.params.x_min)
            if ranked:
                fired = ranked[0]
                k = store_episode(self.episodes, fired.condition, action, fired.consequent, fired.id, frame.tick)
                if k is not NOT_RECORDED:
                    self._pending = (frame.tick, frame)
        if act.kind is ActionKind.MODE_SWITCH and act.target != self.mode:
            self.mode = act.target
            self.mode_switches += 1
        self.history[-1] = (frame, action)
        return fired

    def rules_for(self, action: int) -> list[Rule]:
        if self._by_action is None:
            idx: dict[int, list[int]] = {}
            for i, r in enumerate(self.rules):
                idx.setdefault(r.action, []).append(i)
            self._by_action = idx
        return [self.rules[i] for i in self._by_action.get(action, ())]

    def task_priorities(self, target: int) -> PriorityMap:
        """Priorities with the task's target signals as the only valence."""
        if target not in self._task_pm:
            weights = {s: 1.0 for s in members_of(target)}
            self._task_pm[target] = propagate(self.rules, weights, self.params.gamma)
        return self._task_pm[target]

    def recall_frame(self, k: int, tick: int) -> SignalFrame:
        return recall(self.episodes, k, tick, self.iface.recall_flag)

    def novelty_action(self) -> int:
        return self.rng.choice(self.iface.motor_actions).index

    def _credit(self, tick: int, matched: SignalFrame, observed: SignalFrame) -> None:
        try:
            rid = locate_faulty_rule(self.episodes, tick)
        except AssignmentFault:
            return
        for i, r in enumerate(self.rules):
            if r.id == rid:
                self.rules[i] = record_outcome(r, matched, observed, theta_demote=self.params.theta_demote)
                if self.rules[i].status is not r.status:
                    self._task_pm.clear()
                return

    # -- learning --------------------------------------------------------------

    def mine(self) -> None:
        p = self.params
        if len(self.history) < 2:
            return
        cands = candidate_groups(self.stats, p.s_min)
        old = {r.id: r for r in self.rules}
        rules = []
        for r in mine_rules(self.history, cands, p.theta_conf, p.s_min, window=p.window):
            prev = old.get(r.id)
            if prev is not None and prev.exceptions:
                r = replace(r, exceptions=prev.exceptions)
            rules.append(r)
        # exploration only reads single-step hypotheses, so mine those alone
        hyps = mine_rules(self.history, cands, p.theta_explore, p.s_min, window=1)
        self.priorities = propagate(rules, self.iface.valences, p.gamma)
        self.rules = apply_priorities(rules, self.priorities)
        self._by_action = None
        self._task_pm.clear()
        self.hypotheses = apply_priorities(hyps, self.priorities)
        self.define_objects()
        self.rule_counts.append((self.tick, len(self.rules)))

    def define_objects(self) -> None:
        label = None
        if self.iface.label_channel:
            label = self.iface.channel(self.iface.label_channel)
        self.objects = define_objects(
            self.rules, label, [f for f, _ in self.history],
            recall_flag=self.iface.recall_flag, world_actions=len(self.iface.actions), s_min=self.params.s_min,
        )

    def rule(self, rid: str) -> Rule:
        for r in self.rules:
            if r.id == rid:
                return r
        raise KeyError(rid)

    @property
    def gates(self) -> GateConfig:
        return self.episodes.gates
