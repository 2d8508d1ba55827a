"""Valence-rooted priorities over signal groups and priority-ordered rule discovery."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .miner import CooccurrenceStats, History, Rule, candidate_groups, mine_rules, rule_order
from .signals import SignalGroup, Valence, members_of

DEFAULT_GAMMA = 0.9


@dataclass(frozen=True)
class PriorityMap:
    """Priorities of the groups named by some rule; any other group falls back
    to its base weight (the summed weight of its valenced signals)."""

    values: Mapping[SignalGroup, float]
    weights: Mapping[int, float]
    gamma: float = DEFAULT_GAMMA

    def base(self, g: SignalGroup) -> float:
        return sum(self.weights.get(s, 0.0) for s in members_of(g.mask))

    def __getitem__(self, g: SignalGroup) -> float:
        v = self.values.get(g)
        return self.base(g) if v is None else v

    def get(self, g: SignalGroup, default: float | None = None) -> float:
        if g in self.values or default is None:
            return self[g]
        return default

    def items(self):
        return sorted(self.values.items(), key=lambda kv: (-kv[1], kv[0].key()))


def _weights(valences: Mapping[int, Valence | float]) -> dict[int, float]:
    out = {}
    for s, v in valences.items():
        w = v.weight if isinstance(v, Valence) else float(v)
        if w < 0:
            raise ValueError("valence weights are non-negative")
        if w > 0:
            out[s] = w
    return out


def propagate(rules: Iterable[Rule], valences: Mapping[int, Valence | float], gamma: float = DEFAULT_GAMMA) -> PriorityMap:
    """Least fixpoint of ``p(g) = max(base(g), gamma * max p(consequent))``.

    Edges run from a rule's final condition group to its consequent.  Since
    every edge multiplies by ``gamma < 1``, a best-first sweep from the highest
    base values settles each group exactly once, as in Dijkstra's algorithm.
    Harmful and beneficial weights spread alike; the sign stays in the valence.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    weights = _weights(valences)
    preds: dict[int, set[int]] = {}
    nodes: set[int] = set()
    for r in rules:
        if not r.active:
            continue
        g, c = r.condition.steps[-1][0].mask, r.consequent.mask
        nodes.add(g)
        nodes.add(c)
        preds.setdefault(c, set()).add(g)

    def base(m: int) -> float:
        return sum(weights.get(s, 0.0) for s in members_of(m)) if m & wmask else 0.0

    wmask = sum(1 << s for s in weights)
    best = {m: base(m) for m in nodes}
    heap = [(-v, m) for m, v in best.items() if v > 0]
    heapq.heapify(heap)
    done: set[int] = set()
    while heap:
        negv, m = heapq.heappop(heap)
        if m in done:
            continue
        done.add(m)
        cand = -negv * gamma
        for p in preds.get(m, ()):
            if p not in done and cand > best[p]:
                best[p] = cand
                heapq.heappush(heap, (-cand, p))
    best = {SignalGroup(m): v for m, v in best.items()}
    return PriorityMap(best, weights, gamma)


def apply_priorities(rules: Iterable[Rule], pm: PriorityMap) -> list[Rule]:
    out = []
    for r in rules:
        v = pm[r.consequent]
        out.append(r if v == r.priority else replace(r, priority=v))
    return out


def mining_order(candidates: Iterable[SignalGroup], pm: PriorityMap,
                 stats: CooccurrenceStats | None = None) -> list[SignalGroup]:
    def support(g: SignalGroup) -> int:
        return stats.count(g) if stats is not None else 0
    return sorted(candidates, key=lambda g: (-pm[g], -support(g), g.key()))


@dataclass
class Discovery:
    rules: list[Rule]
    passes: list[list[SignalGroup]] = field(default_factory=list)
    found_in: dict[str, int] = field(default_factory=dict)


def mine_prioritized(
    history: History,
    stats: CooccurrenceStats,
    valences: Mapping[int, Valence | float],
    *,
    budget: int,
    theta_conf: float,
    s_min: int,
    gamma: float = DEFAULT_GAMMA,
    window: int = 2,
    max_passes: int | None = None,
) -> Discovery:
    """Discover rules a few target groups at a time, most urgent first.

    Each pass re-propagates priority over what is known so far, then expands
    the ``budget`` highest-ranked unexpanded candidates: it mines the rules
    that lead *to* them.  The first pass therefore learns what produces a
    valenced signal, the next what produces that, and so on.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    cands = candidate_groups(stats, s_min)
    expanded: set[SignalGroup] = set()
    found: dict[str, Rule] = {}
    out = Discovery([])
    while len(expanded) < len(cands):
        if max_passes is not None and len(out.passes) >= max_passes:
            break
        pm = propagate(found.values(), valences, gamma)
        chosen = mining_order(cands - expanded, pm, stats)[:budget]
        expanded.update(chosen)
        out.passes.append(chosen)
        for r in mine_rules(history, cands, theta_conf, s_min, window=window, targets=chosen):
            if r.id not in found:
                found[r.id] = r
                out.found_in[r.id] = len(out.passes) - 1
    pm = propagate(found.values(), valences, gamma)
    out.rules = sorted(apply_priorities(found.values(), pm), key=rule_order)
    return out


def dumps_priorities(pm: PriorityMap, names: Sequence[str] | None = None) -> str:
    lines = []
    for g, v in pm.items():
        rec = {"group": list(g.members)}
        if names is not None:
            rec["names"] = [names[i] for i in g.members]
        rec["priority"] = round(v, 12)
        lines.append(json.dumps(rec, separators=(",", ":")) + "\n")
    return "".join(lines)
