"""Recall-objects, their four properties, and the probe protocol that reports them.

Everything here reads an agent's own stores (rules, objects, episodes, and the
interface to its body).  Nothing here can see a World.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .episodes import Episode, dumps_episodes, loads_episodes
from .miner import (
    ObjectRecord, Rule, action_rule_stats, decision_order, dumps_rules, loads_rules, relation_edges,
)
from .signals import (
    Action, ActionKind, AgentInterface, Channel, SignalGroup, Valence, ValenceClass, group_project,
    group_subset, mask_of, members_of,
)

QUERIES = ("LIST_OBJECTS", "RELATIONS", "REFERENT", "COMPONENTS", "DEFINABLE_EXTERNALLY")


class IntegrityFault(RuntimeError):
    """A recall did not reproduce its episode, so no recall-object is well defined."""


class QueryFault(LookupError):
    pass


class PreconditionViolation(ValueError):
    pass


@dataclass(frozen=True)
class RecallObject:
    id: int
    source_episode: int
    defining_group: SignalGroup
    referent: int
    via_rule: str


# -- formation and the four properties ------------------------------------------------


def _strip_mask(iface: AgentInterface) -> int:
    return iface.label_mask | 1 << iface.recall_flag


def resolve_referent(objects: Sequence[ObjectRecord], mask: int) -> int | None:
    """Object named by a (stripped) group: exact alias first, else the smallest
    object containing it."""
    for o in objects:
        if any(g.mask == mask for g in o.aliases):
            return o.id
    best = None
    for o in objects:
        if mask & ~o.defining_group.mask == 0:
            if best is None or (len(o.defining_group), o.id) < (len(best.defining_group), best.id):
                best = o
    return None if best is None else best.id


def form_recall_objects(
    rules: Iterable[Rule],
    episodes: Sequence[Episode],
    objects: Sequence[ObjectRecord],
    iface: AgentInterface,
    *,
    s_min: int = 3,
    history=None,
) -> list[RecallObject]:
    """One recall-object per episode whose recall rule is mined and exact.

    With ``history`` the raw recall statistics are checked too: an episode
    recalled ``s_min`` or more times whose recall ever lit anything other than
    its stored group raises IntegrityFault.
    """
    R = 1 << iface.recall_flag
    strip = _strip_mask(iface)
    by_action: dict[int, list[Rule]] = {}
    for r in rules:
        if r.active and r.action >= len(iface.actions):
            by_action.setdefault(r.action, []).append(r)
    out = []
    for ep in episodes:
        rk = iface.recall_action(ep.id).index
        target = SignalGroup(ep.content() | R)
        if history is not None:
            support, hits = action_rule_stats(history, rk, target)
            if support >= s_min and hits < support:
                raise IntegrityFault(
                    f"recall of episode {ep.id} reproduced its group {hits} of {support} times")
        cands = [r for r in by_action.get(rk, ()) if r.consequent == target]
        bad = [r for r in cands if r.hits < r.support]
        if bad:
            raise IntegrityFault(f"recall rule for episode {ep.id} has confidence {bad[0].confidence:.3f}")
        cands = sorted((r for r in cands if r.support >= s_min), key=decision_order)
        if not cands:
            continue
        referent = resolve_referent(objects, ep.content() & ~strip)
        if referent is None:
            raise IntegrityFault(f"episode {ep.id} names no known object")
        out.append(RecallObject(len(out), ep.id, target, referent, cands[0].id))
    return out


def check_intentionality(q: RecallObject) -> int:
    return q.referent


def decompose_unity(q: RecallObject, channels: Iterable[Channel]) -> list[tuple[str, SignalGroup]]:
    parts = []
    for ch in channels:
        g = group_project(q.defining_group, ch)
        if g is not None:
            parts.append((ch.name, g))
    return parts


def recall_flag_reachable(rules: Iterable[Rule], iface: AgentInterface) -> bool:
    """Does some Active rule light R from an external-only, recall-free condition?"""
    R = 1 << iface.recall_flag
    n = len(iface.actions)
    for r in rules:
        if not r.active or not r.consequent.mask & R:
            continue
        if r.condition.union_mask() & R:
            continue
        if any(a >= n for _, a in r.condition.steps):
            continue
        return True
    return False


def check_irreducibility(q: RecallObject | None, rules: Iterable[Rule], iface: AgentInterface) -> bool:
    if q is not None and iface.recall_flag not in q.defining_group:
        return False
    return not recall_flag_reachable(rules, iface)


# -- stores --------------------------------------------------------------------


@dataclass
class Stores:
    """An agent's stores: all that a probe may consult."""

    iface: AgentInterface
    rules: list[Rule]
    objects: list[ObjectRecord]
    episodes: list[Episode]
    recall_objects: list[RecallObject]
    integrity_error: str | None = None

    @classmethod
    def from_agent(cls, agent) -> "Stores":
        err = None
        try:
            recs = form_recall_objects(agent.rules, agent.episodes.episodes, agent.objects, agent.iface,
                                       s_min=agent.params.s_min, history=agent.history)
        except IntegrityFault as e:
            recs, err = [], str(e)
        return cls(agent.iface, list(agent.rules), list(agent.objects), list(agent.episodes.episodes), recs, err)

    def dump(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _write(d / "interface.json", canonical(iface_to_dict(self.iface)) + "\n")
        _write(d / "rules.jsonl", dumps_rules(self.rules))
        _write(d / "objects.jsonl", "".join(canonical(object_to_dict(o)) + "\n" for o in self.objects))
        _write(d / "episodes.jsonl", dumps_episodes(self.episodes))
        _write(d / "recall_objects.jsonl", "".join(canonical(recall_to_dict(q)) + "\n" for q in self.recall_objects))
        _write(d / "integrity.json", canonical({"integrity_error": self.integrity_error}) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Stores":
        d = Path(directory)

        def lines(name):
            return [json.loads(x) for x in (d / name).read_text().splitlines() if x.strip()]

        iface = iface_from_dict(json.loads((d / "interface.json").read_text()))
        integrity = d / "integrity.json"
        err = json.loads(integrity.read_text())["integrity_error"] if integrity.exists() else None
        return cls(
            iface,
            loads_rules((d / "rules.jsonl").read_text()),
            [object_from_dict(x) for x in lines("objects.jsonl")],
            loads_episodes((d / "episodes.jsonl").read_text()),
            [recall_from_dict(x) for x in lines("recall_objects.jsonl")],
            err,
        )


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def canonical(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def iface_to_dict(iface: AgentInterface) -> dict:
    return {
        "n_signals": iface.n_signals,
        "signals": list(iface.signal_names),
        "channels": [[c.name, list(c.members)] for c in iface.channels],
        "label_channel": iface.label_channel,
        "actions": [[a.name, a.kind.value, a.target] for a in iface.actions],
        "valences": [[s, v.cls.value, v.weight] for s, v in sorted(iface.valences.items())],
    }


def iface_from_dict(d: Mapping) -> AgentInterface:
    return AgentInterface(
        n_signals=int(d["n_signals"]),
        channels=tuple(Channel(n, mask_of(m)) for n, m in d["channels"]),
        actions=tuple(Action(i, ActionKind(k), n, t) for i, (n, k, t) in enumerate(d["actions"])),
        valences={int(s): Valence(ValenceClass(c), float(w)) for s, c, w in d["valences"]},
        label_channel=d["label_channel"],
        signal_names=tuple(d["signals"]),
    )


def object_to_dict(o: ObjectRecord) -> dict:
    return {
        "id": o.id,
        "defining_group": list(o.defining_group.members),
        "label": o.label,
        "relations": list(o.relations),
        "aliases": [list(g.members) for g in o.aliases],
    }


def object_from_dict(d: Mapping) -> ObjectRecord:
    return ObjectRecord(
        int(d["id"]), SignalGroup.from_members(d["defining_group"]), tuple(d["relations"]),
        d["label"], tuple(SignalGroup.from_members(g) for g in d["aliases"]),
    )


def recall_to_dict(q: RecallObject) -> dict:
    return {"id": q.id, "source_episode": q.source_episode, "defining_group": list(q.defining_group.members),
            "referent": q.referent, "via_rule": q.via_rule}


def recall_from_dict(d: Mapping) -> RecallObject:
    return RecallObject(int(d["id"]), int(d["source_episode"]), SignalGroup.from_members(d["defining_group"]),
                        int(d["referent"]), str(d["via_rule"]))


# -- probes ----------------------------------------------------------------------


def _obj(i: int) -> str:
    return f"obj:{i}"


def _rec(i: int) -> str:
    return f"rec:{i}"


def _parse_id(stores: Stores, ref: Any) -> tuple[str, Any]:
    if not isinstance(ref, str) or ":" not in ref:
        raise QueryFault(f"unknown id {ref!r}")
    kind, _, num = ref.partition(":")
    if not num.isdigit():
        raise QueryFault(f"unknown id {ref!r}")
    i = int(num)
    if kind == "obj" and i < len(stores.objects):
        return kind, stores.objects[i]
    if kind == "rec" and i < len(stores.recall_objects):
        return kind, stores.recall_objects[i]
    raise QueryFault(f"unknown id {ref!r}")


def external_edges(stores: Stores) -> list[tuple[int, str, int]]:
    iface = stores.iface
    world_rules = [
        r for r in stores.rules
        if all(a < len(iface.actions) for _, a in r.condition.steps) and not r.involves(1 << iface.recall_flag)
    ]
    edges = relation_edges(world_rules, stores.objects, _strip_mask(iface))
    return sorted({(s, iface.action_name(a), o) for s, a, o in edges})


def answer_probe(stores: Stores, query: Mapping) -> Any:
    """Answer one structured query from the stores alone.

    Raises QueryFault for unknown ids and ValueError for malformed queries.
    """
    if not isinstance(query, Mapping) or query.get("query") not in QUERIES:
        raise ValueError(f"malformed query {query!r}")
    q = query["query"]
    iface = stores.iface
    if q == "LIST_OBJECTS":
        kind = query.get("kind")
        if kind == "external":
            names = iface.signal_names
            return [{"id": _obj(o.id), "label": None if o.label is None else names[o.label]} for o in stores.objects]
        if kind == "recall":
            return [{"id": _rec(r.id)} for r in stores.recall_objects]
        raise ValueError(f"LIST_OBJECTS kind must be external or recall, got {kind!r}")
    if "id" not in query:
        raise ValueError(f"{q} needs an id")
    kind, item = _parse_id(stores, query["id"])
    if q == "RELATIONS":
        if kind != "obj":
            raise QueryFault(f"RELATIONS needs an external object, got {query['id']}")
        return [[_obj(s), a, _obj(o)] for s, a, o in external_edges(stores) if item.id in (s, o)]
    if q == "DEFINABLE_EXTERNALLY":
        if kind == "obj":
            return bool(item.relations)
        return not check_irreducibility(item, stores.rules, iface)
    if kind != "rec":
        raise QueryFault(f"{q} needs a recall-object, got {query['id']}")
    if q == "REFERENT":
        return _obj(check_intentionality(item))
    parts = decompose_unity(item, iface.channels)
    union = 0
    for _, g in parts:
        union |= g.mask
    return {
        "parts": [[name, len(g)] for name, g in parts],
        "whole": len(item.defining_group),
        "parts_are_subsets": all(group_subset(g, item.defining_group) for _, g in parts),
        "union_is_whole": union == item.defining_group.mask,
    }


def answer_line(stores: Stores, line: str) -> tuple[str, str]:
    """One transcript line for one request line; the tag is ok, fault or error."""
    try:
        query = json.loads(line)
    except json.JSONDecodeError as e:
        return "error", canonical({"error": f"malformed query: {e.msg}"})
    try:
        ans = answer_probe(stores, query)
    except QueryFault as e:
        return "fault", canonical({"query": query, "fault": str(e.args[0])})
    except ValueError as e:
        return "error", canonical({"error": str(e)})
    return "ok", canonical({"query": query, "answer": ans})


def probe_suite(stores: Stores) -> list[dict]:
    qs: list[dict] = [{"query": "LIST_OBJECTS", "kind": "external"}, {"query": "LIST_OBJECTS", "kind": "recall"}]
    for o in stores.objects:
        qs.append({"query": "RELATIONS", "id": _obj(o.id)})
        qs.append({"query": "DEFINABLE_EXTERNALLY", "id": _obj(o.id)})
    for r in stores.recall_objects:
        for q in ("REFERENT", "COMPONENTS", "DEFINABLE_EXTERNALLY"):
            qs.append({"query": q, "id": _rec(r.id)})
    return qs


def transcript(stores: Stores, queries: Iterable[Mapping] | None = None) -> str:
    qs = probe_suite(stores) if queries is None else queries
    return "".join(answer_line(stores, canonical(q))[1] + "\n" for q in qs)


# -- alignment -------------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentReport:
    object_map: Mapping[int, int]
    relation_isomorphic: bool
    recall_internal_identifiable: bool


def _labelled(stores: Stores) -> dict[tuple[str, int], int]:
    names = stores.iface.signal_names
    seen: dict[str, int] = {}
    out = {}
    for o in stores.objects:
        if o.label is None:
            continue
        name = names[o.label]
        out[(name, seen.get(name, 0))] = o.id
        seen[name] = seen.get(name, 0) + 1
    return out


def alignment_test(a: Stores, b: Stores, perm: Mapping[int, int]) -> AlignmentReport:
    """Compare two agents whose light arrays differ by ``perm``.

    ``perm`` must fix every label signal and the recall flag.  Objects are
    paired through shared labels; the internal composition counts as
    identifiable only when the two probe transcripts differ, or ``perm`` is
    trivial on the remaining signals.
    """
    fixed = a.iface.label_mask | 1 << a.iface.recall_flag
    for s in members_of(fixed):
        if perm.get(s, s) != s:
            raise PreconditionViolation(f"the permutation moves signal {s}, a label or the recall flag")
    la, lb = _labelled(a), _labelled(b)
    object_map = {la[k]: lb[k] for k in sorted(la) if k in lb}
    bijective = set(la) == set(lb)
    ea = {(object_map.get(s), act, object_map.get(o)) for s, act, o in external_edges(a) if s in object_map and o in object_map}
    eb = {(s, act, o) for s, act, o in external_edges(b) if s in set(lb.values()) and o in set(lb.values())}
    isomorphic = bijective and ea == eb
    trivial = all(perm.get(s, s) == s for s in range(a.iface.n_signals))
    identifiable = trivial or transcript(a) != transcript(b)
    return AlignmentReport(object_map, isomorphic, identifiable)


def label_fixing_permutations(iface: AgentInterface, count: int, seed: int,
                              recall_groups: Sequence[int] = ()) -> list[dict[int, int]]:
    """``count`` seeded permutations that fix labels and R, none the identity,
    whose images of ``recall_groups`` are pairwise distinct."""
    if count < 1:
        raise ValueError("need at least one permutation")
    fixed = iface.label_mask | 1 << iface.recall_flag
    movable = [s for s in range(iface.n_signals) if not fixed >> s & 1]
    if len(movable) < 2:
        raise ValueError("fewer than two movable signals: nothing to permute")
    rng = random.Random(seed)
    out, images = [], set()
    for _ in range(10000):
        if len(out) == count:
            break
        shuffled = movable[:]
        rng.shuffle(shuffled)
        perm = dict(zip(movable, shuffled))
        if all(perm[s] == s for s in movable) or perm in out:
            continue
        image = tuple(sum(1 << perm.get(s, s) for s in members_of(g)) for g in recall_groups)
        if recall_groups and image in images:
            continue
        images.add(image)
        out.append(perm)
    if len(out) < count:
        raise ValueError(f"only {len(out)} distinct permutations available")
    return out


# -- criterion -------------------------------------------------------------------


@dataclass(frozen=True)
class CriterionReport:
    ineffability: bool
    irreducibility: bool
    intentionality: bool
    unity: bool
    passed: bool
    reasons: tuple[str, ...] = ()
    recall_objects: int = 0
    permutations: int = 0

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "ineffability": self.ineffability,
            "irreducibility": self.irreducibility,
            "intentionality": self.intentionality,
            "unity": self.unity,
            "reasons": list(self.reasons),
            "recall_objects": self.recall_objects,
            "permutations": self.permutations,
        }


def evaluate_criterion(stores: Stores, alignments: Sequence[AlignmentReport],
                       suite: Sequence[Mapping] | None = None) -> CriterionReport:
    """Judge the four properties from probe answers, as an outside observer would."""
    suite = probe_suite(stores) if suite is None else suite
    answers = []
    for q in suite:
        try:
            answers.append((q, answer_probe(stores, q)))
        except (QueryFault, ValueError):
            answers.append((q, None))
    externals = {x["id"] for q, a in answers if q["query"] == "LIST_OBJECTS" and q.get("kind") == "external"
                 for x in a or ()}
    recalls = [x["id"] for q, a in answers if q["query"] == "LIST_OBJECTS" and q.get("kind") == "recall"
               for x in a or ()]

    def about(name):
        return [a for q, a in answers if q["query"] == name and str(q.get("id", "")).startswith("rec:")]

    reasons = []
    if stores.integrity_error:
        reasons.append(f"integrity fault: {stores.integrity_error}")
    if not recalls:
        reasons.append("no recall-objects")
    reachable = recall_flag_reachable(stores.rules, stores.iface)
    if reachable:
        reasons.append("recall flag reachable from external conditions (scenario malformed)")

    intentionality = bool(recalls) and all(a in externals for a in about("REFERENT"))
    unity = bool(recalls) and all(a and a["parts_are_subsets"] and a["union_is_whole"] for a in about("COMPONENTS"))
    definable = about("DEFINABLE_EXTERNALLY")
    irreducibility = not reachable and all(a is False for a in definable)
    ineffability = bool(alignments) and all(r.relation_isomorphic and not r.recall_internal_identifiable
                                            for r in alignments)
    if not alignments:
        reasons.append("no permutation runs")
    elif not ineffability:
        reasons.append("reports reveal the internal composition")
    passed = ineffability and irreducibility and intentionality and unity and bool(recalls) and not stores.integrity_error
    return CriterionReport(ineffability, irreducibility, intentionality, unity, passed, tuple(reasons),
                           len(recalls), len(alignments))


FORBIDDEN = QUERIES + ("conscious", "qualia", "quale", "ineffab", "irreducib", "intentional", "phenomenal")


def audit_scenario(document: Mapping) -> list[str]:
    """Tokens in a scenario document that would leak probe answers into training."""
    text = json.dumps(document, sort_keys=True).lower()
    return [t for t in FORBIDDEN if t.lower() in text]
