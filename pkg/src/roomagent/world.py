"""The room: a hidden finite-state world that emits mode-dependent frames.

Scenario documents are JSON; see ``SCENARIO_SCHEMA`` for the accepted keys.
Signals are numbered in declaration order across ``channels``; the recall
flag ``R`` is always appended as the last index in the reserved ``internal``
channel.  Actions are numbered ``noop`` first, then the declared motor
buttons, then one ``mode:<name>`` switch per mode when there is more than one.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .signals import (
    NEUTRAL,
    RECALL_CHANNEL,
    RECALL_FLAG_NAME,
    Action,
    ActionKind,
    AgentInterface,
    Channel,
    SignalFrame,
    SignalGroup,
    TaskSpec,
    Valence,
    ValenceClass,
    check_partition,
    mask_of,
    members_of,
)

StateId = int
NOOP = "noop"


class ScenarioError(ValueError):
    """The document does not validate; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class TotalityError(ScenarioError):
    def __init__(self, table: str, missing: list[tuple[str, str]]):
        shown = ", ".join(f"({s}, {a})" for s, a in missing)
        super().__init__(table, f"missing entries for {shown}")
        self.missing = missing


_SIGNAL_LIST = {
    "type": "array",
    "items": {
        "anyOf": [
            {"type": "string"},
            {
                "type": "object",
                "properties": {
                    "signal": {"type": "string"},
                    "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                },
                "required": ["signal", "p"],
                "additionalProperties": False,
            },
        ]
    },
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n_signals": {"type": "integer", "minimum": 2},
        "channels": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
        "labels": {"type": ["string", "null"]},
        "valences": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "class": {"enum": ["beneficial", "harmful", "neutral"]},
                    "weight": {"type": "number", "minimum": 0},
                },
                "required": ["class"],
                "additionalProperties": False,
            },
        },
        "actions": {"type": "array", "items": {"type": "string"}},
        "modes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "reveal": {"type": "object", "additionalProperties": _SIGNAL_LIST},
                },
                "required": ["name"],
                "additionalProperties": False,
            },
        },
        "states": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "transitions": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": {"type": "string"}},
        },
        "emissions": {
            "type": "object",
            "additionalProperties": {
                "anyOf": [_SIGNAL_LIST, {"type": "object", "additionalProperties": _SIGNAL_LIST}]
            },
        },
        "initial": {"type": "string"},
        "seed": {"type": "integer"},
        "strict": {"type": "boolean"},
        "script": {"type": "array", "items": {"type": "string"}},
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "targets": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    },
                    "budget": {"type": "integer", "minimum": 1},
                    "start": {"type": "string"},
                },
                "required": ["name", "targets"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["n_signals", "channels", "modes", "states", "transitions", "emissions", "initial", "seed"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Mode:
    index: int
    name: str


@dataclass(frozen=True)
class WorldCursor:
    state: StateId
    tick: int = 0
    mode: int = 0


Emission = tuple[tuple[int, float], ...]


@dataclass(frozen=True, eq=False)
class World:
    name: str
    n_signals: int
    signal_names: tuple[str, ...]
    channels: tuple[Channel, ...]
    label_channel: str | None
    valences: Mapping[int, Valence]
    actions: tuple[Action, ...]
    modes: tuple[Mode, ...]
    states: tuple[str, ...]
    transitions: Mapping[tuple[StateId, int], StateId]
    emissions: Mapping[tuple[StateId, int], Emission]
    initial: StateId
    seed: int
    strict: bool = True
    script: tuple[int, ...] = ()
    tasks: tuple[TaskSpec, ...] = ()
    document: Mapping[str, Any] = field(default_factory=dict, repr=False)

    @property
    def recall_flag(self) -> int:
        return self.n_signals - 1

    def interface(self) -> AgentInterface:
        return AgentInterface(
            n_signals=self.n_signals,
            channels=self.channels,
            actions=self.actions,
            valences=dict(self.valences),
            label_channel=self.label_channel,
            signal_names=self.signal_names,
        )

    def signal(self, name: str) -> int:
        try:
            return self.signal_names.index(name)
        except ValueError:
            raise KeyError(f"unknown signal {name!r}") from None

    def group(self, *names: str) -> SignalGroup:
        return SignalGroup.from_members(self.signal(n) for n in names)

    def action(self, name: str) -> Action:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(f"unknown action {name!r}")

    def state(self, name: str) -> StateId:
        try:
            return self.states.index(name)
        except ValueError:
            raise KeyError(f"unknown state {name!r}") from None

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(f"unknown channel {name!r}")

    def task(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(f"unknown task {name!r}")

    def names(self, mask: int) -> list[str]:
        return [self.signal_names[i] for i in members_of(mask)]

    def name_table(self) -> dict[str, Any]:
        """The name <-> index audit table emitted with every run."""
        return {
            "signals": {n: i for i, n in enumerate(self.signal_names)},
            "actions": {a.name: a.index for a in self.actions},
            "channels": {c.name: list(c.members) for c in self.channels},
            "modes": {m.name: m.index for m in self.modes},
            "recall_flag": self.recall_flag,
        }

    def cursor(self, state: str | StateId | None = None) -> WorldCursor:
        if state is None:
            s = self.initial
        elif isinstance(state, str):
            s = self.state(state)
        else:
            s = state
        return WorldCursor(s, 0, 0)

    def with_transition(self, state: str, action: str, target: str) -> "World":
        """Copy of the world with one transition rewired (used to inject change)."""
        table = dict(self.transitions)
        table[(self.state(state), self.action(action).index)] = self.state(target)
        return replace(self, transitions=table)

    def permuted(self, perm: Mapping[int, int]) -> "World":
        """Relabel signal ``i`` as ``perm[i]`` everywhere.

        The result is the same world wired to a differently ordered light array.
        """
        n = self.n_signals
        full = {i: perm.get(i, i) for i in range(n)}
        if sorted(full.values()) != list(range(n)):
            raise ValueError("perm must be a bijection on the signal ids")

        def pm(mask: int) -> int:
            return mask_of(full[i] for i in members_of(mask))

        names = [""] * n
        for i, nm in enumerate(self.signal_names):
            names[full[i]] = nm
        emissions = {k: tuple(sorted((full[s], p) for s, p in v)) for k, v in self.emissions.items()}
        tasks = tuple(
            replace(t, targets=tuple(SignalGroup(pm(g.mask)) for g in t.targets)) for t in self.tasks
        )
        return replace(
            self,
            signal_names=tuple(names),
            channels=tuple(Channel(c.name, pm(c.mask)) for c in self.channels),
            valences={full[s]: v for s, v in self.valences.items()},
            emissions=emissions,
            tasks=tasks,
        )


def _emission_rng(world: World, state: StateId, tick: int) -> random.Random:
    return random.Random(f"{world.seed}/{state}/{tick}")


def emit(world: World, state: StateId, mode: int, tick: int) -> int:
    entries = world.emissions[(state, mode)]
    rng = None
    m = 0
    for s, p in entries:
        if p >= 1.0:
            m |= 1 << s
            continue
        if rng is None:
            rng = _emission_rng(world, state, tick)
        if rng.random() < p:
            m |= 1 << s
    if world.strict and m >> world.recall_flag & 1:
        raise AssertionError("recall flag emitted with external provenance")
    return m


def initial_frame(world: World, cursor: WorldCursor | None = None) -> tuple[WorldCursor, SignalFrame]:
    c = cursor or world.cursor()
    return c, SignalFrame.external(c.tick, emit(world, c.state, c.mode, c.tick))


def _resolve(world: World, action: Action | int) -> Action:
    idx = action.index if isinstance(action, Action) else action
    if not isinstance(idx, int) or not 0 <= idx < len(world.actions):
        raise ValueError(f"unknown action id {idx!r}")
    return world.actions[idx]


def advance(cursor: WorldCursor, world: World, action: Action | int) -> WorldCursor:
    a = _resolve(world, action)
    mode = cursor.mode
    key = a.index
    if a.kind is ActionKind.MODE_SWITCH:
        mode = a.target
        key = 0
    return WorldCursor(world.transitions[(cursor.state, key)], cursor.tick + 1, mode)


def step(cursor: WorldCursor, world: World, action: Action | int) -> tuple[WorldCursor, SignalFrame]:
    """Advance one tick.  A mode switch takes the noop transition and emits
    under the new mode."""
    nxt = advance(cursor, world, action)
    return nxt, SignalFrame.external(nxt.tick, emit(world, nxt.state, nxt.mode, nxt.tick))


def valence_of(world: World, s: int) -> Valence:
    if not 0 <= s < world.n_signals:
        raise ValueError(f"signal id {s} out of range")
    return world.valences.get(s, NEUTRAL)


# -- loading -------------------------------------------------------------------


def _schema_key(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        return f"{path}/{missing}" if path else missing
    if err.validator == "additionalProperties" and "'" in err.message:
        extra = err.message.split("'")[1]
        return f"{path}/{extra}" if path else extra
    return path or "<document>"


def load_scenario(source: str | Path | Mapping[str, Any]) -> World:
    """Build a World from a scenario document (JSON text, a path, or a dict)."""
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = source
        if isinstance(source, Path):
            text = source.read_text()
        elif source.strip() and source.lstrip()[0] not in "{[" and Path(source).is_file():
            text = Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioError("<document>", f"not valid JSON ({e.msg})") from None
    if not isinstance(doc, dict):
        raise ScenarioError("<document>", "top level must be an object")
    errors = sorted(jsonschema.Draft7Validator(SCENARIO_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError(_schema_key(errors[0]), errors[0].message)
    return _build(doc)


def _build(doc: dict[str, Any]) -> World:
    names: list[str] = []
    channels: list[Channel] = []
    for cname, members in doc["channels"].items():
        if cname == RECALL_CHANNEL:
            raise ScenarioError(f"channels/{cname}", "the internal channel is reserved")
        ids = []
        for s in members:
            if s == RECALL_FLAG_NAME:
                raise ScenarioError(f"channels/{cname}", "R is the reserved recall flag")
            if s in names:
                raise ScenarioError(f"channels/{cname}", f"signal {s!r} declared twice")
            names.append(s)
            ids.append(len(names) - 1)
        channels.append(Channel.of(cname, ids))
    names.append(RECALL_FLAG_NAME)
    n = len(names)
    channels.append(Channel.of(RECALL_CHANNEL, [n - 1]))
    if doc["n_signals"] != n:
        raise ScenarioError("n_signals", f"declared {doc['n_signals']} but channels define {n} (including R)")
    check_partition(channels, n)
    index = {s: i for i, s in enumerate(names)}

    def sig(s: str, key: str) -> int:
        if s not in index:
            raise ScenarioError(key, f"unknown signal {s!r}")
        return index[s]

    labels = doc.get("labels")
    if labels is not None and labels not in doc["channels"]:
        raise ScenarioError("labels", f"no channel named {labels!r}")

    valences = {}
    for s, v in doc.get("valences", {}).items():
        cls = ValenceClass[v["class"].upper()]
        weight = float(v.get("weight", 0.0 if cls is ValenceClass.NEUTRAL else 1.0))
        try:
            valences[sig(s, f"valences/{s}")] = Valence(cls, weight)
        except ValueError as e:
            raise ScenarioError(f"valences/{s}", str(e)) from None
    if n - 1 in valences:
        raise ScenarioError("valences/R", "the recall flag carries no valence")

    motor = [a for a in doc.get("actions", []) if a != NOOP]
    if len(set(motor)) != len(motor):
        raise ScenarioError("actions", "duplicate action name")
    actions = [Action(0, ActionKind.NOOP, NOOP)]
    for a in motor:
        actions.append(Action(len(actions), ActionKind.MOTOR, a))
    mode_names = [m["name"] for m in doc["modes"]]
    if len(set(mode_names)) != len(mode_names):
        raise ScenarioError("modes", "duplicate mode name")
    modes = tuple(Mode(i, nm) for i, nm in enumerate(mode_names))
    if len(modes) > 1:
        for m in modes:
            actions.append(Action(len(actions), ActionKind.MODE_SWITCH, f"mode:{m.name}", m.index))
    transition_actions = [a for a in actions if a.kind is not ActionKind.MODE_SWITCH]

    states = list(doc["states"])
    if len(set(states)) != len(states):
        raise ScenarioError("states", "duplicate state name")
    sidx = {s: i for i, s in enumerate(states)}

    def state(s: str, key: str) -> int:
        if s not in sidx:
            raise ScenarioError(key, f"unknown state {s!r}")
        return sidx[s]

    transitions: dict[tuple[int, int], int] = {}
    missing: list[tuple[str, str]] = []
    anames = {a.name for a in transition_actions}
    for s, row in doc["transitions"].items():
        state(s, f"transitions/{s}")
        for a in row:
            if a != "*" and a not in anames:
                raise ScenarioError(f"transitions/{s}/{a}", f"unknown action {a!r}")
    for s in states:
        row = doc["transitions"].get(s, {})
        for a in transition_actions:
            target = row.get(a.name, row.get("*"))
            if target is None:
                missing.append((s, a.name))
                continue
            transitions[(sidx[s], a.index)] = state(target, f"transitions/{s}/{a.name}")
    if missing:
        raise TotalityError("transitions", missing)

    def entries(lst: list, key: str) -> list[tuple[int, float]]:
        out = []
        for e in lst:
            if isinstance(e, str):
                out.append((sig(e, key), 1.0))
            else:
                out.append((sig(e["signal"], key), float(e["p"])))
        return out

    reveal: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for m, spec in zip(modes, doc["modes"]):
        for s, lst in spec.get("reveal", {}).items():
            reveal[(state(s, f"modes/{m.name}/reveal/{s}"), m.index)] = entries(lst, f"modes/{m.name}/reveal/{s}")

    emissions: dict[tuple[int, int], Emission] = {}
    missing = []
    for s in doc["emissions"]:
        state(s, f"emissions/{s}")
    for s in states:
        if s not in doc["emissions"]:
            missing.extend((s, m.name) for m in modes)
            continue
        row = doc["emissions"][s]
        for m in modes:
            if isinstance(row, list):
                base = entries(row, f"emissions/{s}")
            elif m.name in row:
                base = entries(row[m.name], f"emissions/{s}/{m.name}")
            else:
                missing.append((s, m.name))
                continue
            extra = reveal.get((sidx[s], m.index), [])
            merged: dict[int, float] = {}
            for sid, p in base + extra:
                merged[sid] = max(p, merged.get(sid, 0.0))
            emissions[(sidx[s], m.index)] = tuple(sorted(merged.items()))
        if isinstance(row, dict):
            for mname in row:
                if mname not in mode_names:
                    raise ScenarioError(f"emissions/{s}/{mname}", f"unknown mode {mname!r}")
    if missing:
        raise TotalityError("emissions", missing)

    strict = doc.get("strict", True)
    if strict:
        for (s, m), em in emissions.items():
            if any(sid == n - 1 for sid, _ in em):
                raise ScenarioError(f"emissions/{states[s]}", "worlds never emit the recall flag R")

    amap = {a.name: a.index for a in actions}
    script = []
    for i, a in enumerate(doc.get("script", [])):
        if a not in amap:
            raise ScenarioError(f"script/{i}", f"unknown action {a!r}")
        script.append(amap[a])

    tasks = []
    for i, t in enumerate(doc.get("tasks", [])):
        targets = tuple(
            SignalGroup.from_members(sig(s, f"tasks/{i}/targets") for s in g) for g in t["targets"]
        )
        start = t.get("start")
        if start is not None:
            state(start, f"tasks/{i}/start")
        tasks.append(TaskSpec(t["name"], targets, t.get("budget", 20), start))

    return World(
        name=doc.get("name", "scenario"),
        n_signals=n,
        signal_names=tuple(names),
        channels=tuple(channels),
        label_channel=labels,
        valences=valences,
        actions=tuple(actions),
        modes=modes,
        states=tuple(states),
        transitions=transitions,
        emissions=emissions,
        initial=state(doc["initial"], "initial"),
        seed=doc["seed"],
        strict=strict,
        script=tuple(script),
        tasks=tuple(tasks),
        document=doc,
    )


CANONICAL = ("football", "rect", "valence_chain", "search_tf", "maze_blind", "composite")


def scenario_path(name: str) -> Path:
    """Path of a bundled scenario document, e.g. ``scenario_path("football")``."""
    p = resources.files("roomagent").joinpath("scenarios", f"{name}.json")
    return Path(str(p))


def load_bundled(name: str) -> World:
    return load_scenario(scenario_path(name))
