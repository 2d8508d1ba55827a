"""Indexed episodes: decision-time traces that a recall button can re-light."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .miner import TemporalPattern
from .signals import Channel, SignalFrame, SignalGroup


class RecallFault(LookupError):
    """Recall of an id that names no stored episode."""


class AssignmentFault(LookupError):
    """No decision episode exists at the tick a prediction failed."""


class Gate(Enum):
    RECORDING = "Recording"
    GATED = "Gated"


class _NotRecorded:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "NOT_RECORDED"


NOT_RECORDED = _NotRecorded()


@dataclass(frozen=True)
class GateConfig:
    channels: tuple[Channel, ...]
    states: Mapping[str, Gate] = field(default_factory=dict)

    def state(self, name: str) -> Gate:
        return self.states.get(name, Gate.RECORDING)

    def gated_mask(self) -> int:
        m = 0
        for ch in self.channels:
            if self.state(ch.name) is Gate.GATED:
                m |= ch.mask
        return m


@dataclass(frozen=True)
class Episode:
    id: int
    trace: TemporalPattern
    action: int
    predicted: SignalGroup
    rule: str
    tick: int

    def content(self) -> int:
        return self.trace.union_mask()


@dataclass
class EpisodeStore:
    gates: GateConfig
    episodes: list[Episode] = field(default_factory=list)
    by_tick: dict[int, int] = field(default_factory=dict)
    # ablation: when set, every recall returns some *other* episode's content
    scramble: random.Random | None = None

    @classmethod
    def for_channels(cls, channels: Iterable[Channel]) -> "EpisodeStore":
        return cls(GateConfig(tuple(channels)))

    def __len__(self) -> int:
        return len(self.episodes)

    def __getitem__(self, k: int) -> Episode:
        if isinstance(k, _NotRecorded) or not isinstance(k, int) or not 0 <= k < len(self.episodes):
            raise RecallFault(f"no episode {k!r}")
        return self.episodes[k]


def store_episode(store: EpisodeStore, pattern: TemporalPattern, action: int, predicted: SignalGroup,
                  rule: str, tick: int, gates: GateConfig | None = None):
    """Append an episode, dropping gated signals; returns its id or NOT_RECORDED."""
    gated = (gates or store.gates).gated_mask()
    steps = tuple((SignalGroup(g.mask & ~gated), a) for g, a in pattern.steps if g.mask & ~gated)
    if not steps:
        return NOT_RECORDED
    ep = Episode(len(store.episodes), TemporalPattern(steps), action, predicted, rule, tick)
    store.episodes.append(ep)
    store.by_tick[tick] = ep.id
    return ep.id


def recall(store: EpisodeStore, k, tick: int, recall_flag: int) -> SignalFrame:
    """The frame produced by pressing recall button ``k`` at ``tick``.

    External input is suppressed for the tick; the caller advances the world
    by a no-op so that time still passes.
    """
    ep = store[k]
    if store.scramble is not None and len(store.episodes) > 1:
        others = [e for e in store.episodes if e.id != ep.id]
        ep = store.scramble.choice(others)
    return SignalFrame.recalled(tick, ep.content() | 1 << recall_flag)


def locate_faulty_rule(store: EpisodeStore, tick: int, predicted: SignalGroup | None = None,
                       observed: SignalFrame | None = None) -> str:
    """The rule that drove the decision at ``tick``, read back from its episode."""
    k = store.by_tick.get(tick)
    if k is None:
        raise AssignmentFault(f"no decision episode at tick {tick}")
    ep = store.episodes[k]
    if predicted is not None and ep.predicted != predicted:
        raise AssignmentFault(f"episode at tick {tick} predicted {ep.predicted}, not {predicted}")
    return ep.rule


def set_gate(store: EpisodeStore, channel: str, gate: Gate) -> GateConfig:
    if channel not in {c.name for c in store.gates.channels}:
        raise ValueError(f"unknown channel {channel!r}")
    states = dict(store.gates.states)
    states[channel] = gate
    store.gates = GateConfig(store.gates.channels, states)
    return store.gates


def episode_to_dict(e: Episode) -> dict:
    return {
        "id": e.id,
        "trace": [[list(g.members), a] for g, a in e.trace.steps],
        "action": e.action,
        "predicted": list(e.predicted.members),
        "rule": e.rule,
        "tick": e.tick,
    }


def episode_from_dict(d: Mapping) -> Episode:
    steps = tuple((SignalGroup.from_members(g), int(a)) for g, a in d["trace"])
    return Episode(int(d["id"]), TemporalPattern(steps), int(d["action"]),
                   SignalGroup.from_members(d["predicted"]), str(d["rule"]), int(d["tick"]))


def dumps_episodes(episodes: Iterable[Episode]) -> str:
    return "".join(json.dumps(episode_to_dict(e), separators=(",", ":")) + "\n" for e in episodes)


def loads_episodes(text: str) -> list[Episode]:
    out = [episode_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
    if [e.id for e in out] != list(range(len(out))):
        raise ValueError("episode ids must be dense and in order")
    return out
