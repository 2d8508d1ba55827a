"""Value types for signals, groups, frames, actions and valence.

Signal sets are stored as integer bitmasks; every public type also exposes the
members as sorted tuples so callers never need to touch the bits directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import Iterable, Iterator, Mapping

RECALL_CHANNEL = "internal"
RECALL_FLAG_NAME = "R"


def mask_of(ids: Iterable[int]) -> int:
    m = 0
    for i in ids:
        if i < 0:
            raise ValueError(f"signal ids are non-negative, got {i}")
        m |= 1 << i
    return m


def members_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


class Provenance(Enum):
    EXTERNAL = "External"
    RECALL = "Recall"


class ActionKind(Enum):
    NOOP = "NoOp"
    MOTOR = "Motor"
    MODE_SWITCH = "ModeSwitch"
    RECALL = "RecallButton"


class ValenceClass(Enum):
    BENEFICIAL = "Beneficial"
    HARMFUL = "Harmful"
    NEUTRAL = "Neutral"


@dataclass(frozen=True, order=True)
class SignalGroup:
    """A nonempty, canonically ordered set of signal ids."""

    mask: int

    def __post_init__(self):
        if self.mask <= 0:
            raise ValueError("a SignalGroup must be nonempty")

    @classmethod
    def of(cls, *ids: int) -> "SignalGroup":
        return cls(mask_of(ids))

    @classmethod
    def from_members(cls, ids: Iterable[int]) -> "SignalGroup":
        return cls(mask_of(ids))

    @cached_property
    def members(self) -> tuple[int, ...]:
        return members_of(self.mask)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __len__(self) -> int:
        return popcount(self.mask)

    def __contains__(self, s: object) -> bool:
        return isinstance(s, int) and s >= 0 and bool(self.mask >> s & 1)

    def key(self) -> tuple[int, ...]:
        """Canonical encoding used for lexicographic tie-breaks."""
        return self.members

    def __repr__(self) -> str:
        return "{" + ",".join(map(str, self.members)) + "}"


@dataclass(frozen=True)
class Channel:
    name: str
    mask: int

    @classmethod
    def of(cls, name: str, ids: Iterable[int]) -> "Channel":
        return cls(name, mask_of(ids))

    @property
    def members(self) -> tuple[int, ...]:
        return members_of(self.mask)


@dataclass(frozen=True)
class Valence:
    cls: ValenceClass = ValenceClass.NEUTRAL
    weight: float = 0.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("valence weight must be non-negative")
        if (self.weight > 0) != (self.cls is not ValenceClass.NEUTRAL):
            raise ValueError("weight > 0 iff class is not Neutral")


NEUTRAL = Valence()


@dataclass(frozen=True)
class Action:
    """A button.  ``target`` is the mode index or episode id for mode-switch
    and recall buttons; ``None`` otherwise."""

    index: int
    kind: ActionKind
    name: str
    target: int | None = None


@dataclass(frozen=True)
class SignalFrame:
    """The lit lights at one tick.

    ``provenance`` must name every active id, and nothing else.
    """

    tick: int
    mask: int
    provenance: Mapping[int, Provenance] = field(compare=False, hash=False)

    def __post_init__(self):
        if self.tick < 0:
            raise ValueError("tick must be non-negative")
        if set(self.provenance) != set(members_of(self.mask)):
            raise ValueError("every active signal needs exactly one provenance entry")

    @classmethod
    def external(cls, tick: int, ids: Iterable[int] | int) -> "SignalFrame":
        m = ids if isinstance(ids, int) else mask_of(ids)
        return cls(tick, m, {i: Provenance.EXTERNAL for i in members_of(m)})

    @classmethod
    def recalled(cls, tick: int, ids: Iterable[int] | int) -> "SignalFrame":
        m = ids if isinstance(ids, int) else mask_of(ids)
        return cls(tick, m, {i: Provenance.RECALL for i in members_of(m)})

    @property
    def active(self) -> frozenset[int]:
        return frozenset(members_of(self.mask))

    @property
    def is_recall(self) -> bool:
        return any(p is Provenance.RECALL for p in self.provenance.values())

    def external_mask(self) -> int:
        return mask_of(i for i, p in self.provenance.items() if p is Provenance.EXTERNAL)

    def recall_mask(self) -> int:
        return mask_of(i for i, p in self.provenance.items() if p is Provenance.RECALL)

    def same_content(self, other: "SignalFrame") -> bool:
        return self.mask == other.mask and dict(self.provenance) == dict(other.provenance)


def group_subset(a: SignalGroup, b: SignalGroup) -> bool:
    return a.mask & ~b.mask == 0


def group_project(g: SignalGroup, c: Channel) -> SignalGroup | None:
    """Part of ``g`` carried by channel ``c``; ``None`` when they are disjoint."""
    m = g.mask & c.mask
    return SignalGroup(m) if m else None


def frame_matches(frame: SignalFrame, g: SignalGroup) -> bool:
    return g.mask & ~frame.mask == 0


def check_partition(channels: Iterable[Channel], n_signals: int) -> None:
    """Raise ValueError unless the channels partition ``range(n_signals)``."""
    seen = 0
    for ch in channels:
        if ch.mask & seen:
            dup = members_of(ch.mask & seen)
            raise ValueError(f"signals {list(dup)} belong to more than one channel")
        seen |= ch.mask
    full = (1 << n_signals) - 1
    if seen != full:
        missing = members_of(full & ~seen)
        extra = members_of(seen & ~full)
        raise ValueError(f"channels do not partition the array (missing {list(missing)}, out of range {list(extra)})")


@dataclass(frozen=True)
class TaskSpec:
    """A goal: succeed once any target group is observed within ``budget`` ticks.

    ``start`` optionally names the world state the task begins in; it is read
    only by the simulation driver, never by the agent.
    """

    name: str
    targets: tuple[SignalGroup, ...]
    budget: int = 20
    start: str | None = None

    def satisfied_by(self, frame: SignalFrame) -> bool:
        return any(frame_matches(frame, g) for g in self.targets)

    @property
    def target_mask(self) -> int:
        m = 0
        for g in self.targets:
            m |= g.mask
        return m


@dataclass(frozen=True)
class AgentInterface:
    """Everything the agent may know about its body: the light array, its
    channels, the buttons and the innate valences.  Never the hidden state."""

    n_signals: int
    channels: tuple[Channel, ...]
    actions: tuple[Action, ...]
    valences: Mapping[int, Valence]
    label_channel: str | None
    signal_names: tuple[str, ...]

    @property
    def recall_flag(self) -> int:
        return self.n_signals - 1

    @property
    def label_mask(self) -> int:
        for ch in self.channels:
            if ch.name == self.label_channel:
                return ch.mask
        return 0

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(f"unknown channel {name!r}")

    @property
    def noop(self) -> Action:
        return self.actions[0]

    @property
    def motor_actions(self) -> tuple[Action, ...]:
        return tuple(a for a in self.actions if a.kind is ActionKind.MOTOR)

    @property
    def mode_actions(self) -> tuple[Action, ...]:
        return tuple(a for a in self.actions if a.kind is ActionKind.MODE_SWITCH)

    def recall_action(self, episode_id: int) -> Action:
        """Recall buttons sit in a contiguous range above every world button."""
        return Action(len(self.actions) + episode_id, ActionKind.RECALL, f"recall:{episode_id}", episode_id)

    def action(self, index: int) -> Action:
        if 0 <= index < len(self.actions):
            return self.actions[index]
        if index >= len(self.actions):
            return self.recall_action(index - len(self.actions))
        raise ValueError(f"unknown action id {index}")

    def action_name(self, index: int) -> str:
        return self.action(index).name
