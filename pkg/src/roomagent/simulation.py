"""Couples one World to one Agent.  Only this driver ever touches hidden state."""

from __future__ import annotations

from dataclasses import dataclass, field

from .agent import Agent, Params
from .episodes import Gate, set_gate
from .signals import ActionKind, SignalFrame
from .world import World, WorldCursor, advance, emit, initial_frame, step


@dataclass
class Simulation:
    world: World
    params: Params = field(default_factory=Params)
    seed: int | None = None
    gated: tuple[str, ...] = ()

    def __post_init__(self):
        seed = self.world.seed if self.seed is None else self.seed
        self.agent = Agent(self.world.interface(), self.params, seed)
        for ch in self.gated:
            set_gate(self.agent.episodes, ch, Gate.GATED)
        self.cursor, frame = initial_frame(self.world)
        self.agent.perceive(frame)
        self.frames: list[SignalFrame] = [frame]
        self.actions: list[int] = []
        self._script_pos = 0

    def press(self, action: int) -> SignalFrame:
        act = self.agent.iface.action(action)
        self.agent.commit(action)
        if act.kind is ActionKind.RECALL:
            self.cursor = advance(self.cursor, self.world, self.world.actions[0])
            frame = self.agent.recall_frame(act.target, self.cursor.tick)
        else:
            self.cursor, frame = step(self.cursor, self.world, act)
            if self.world.strict:
                assert not frame.mask >> self.world.recall_flag & 1, "world emitted the recall flag"
        self.agent.perceive(frame)
        self.frames.append(frame)
        self.actions.append(action)
        return frame

    def reset(self, state: str) -> SignalFrame:
        """Teleport the world (a new trial).  The agent just sees a new frame."""
        self.cursor = WorldCursor(self.world.state(state), self.cursor.tick + 1, 0)
        self.agent.mode = 0
        frame = SignalFrame.external(self.cursor.tick, self._emission())
        self.agent.perceive(frame)
        self.frames.append(frame)
        return frame

    def _emission(self) -> int:
        return emit(self.world, self.cursor.state, self.cursor.mode, self.cursor.tick)

    def next_training_action(self) -> int:
        if self.world.script:
            a = self.world.script[self._script_pos % len(self.world.script)]
            self._script_pos += 1
            return a
        return self.agent.novelty_action()

    def train(self, ticks: int) -> None:
        """Scripted (or novelty-driven) experience, mining every ``mine_every`` ticks."""
        for t in range(1, ticks + 1):
            self.press(self.next_training_action())
            if t % self.params.mine_every == 0:
                self.agent.mine()
        if ticks % self.params.mine_every:
            self.agent.mine()

    def reflect(self) -> list[int]:
        """Recall one episode per distinct fired rule, each several times in a row,
        then mine again so the recall rules are learned.  Returns the episode ids."""
        if self.params.no_recall:
            return []
        chosen, seen = [], set()
        for ep in self.agent.episodes.episodes:
            if ep.rule not in seen:
                seen.add(ep.rule)
                chosen.append(ep.id)
        chosen = chosen[: self.params.reflect_limit]
        iface = self.agent.iface
        for k in chosen:
            for _ in range(self.params.n_recalls):
                self.press(iface.recall_action(k).index)
        self.agent.mine()
        return chosen
