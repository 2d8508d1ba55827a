"""Experiment orchestration: run a scenario, mine, probe, judge, report."""

from __future__ import annotations

import json
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, TextIO

from .agent import Params
from .explorer import TaskOutcome, run_task
from .introspect import (
    CriterionReport, Stores, alignment_test, answer_line, audit_scenario, canonical, evaluate_criterion,
    iface_from_dict, label_fixing_permutations, transcript,
)
from .miner import CooccurrenceStats, candidate_groups, dumps_rules, mine_rules, observe
from .priority import dumps_priorities, mine_prioritized
from .signals import SignalFrame, members_of
from .simulation import Simulation
from .world import CANONICAL, World, load_bundled, load_scenario

OUT_ENV = "ROOMAGENT_OUT"

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2
EXIT_LOAD = 3
EXIT_QUERY = 4
EXIT_INTEGRITY = 5


class ConfigError(ValueError):
    pass


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "roomagent-out"))


def load_world(scenario: str | Path) -> World:
    """A bundled scenario name or a path to a scenario document."""
    s = str(scenario)
    if s in CANONICAL or s == "adversarial_recall_flag":
        return load_bundled(s)
    return load_scenario(Path(s))


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    seed: int
    ticks: int = 200
    params: Params = field(default_factory=Params)
    out: Path | None = None
    gated: tuple[str, ...] = ()
    randomize_recall: bool = False
    run_tasks: bool = True

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise ConfigError("a seed is required")
        if self.ticks < 0:
            raise ConfigError("ticks must be >= 0")


@dataclass
class RunMetrics:
    frames: list[dict] = field(default_factory=list)
    rule_counts: list[tuple[int, int]] = field(default_factory=list)
    stores: Stores | None = None
    priorities: str = ""
    tasks: list[TaskOutcome] = field(default_factory=list)
    transcript: str = ""
    names: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def rules(self):
        return self.stores.rules if self.stores else []

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "frames.jsonl": "".join(canonical(f) + "\n" for f in self.frames),
            "priorities.jsonl": self.priorities,
            "tasks.jsonl": "".join(canonical(_task_dict(t)) + "\n" for t in self.tasks),
            "transcript.jsonl": self.transcript,
            "summary.json": canonical(self.summary) + "\n",
        }
        for name, text in files.items():
            _atomic(out / name, text)
        if self.stores is not None:
            self.stores.dump(out)
        else:
            for name in ("rules.jsonl", "objects.jsonl", "episodes.jsonl", "recall_objects.jsonl"):
                _atomic(out / name, "")


def _atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _task_dict(t: TaskOutcome) -> dict:
    return {"task": t.task, "success": t.success, "ticks": t.ticks, "mode_switches": t.mode_switches,
            "actions": list(t.actions)}


def simulate(world: World, cfg: RunConfig) -> tuple[Simulation, list[TaskOutcome]]:
    """Train, run the scenario's tasks, then reflect (recall and re-mine)."""
    sim = Simulation(world, cfg.params, cfg.seed, cfg.gated)
    if cfg.randomize_recall:
        sim.agent.episodes.scramble = random.Random(cfg.seed)
    sim.train(cfg.ticks)
    outcomes = [run_task(sim, t) for t in world.tasks] if cfg.run_tasks else []
    sim.reflect()
    return sim, outcomes


def cmd_run(cfg: RunConfig, world: World | None = None) -> RunMetrics:
    world = world or load_world(cfg.scenario)
    m = RunMetrics(names=world.name_table())
    if cfg.ticks > 0:
        sim, m.tasks = simulate(world, cfg)
        agent = sim.agent
        m.frames = [_frame_dict(f, a, agent.iface) for f, a in agent.history]
        m.rule_counts = list(agent.rule_counts)
        m.stores = Stores.from_agent(agent)
        m.priorities = dumps_priorities(agent.priorities, world.signal_names)
        m.transcript = transcript(m.stores)
    s = m.stores
    m.summary = {
        "scenario": world.name,
        "seed": cfg.seed,
        "ticks": cfg.ticks,
        "params": _params_dict(cfg.params),
        "gated": list(cfg.gated),
        "frames": len(m.frames),
        "rules": len(s.rules) if s else 0,
        "objects": len(s.objects) if s else 0,
        "episodes": len(s.episodes) if s else 0,
        "recall_objects": len(s.recall_objects) if s else 0,
        "integrity_error": s.integrity_error if s else None,
        "rule_counts": [list(x) for x in m.rule_counts],
        "tasks": [_task_dict(t) for t in m.tasks],
        "names": m.names,
    }
    if cfg.out is not None:
        m.write(Path(cfg.out))
    return m


def _frame_dict(f: SignalFrame, action: int | None, iface) -> dict:
    return {"tick": f.tick, "active": list(members_of(f.mask)), "recall": f.is_recall,
            "action": None if action is None else iface.action_name(action)}


def _params_dict(p: Params) -> dict:
    return {"W": p.window, "G": p.group_size, "theta_conf": p.theta_conf, "theta_demote": p.theta_demote,
            "theta_explore": p.theta_explore, "s_min": p.s_min, "x_min": p.x_min, "gamma": p.gamma,
            "budget": p.budget, "mine_every": p.mine_every}


# -- mine ------------------------------------------------------------------------


def read_history(run_dir: Path) -> tuple[list[tuple[SignalFrame, int | None]], object]:
    iface = iface_from_dict(json.loads((run_dir / "interface.json").read_text()))
    by_name = {a.name: a.index for a in iface.actions}
    history = []
    for line in (run_dir / "frames.jsonl").read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        make = SignalFrame.recalled if d["recall"] else SignalFrame.external
        a = d["action"]
        if a is not None:
            a = by_name[a] if a in by_name else iface.recall_action(int(a.split(":")[1])).index
        history.append((make(d["tick"], d["active"]), a))
    return history, iface


def cmd_mine(run_dir: Path, params: Params) -> tuple[str, dict]:
    """Re-mine a recorded run.  With a budget, discovery is priority-ordered."""
    history, iface = read_history(run_dir)
    stats = CooccurrenceStats(params.group_size)
    for f, _ in history:
        observe(stats, f)
    info: dict = {"frames": len(history)}
    if len(history) < 2:
        return "", {**info, "rules": 0}
    if params.budget:
        d = mine_prioritized(history, stats, iface.valences, budget=params.budget, theta_conf=params.theta_conf,
                             s_min=params.s_min, gamma=params.gamma, window=params.window)
        rules = d.rules
        info["passes"] = [[list(g.members) for g in p] for p in d.passes]
    else:
        rules = mine_rules(history, candidate_groups(stats, params.s_min), params.theta_conf, params.s_min,
                           window=params.window)
    info["rules"] = len(rules)
    return dumps_rules(rules), info


# -- probe -----------------------------------------------------------------------


def cmd_probe(stores_dir: Path, queries: Iterable[str], out: TextIO) -> int:
    stores = Stores.load(stores_dir)
    code = EXIT_OK
    for line in queries:
        if not line.strip():
            continue
        tag, text = answer_line(stores, line)
        out.write(text + "\n")
        if tag != "ok":
            code = EXIT_QUERY
    return code


# -- criterion -------------------------------------------------------------------


def _run_b(args) -> Stores:
    world, perm, cfg = args
    sim, _ = simulate(world.permuted(perm), cfg)
    return Stores.from_agent(sim.agent)


def cmd_criterion(cfg: RunConfig, permutations: int = 5, jobs: int = 1,
                  world: World | None = None) -> tuple[CriterionReport, dict]:
    if permutations < 1:
        raise ConfigError("at least one permutation is needed to test ineffability")
    world = world or load_world(cfg.scenario)
    if not world.label_channel:
        raise ConfigError(f"scenario {world.name!r} has no label channel")
    leaks = audit_scenario(world.document)
    if leaks:
        raise ConfigError(f"scenario document mentions probe content: {', '.join(leaks)}")
    cfg = replace(cfg, run_tasks=False)
    sim, _ = simulate(world, cfg)
    a = Stores.from_agent(sim.agent)
    iface = sim.agent.iface
    perms = label_fixing_permutations(iface, permutations, cfg.seed,
                                      [q.defining_group.mask for q in a.recall_objects])
    jobs_in = [(world, p, cfg) for p in perms]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            bs = list(ex.map(_run_b, jobs_in))
    else:
        bs = [_run_b(j) for j in jobs_in]
    alignments = [alignment_test(a, b, p) for b, p in zip(bs, perms)]
    report = evaluate_criterion(a, alignments)
    details = {
        "report": report.to_dict(),
        "permutations": [[[k, v] for k, v in sorted(p.items()) if k != v] for p in perms],
        "alignments": [{"relation_isomorphic": r.relation_isomorphic,
                        "recall_internal_identifiable": r.recall_internal_identifiable,
                        "object_map": [[k, v] for k, v in sorted(r.object_map.items())]} for r in alignments],
        "recall_groups_b": [[list(q.defining_group.members) for q in b.recall_objects] for b in bs],
        "transcript_a": transcript(a),
    }
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _atomic(out / "criterion.json", canonical(details["report"]) + "\n")
        _atomic(out / "alignment.jsonl", "".join(canonical(x) + "\n" for x in details["alignments"]))
        _atomic(out / "transcript.jsonl", details["transcript_a"])
    return report, details


def criterion_exit(report: CriterionReport) -> int:
    if report.passed:
        return EXIT_OK
    if any(r.startswith("integrity fault") for r in report.reasons):
        return EXIT_INTEGRITY
    return EXIT_CRITERION


# -- report ----------------------------------------------------------------------


def cmd_report(run_dir: Path, out: Path | None = None) -> list[Path]:
    from .plotting import plot_priorities, plot_rule_counts

    out = out or run_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = json.loads((run_dir / "summary.json").read_text())
    pri = [json.loads(x) for x in (run_dir / "priorities.jsonl").read_text().splitlines() if x.strip()]
    paths = [plot_rule_counts(summary.get("rule_counts", []), out / "rule_counts.png", summary.get("scenario", "")),
             plot_priorities(pri, out / "priorities.png", summary.get("scenario", ""))]
    if out != run_dir:
        _atomic(out / "priorities.jsonl", "".join(canonical(p) + "\n" for p in pri))
    return paths
