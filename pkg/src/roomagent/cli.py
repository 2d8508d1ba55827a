"""Command line entry point: ``roomagent {run,mine,probe,criterion,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agent import Params
from .harness import (
    EXIT_CONFIG, EXIT_CRITERION, EXIT_INTEGRITY, EXIT_LOAD, EXIT_OK, EXIT_QUERY, OUT_ENV, ConfigError, RunConfig,
    cmd_criterion, cmd_mine, cmd_probe, cmd_report, cmd_run, criterion_exit, default_out, load_world,
)
from .introspect import canonical
from .world import ScenarioError

EPILOG = f"""\
exit codes:
  {EXIT_OK}  success
  {EXIT_CRITERION}  criterion evaluated and failed
  {EXIT_CONFIG}  configuration or usage error
  {EXIT_LOAD}  scenario or store failed to load
  {EXIT_QUERY}  probe transcript contains query faults or malformed queries
  {EXIT_INTEGRITY}  recall integrity fault (criterion)

environment:
  {OUT_ENV}  default output directory (default: ./roomagent-out)
"""


def _params_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("parameters")
    g.add_argument("--window", "-W", type=int, default=2, help="condition steps, 1..4 (default 2)")
    g.add_argument("--group-size", "-G", type=int, default=4, help="largest bound group, 1..8 (default 4)")
    g.add_argument("--theta-conf", type=float, default=0.9, help="rule confidence, (0,1] (default 0.9)")
    g.add_argument("--theta-demote", type=float, default=0.5, help="quarantine below, (0,theta-conf] (default 0.5)")
    g.add_argument("--theta-explore", type=float, default=0.1, help="hypothesis confidence (default 0.1)")
    g.add_argument("--s-min", type=int, default=3, help="minimum support, >=1 (default 3)")
    g.add_argument("--x-min", type=int, default=2, help="misses before an exception applies (default 2)")
    g.add_argument("--gamma", type=float, default=0.9, help="priority decay, (0,1) (default 0.9)")
    g.add_argument("--budget", "-B", type=int, default=None, help="candidates expanded per mining pass")
    g.add_argument("--mine-every", type=int, default=25, help="mining interval in ticks (default 25)")
    g.add_argument("--no-recall", action="store_true", help="ablation: skip recall after training")


def _params(ns: argparse.Namespace) -> Params:
    return Params(window=ns.window, group_size=ns.group_size, theta_conf=ns.theta_conf,
                  theta_demote=ns.theta_demote, theta_explore=ns.theta_explore, s_min=ns.s_min, x_min=ns.x_min,
                  gamma=ns.gamma, budget=ns.budget, mine_every=ns.mine_every, no_recall=ns.no_recall)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roomagent", description=__doc__, epilog=EPILOG,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, description=help, epilog=EPILOG,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    run = add("run", "run a scenario and write metrics")
    run.add_argument("scenario", help="bundled scenario name or path to a scenario document")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--ticks", type=int, default=200)
    run.add_argument("--out", type=Path, default=None)
    run.add_argument("--gate", action="append", default=[], metavar="CHANNEL", help="exclude a channel from episodes")
    run.add_argument("--randomize-recall", action="store_true", help="ablation: recall returns a random episode")
    _params_args(run)

    mine = add("mine", "re-mine rules from a recorded run directory")
    mine.add_argument("run_dir", type=Path)
    mine.add_argument("--out", type=Path, default=None, help="rules file (default: stdout)")
    _params_args(mine)

    probe = add("probe", "answer JSON-lines probe queries from a run's stores")
    probe.add_argument("stores", type=Path, help="run directory holding the dumped stores")
    probe.add_argument("--queries", type=Path, default=None, help="query file (default: stdin)")

    crit = add("criterion", "run agent A and permuted agents B, then judge the four properties")
    crit.add_argument("scenario")
    crit.add_argument("--seed", type=int, required=True)
    crit.add_argument("--ticks", type=int, default=140)
    crit.add_argument("--permutations", type=int, default=5)
    crit.add_argument("--jobs", type=int, default=1)
    crit.add_argument("--out", type=Path, default=None)
    crit.add_argument("--randomize-recall", action="store_true")
    _params_args(crit)

    rep = add("report", "render figures from a run directory")
    rep.add_argument("run_dir", type=Path)
    rep.add_argument("--out", type=Path, default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        return _dispatch(ns)
    except ConfigError as e:
        print(f"roomagent: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError, KeyError) as e:
        print(f"roomagent: load error: {e}", file=sys.stderr)
        return EXIT_LOAD
    except ValueError as e:
        print(f"roomagent: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(ns: argparse.Namespace) -> int:
    if ns.command == "run":
        out = ns.out or default_out()
        world = load_world(ns.scenario)
        cfg = RunConfig(ns.scenario, ns.seed, ns.ticks, _params(ns), out, tuple(ns.gate), ns.randomize_recall)
        m = cmd_run(cfg, world)
        print(canonical({"out": str(out), "rules": m.summary["rules"], "recall_objects": m.summary["recall_objects"]}))
        return EXIT_OK
    if ns.command == "mine":
        text, info = cmd_mine(ns.run_dir, _params(ns))
        if ns.out:
            ns.out.write_text(text)
            print(canonical(info))
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if ns.command == "probe":
        if not (ns.stores / "rules.jsonl").exists():
            raise FileNotFoundError(f"no stores in {ns.stores}")
        src = ns.queries.open() if ns.queries else sys.stdin
        try:
            return cmd_probe(ns.stores, src, sys.stdout)
        finally:
            if ns.queries:
                src.close()
    if ns.command == "criterion":
        world = load_world(ns.scenario)
        cfg = RunConfig(ns.scenario, ns.seed, ns.ticks, _params(ns), ns.out or default_out(),
                        randomize_recall=ns.randomize_recall)
        report, _ = cmd_criterion(cfg, ns.permutations, ns.jobs, world)
        print(canonical(report.to_dict()))
        return criterion_exit(report)
    if ns.command == "report":
        for p in cmd_report(ns.run_dir, ns.out):
            print(p)
        return EXIT_OK
    raise ConfigError(f"unknown command {ns.command}")

