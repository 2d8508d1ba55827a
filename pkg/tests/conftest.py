"""Shared fixtures.  Trained simulations are session-scoped: they are pure
functions of (scenario, params, seed), so sharing them is safe as long as
tests that drive them further work on their own copies."""

from __future__ import annotations

import pytest

from roomagent.agent import Params
from roomagent.simulation import Simulation
from roomagent.world import load_bundled

# one training pass over every search trial: 9 presses per trial, 17 trials
SEARCH_TICKS = 9 * 17


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Record a PASS/FAIL line for the terminal summary (and print it)."""
    def log(n: int, title: str, ok: bool, seconds: float, limit: float):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.2f}s, limit {limit:g}s)"
        request.config._acceptance_lines.append(line)
        print(line)
    return log


def trained(name: str, ticks: int, **params) -> Simulation:
    sim = Simulation(load_bundled(name), Params(**params))
    sim.train(ticks)
    return sim


@pytest.fixture(scope="session")
def football_sim():
    return trained("football", 60)


@pytest.fixture(scope="session")
def rect_sim():
    return trained("rect", 60)


@pytest.fixture(scope="session")
def chain_sim():
    return trained("valence_chain", 70)


def search_sim() -> Simulation:
    return trained("search_tf", SEARCH_TICKS, mine_every=1000)


@pytest.fixture(scope="session")
def composite_sim():
    sim = trained("composite", 140)
    sim.reflect()
    return sim
