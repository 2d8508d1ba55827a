import ast
import copy
import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from roomagent.signals import ValenceClass
from roomagent.world import (
    CANONICAL, ScenarioError, TotalityError, initial_frame, load_bundled, load_scenario, scenario_path, step,
    valence_of,
)

SRC = Path(__file__).resolve().parents[1] / "src" / "roomagent"


def doc(name):
    return json.loads(scenario_path(name).read_text())


def test_football_loads():
    w = load_bundled("football")
    assert w.signal_names == ("v1", "v2", "t1", "L_fb", "R")
    assert [a.name for a in w.actions] == ["noop", "touch"]
    assert len(w.modes) == 1
    assert w.recall_flag == w.n_signals - 1 == w.signal("R")


@pytest.mark.parametrize("name", CANONICAL)
def test_loading_is_bit_exact(name):
    a, b = load_bundled(name), load_bundled(name)
    assert a.signal_names == b.signal_names and a.transitions == b.transitions and a.emissions == b.emissions
    assert a.name_table() == b.name_table()


def test_missing_transition_is_a_totality_error():
    d = doc("football")
    del d["transitions"]["ball"]["touch"]
    with pytest.raises(TotalityError) as e:
        load_scenario(d)
    assert ("ball", "touch") in e.value.missing


def test_missing_emission_is_rejected():
    d = doc("football")
    del d["emissions"]["ball"]
    with pytest.raises(ScenarioError):
        load_scenario(d)


def test_empty_document_is_a_schema_error():
    with pytest.raises(ScenarioError):
        load_scenario({})


def test_schema_error_names_the_key():
    d = doc("football")
    d["seed"] = "seven"
    with pytest.raises(ScenarioError) as e:
        load_scenario(d)
    assert "seed" in e.value.key


def test_external_recall_flag_is_rejected_unless_marked():
    d = doc("football")
    d["emissions"]["ball"] = d["emissions"]["ball"] + ["R"]
    with pytest.raises(ScenarioError):
        load_scenario(d)
    adv = load_bundled("adversarial_recall_flag")
    assert not adv.strict


def test_football_touch_reveals_t1():
    w = load_bundled("football")
    c = w.cursor("ball")
    _, f = step(c, w, w.action("touch"))
    assert {w.signal(n) for n in ("v1", "v2", "t1")} <= f.active


def test_chain_step_lights_s1():
    w = load_bundled("valence_chain")
    _, f = step(w.cursor("s2_on"), w, w.action("A"))
    assert f.active == {w.signal("s1")}
    assert valence_of(w, w.signal("s1")).cls is ValenceClass.BENEFICIAL


@pytest.mark.parametrize("name", CANONICAL)
def test_noop_is_deterministic(name):
    w = load_bundled(name)
    for s in range(len(w.states)):
        c = w.cursor(s)
        a, fa = step(c, w, 0)
        b, fb = step(c, w, 0)
        assert a == b and fa.same_content(fb)


def test_valence_defaults():
    w = load_bundled("valence_chain")
    assert valence_of(w, w.recall_flag).cls is ValenceClass.NEUTRAL
    assert valence_of(w, w.signal("d1")).weight == 0
    with pytest.raises(ValueError):
        valence_of(w, w.n_signals)


def test_step_rejects_unknown_action():
    w = load_bundled("football")
    with pytest.raises(ValueError):
        step(w.cursor(), w, len(w.actions))


def test_mode_switch_consumes_the_tick():
    w = load_bundled("rect")
    c = w.cursor("rect")
    c2, f = step(c, w, w.action("mode:corner"))
    assert c2.tick == c.tick + 1 and c2.mode == 1
    assert c2.state == w.transitions[(c.state, 0)]
    assert f.active == {w.signal("q"), w.signal("L_angle")}


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(CANONICAL), st.lists(st.integers(0, 20), max_size=40))
def test_replay_and_flag_isolation(name, presses):
    w = load_bundled(name)

    def run():
        c, f = initial_frame(w)
        out = [f]
        for p in presses:
            c, f = step(c, w, p % len(w.actions))
            out.append(f)
        return out

    a, b = run(), run()
    assert [f.mask for f in a] == [f.mask for f in b]
    assert all(not f.mask >> w.recall_flag & 1 for f in a)
    assert [f.tick for f in a] == list(range(len(a)))
    assert all(not f.is_recall for f in a)


def test_permuted_world_is_the_same_machine():
    w = load_bundled("football")
    perm = {0: 2, 2: 0}
    p = w.permuted(perm)
    assert p.signal_names == ("t1", "v2", "v1", "L_fb", "R")
    c = w.cursor("ball")
    _, f = step(c, w, 1)
    _, g = step(c, p, 1)
    assert p.names(g.mask) == sorted(w.names(f.mask), key=p.signal)


def test_with_transition_changes_one_entry():
    w = load_bundled("valence_chain")
    w2 = w.with_transition("s2_on", "A", "s2_on")
    diff = {k for k in w.transitions if w.transitions[k] != w2.transitions[k]}
    assert diff == {(w.state("s2_on"), w.action("A").index)}


AGENT_SIDE = ["agent.py", "miner.py", "priority.py", "episodes.py", "explorer.py", "introspect.py", "signals.py"]


@pytest.mark.parametrize("module", AGENT_SIDE)
def test_agent_modules_never_import_the_world(module):
    """Hidden state stays hidden: agent-side code may not import world or
    simulation except for type checking."""
    tree = ast.parse((SRC / module).read_text())
    guarded = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.If) and "TYPE_CHECKING" in ast.dump(node.test):
            guarded.update(id(n) for n in ast.walk(node))
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and id(node) not in guarded:
            assert node.module not in ("world", "simulation"), f"{module} imports {node.module}"
            assert "StateId" not in {a.name for a in node.names}
