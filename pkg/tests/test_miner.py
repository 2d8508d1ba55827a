from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import exhaustive_rules, frequent_groups, random_history, tally_groups
from roomagent.miner import (
    CooccurrenceStats, ExceptionRecord, Rule, RuleStatus, TemporalPattern, candidate_groups, define_objects,
    dumps_rules, loads_rules, matching_rules, mine_rules, observe, predict, record_outcome,
)
from roomagent.signals import SignalFrame, SignalGroup, mask_of

G = SignalGroup.of


def stats_of(history, max_size=4):
    st_ = CooccurrenceStats(max_size)
    for f, _ in history:
        observe(st_, f)
    return st_


def rule_table(rules):
    return {(tuple((g.mask, a) for g, a in r.condition.steps), r.consequent.mask): (r.support, r.hits) for r in rules}


def random_case(seed):
    rng = np.random.default_rng(10_000 + seed)
    n, A, T = int(rng.integers(3, 13)), int(rng.integers(1, 5)), int(rng.integers(2, 201))
    return random_history(seed, n, A, T, noise=0.03)


# -- binding ---------------------------------------------------------------------

def test_observe_counts_repeated_frames():
    st_ = CooccurrenceStats()
    for t in range(5):
        observe(st_, SignalFrame.external(t, [0, 1]))
    assert st_.count(G(0, 1)) == 5


def test_observe_empty_frame_changes_nothing():
    st_ = observe(CooccurrenceStats(), SignalFrame.external(0, []))
    assert not st_.external and not st_.recalled


def test_observe_increments_powerset():
    st_ = observe(CooccurrenceStats(), SignalFrame.external(0, [0, 1, 2]))
    assert set(st_.external) == {mask_of(s) for s in ([0], [1], [2], [0, 1], [0, 2], [1, 2], [0, 1, 2])}
    assert set(st_.external.values()) == {1}


def test_recalled_signals_stay_out_of_external_counts():
    st_ = observe(CooccurrenceStats(), SignalFrame.recalled(0, [0, 1]))
    assert not st_.external and st_.recalled[mask_of([0, 1])] == 1


@pytest.mark.parametrize("seed", range(20))
def test_counts_match_direct_tally(seed):
    h = random_history(seed, 10, 3, 80, noise=0.1)
    assert dict(stats_of(h).external) == tally_groups([f.mask for f, _ in h], 4)


@pytest.mark.parametrize("seed", range(20))
def test_candidates_match_brute_force(seed):
    h = random_history(seed, 10, 3, 80, noise=0.1)
    got = {g.mask for g in candidate_groups(stats_of(h), 3)}
    assert got == frequent_groups([f.mask for f, _ in h], 4, 3)


def test_football_pair_is_a_candidate(football_sim):
    w = football_sim.world
    ball = [(f, a) for f, a in football_sim.agent.history[:60] if f.mask & w.group("v1").mask][:20]
    assert len(ball) == 20
    assert w.group("v1", "v2") in candidate_groups(stats_of(ball), 3)


def test_s_min_beyond_trace_gives_nothing():
    h = random_history(1, 6, 2, 30)
    assert candidate_groups(stats_of(h), 31) == set()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_downward_closure(seed, s_min):
    h = random_history(seed, 8, 2, 40, noise=0.2)
    cands = {g.mask for g in candidate_groups(stats_of(h), s_min)}
    for m in cands:
        for i in range(m.bit_length()):
            sub = m & ~(1 << i)
            if m >> i & 1 and sub:
                assert sub in cands


# -- mining ----------------------------------------------------------------------

def test_oracle_equivalence_over_random_worlds():
    for seed in range(100):
        h = random_case(seed)
        cands = candidate_groups(stats_of(h), 3)
        got = rule_table(mine_rules(h, cands, 0.9, 3, window=2))
        assert got == exhaustive_rules(h, [g.mask for g in cands], 0.9, 3, window=2), seed


@pytest.mark.parametrize("theta,s_min,window", [(0.5, 2, 1), (0.75, 4, 2), (1.0, 3, 2), (0.1, 1, 1)])
def test_oracle_equivalence_across_thresholds(theta, s_min, window):
    for seed in range(15):
        h = random_history(seed, 7, 3, 60, noise=0.05)
        cands = candidate_groups(stats_of(h), s_min)
        got = rule_table(mine_rules(h, cands, theta, s_min, window=window))
        assert got == exhaustive_rules(h, [g.mask for g in cands], theta, s_min, window=window)


def test_mining_is_deterministic():
    h = random_history(3, 10, 3, 150)
    c = candidate_groups(stats_of(h), 3)
    assert dumps_rules(mine_rules(h, c, 0.9, 3)) == dumps_rules(mine_rules(h, list(c)[::-1], 0.9, 3))


def test_chain_rule(chain_sim):
    w = chain_sim.world
    rules = {(r.condition.steps, r.consequent): r for r in chain_sim.agent.rules}
    r = rules[(((w.group("s2"), w.action("A").index),), w.group("s1"))]
    assert r.confidence == 1.0 and r.active


def test_football_rule(football_sim):
    w = football_sim.agent
    world = football_sim.world
    key = (((world.group("v1", "v2"), world.action("touch").index),), world.group("t1"))
    r = {(r.condition.steps, r.consequent): r for r in w.rules}[key]
    assert r.confidence == 1.0 and r.support >= 3


def test_short_history_mines_nothing():
    assert mine_rules([(SignalFrame.external(0, [1]), None)], [G(1)], 0.9, 1) == []


# -- prediction and outcomes -------------------------------------------------------

def chain_rule():
    return Rule(TemporalPattern.single(G(1), 1), G(0), 3, 3)


def test_predict_chain(chain_sim):
    w = chain_sim.world
    window = [(SignalFrame.external(0, [w.signal("s2")]), None)]
    preds = predict(chain_sim.agent.rules, window, w.action("A").index)
    assert [(p.group, p.confidence) for p in preds][0] == (w.group("s1"), 1.0)


def test_predict_nothing_matches():
    assert predict([chain_rule()], [(SignalFrame.external(0, [5]), None)], 1) == []


def test_active_exception_suppresses_prediction():
    r = Rule(TemporalPattern.single(G(1), 1), G(0), 5, 4, exceptions=(ExceptionRecord(G(9), 2),))
    assert predict([r], [(SignalFrame.external(0, [1]), None)], 1)
    assert predict([r], [(SignalFrame.external(0, [1, 9]), None)], 1) == []
    weak = Rule(r.condition, r.consequent, 5, 4, exceptions=(ExceptionRecord(G(9), 1),))
    assert predict([weak], [(SignalFrame.external(0, [1, 9]), None)], 1)


def test_predict_ordering_is_by_confidence():
    a = Rule(TemporalPattern.single(G(1), 1), G(0), 10, 9)
    b = Rule(TemporalPattern.single(G(1), 1), G(2), 10, 10)
    assert [p.group for p in predict([a, b], [(SignalFrame.external(0, [1]), None)], 1)] == [G(2), G(0)]


def test_record_outcome_hit():
    r = record_outcome(chain_rule(), SignalFrame.external(0, [1]), SignalFrame.external(1, [0]))
    assert (r.support, r.hits, r.confidence) == (4, 4, 1.0)


def test_record_outcome_miss_records_surplus():
    r = record_outcome(chain_rule(), SignalFrame.external(0, [1, 9]), SignalFrame.external(1, []))
    assert r.exceptions == (ExceptionRecord(G(9), 1),)
    r = record_outcome(r, SignalFrame.external(2, [1, 9]), SignalFrame.external(3, []))
    assert r.exceptions == (ExceptionRecord(G(9), 2),)


def test_repeated_misses_quarantine():
    r = Rule(TemporalPattern.single(G(1), 1), G(0), 2, 2)
    for t in range(3):
        r = record_outcome(r, SignalFrame.external(t, [1]), SignalFrame.external(t + 1, []), theta_demote=0.5)
    assert r.confidence == pytest.approx(0.4) and r.status is RuleStatus.QUARANTINED
    assert matching_rules([r], [(SignalFrame.external(0, [1]), None)], 1) == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sets(st.integers(0, 5)), st.sets(st.integers(0, 5))), max_size=30),
       st.integers(1, 5), st.integers(0, 5))
def test_confidence_bounds_and_exception_soundness(outcomes, support, hits):
    hits = min(hits, support)
    r = Rule(TemporalPattern.single(G(1), 1), G(0), support, hits)
    misses = Counter()
    for t, (cur, nxt) in enumerate(outcomes):
        matched = SignalFrame.external(2 * t, cur | {1})
        r = record_outcome(r, matched, SignalFrame.external(2 * t + 1, nxt))
        assert 0 <= r.confidence <= 1 and r.hits <= r.support
        if 0 not in nxt and cur - {1}:
            misses[mask_of(cur - {1})] += 1
    assert {e.context.mask: e.misses for e in r.exceptions} == dict(misses)
    assert all(not e.context.mask & G(1).mask for e in r.exceptions)


# -- objects ----------------------------------------------------------------------

def test_football_object_is_labelled(football_sim):
    a = football_sim.agent
    w = football_sim.world
    labelled = {o.defining_group: o.label for o in a.objects}
    assert labelled.get(w.group("v1", "v2")) == w.signal("L_fb")
    assert all(not o.defining_group.mask & (w.group("L_fb").mask | 1 << w.recall_flag) for o in a.objects)
    assert all(o.relations for o in a.objects)


def test_rect_objects_and_relation(rect_sim):
    a, w = rect_sim.agent, rect_sim.world
    by_group = {o.defining_group: o for o in a.objects}
    r, q = by_group[w.group("r")], by_group[w.group("q")]
    assert (r.label, q.label) == (w.signal("L_rect"), w.signal("L_angle"))
    corner = w.action("mode:corner").index
    linking = [x for x in a.rules if x.id in r.relations and x.id in q.relations]
    assert any(x.action == corner and x.condition.final_group.mask & ~w.group("L_rect").mask == w.group("r").mask
               for x in linking)


def test_no_active_rules_no_objects():
    q = Rule(TemporalPattern.single(G(1), 1), G(0), 3, 0, status=RuleStatus.QUARANTINED)
    frames = [SignalFrame.external(0, [0, 1])]
    assert define_objects([], None, frames, recall_flag=7) == []
    assert define_objects([q], None, frames, recall_flag=7) == []


def test_rule_store_roundtrip(chain_sim):
    rules = chain_sim.agent.rules
    text = dumps_rules(rules)
    assert dumps_rules(loads_rules(text)) == text
    assert [r.id for r in loads_rules(text)] == [r.id for r in rules]
