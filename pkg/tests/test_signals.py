import pytest
from hypothesis import given, strategies as st

from roomagent.signals import (
    Channel, Provenance, SignalFrame, SignalGroup, Valence, ValenceClass, check_partition, frame_matches,
    group_project, group_subset, mask_of, members_of,
)

ids = st.sets(st.integers(0, 63), min_size=1, max_size=10)


def G(*xs):
    return SignalGroup.of(*xs)


def test_group_subset_examples():
    assert group_subset(G(3), G(3, 7))
    assert group_subset(G(3, 7), G(3, 7))
    assert not group_subset(G(1, 9), G(1, 2, 3))


def test_group_project_examples():
    vision = Channel.of("vision", range(5))
    assert group_project(G(1, 2, 9), vision) == G(1, 2)
    assert group_project(G(9), vision) is None


def test_frame_matches_examples():
    assert frame_matches(SignalFrame.external(0, [1, 2, 3]), G(2, 3))
    assert not frame_matches(SignalFrame.external(0, []), G(2))
    assert frame_matches(SignalFrame.external(0, [2]), G(2))


def test_group_rejects_empty():
    with pytest.raises(ValueError):
        SignalGroup(0)


@given(ids)
def test_canonical_equality(xs):
    order = sorted(xs)
    a = SignalGroup.from_members(order)
    b = SignalGroup.from_members(reversed(order))
    assert a == b and hash(a) == hash(b)
    assert a.members == tuple(order)


@given(st.lists(st.integers(1, 8), min_size=1, max_size=6), ids)
def test_projection_union_is_whole(sizes, xs):
    # build a partition of [0, n) from consecutive blocks
    n = sum(sizes)
    chans, start = [], 0
    for i, k in enumerate(sizes):
        chans.append(Channel.of(f"c{i}", range(start, start + k)))
        start += k
    check_partition(chans, n)
    g = SignalGroup.from_members(x % n for x in xs)
    parts = [p for p in (group_project(g, c) for c in chans) if p is not None]
    assert mask_of(s for p in parts for s in p) == g.mask
    assert all(group_subset(p, g) for p in parts)


def test_partition_violations():
    with pytest.raises(ValueError):
        check_partition([Channel.of("a", [0, 1]), Channel.of("b", [1, 2])], 3)
    with pytest.raises(ValueError):
        check_partition([Channel.of("a", [0])], 2)


@given(ids)
def test_provenance_totality(xs):
    m = mask_of(xs)
    prov = {i: Provenance.EXTERNAL for i in xs}
    assert SignalFrame(0, m, prov).active == frozenset(xs)
    missing = dict(prov)
    missing.pop(min(xs))
    with pytest.raises(ValueError):
        SignalFrame(0, m, missing)


def test_frame_provenance_helpers():
    f = SignalFrame.recalled(3, [1, 4])
    assert f.is_recall and f.recall_mask() == mask_of([1, 4]) and f.external_mask() == 0
    assert not SignalFrame.external(3, [1]).is_recall


@given(st.sampled_from(list(ValenceClass)), st.floats(0, 10, allow_nan=False))
def test_valence_invariant(cls, w):
    ok = (w > 0) == (cls is not ValenceClass.NEUTRAL)
    if ok:
        assert Valence(cls, w).weight == w
    else:
        with pytest.raises(ValueError):
            Valence(cls, w)


@given(st.integers(0, 2**64 - 1))
def test_mask_roundtrip(m):
    assert mask_of(members_of(m)) == m
