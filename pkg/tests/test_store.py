import pytest
from hypothesis import given, strategies as st

from atroforge.dsl.ast import ALIVE
from atroforge.store import (
    ABSENT, DatabaseState, Event, RecordId, StoreError, alive_records,
    dump_events, enumerate_local_views, field_value, groups, is_local_view,
    reconstruct_field,
)
from strategies import CATALOG, event_lists, states

R = RecordId("A", (1,))


def state_of(events, vis=(), cnt=None):
    cnt = max((e.tau for e in events), default=-1) + 1 if cnt is None else cnt
    return DatabaseState.from_pairs(events, vis, cnt, CATALOG)


def wr(tau, f, v, r=R, txn="t0"):
    return Event("wr", tau, r, f, v, txn, "c")


def test_latest_write_wins():
    s = state_of([wr(1, "b", 5), wr(4, "b", 9)])
    assert reconstruct_field(s, R, "b") == 9


def test_unwritten_is_absent_and_alive_false():
    s = state_of([])
    assert reconstruct_field(s, R, "b") is ABSENT
    assert reconstruct_field(s, R, ALIVE) is False
    assert alive_records(s, "A") == []


def test_alive_and_pk_values():
    s = state_of([wr(2, ALIVE, True)])
    assert alive_records(s, "A") == [R]
    assert field_value(s, R, "a") == 1
    s = state_of([wr(2, ALIVE, True), wr(3, ALIVE, False)])
    assert alive_records(s, "A") == []


def test_conflicting_same_timestamp_writes():
    s = state_of([wr(1, "b", 5, txn="t0"), wr(1, "b", 6, txn="t1")])
    with pytest.raises(StoreError):
        reconstruct_field(s, R, "b")


def _scan(events, r, f):
    best = None
    for e in events:
        if e.kind == "wr" and e.r == r and e.f == f and (best is None or e.tau > best.tau):
            best = e
    if best is None:
        return False if f == ALIVE else ABSENT
    return best.value


@given(event_lists(max_events=50))
def test_reconstruct_matches_linear_scan(events):
    s = state_of(events)
    for name, schema in CATALOG.schemas.items():
        for r in CATALOG.record_ids(name):
            for f in schema.nonpk + (ALIVE,):
                assert reconstruct_field(s, r, f) == _scan(events, r, f)


@given(event_lists(max_events=30), event_lists(max_events=10, max_tau=3))
def test_monotone_below_previous_cnt(events, extra):
    s = state_of(events)
    # later events on untouched (record, field) pairs leave old values alone
    later = [Event(e.kind, e.tau + s.cnt, e.r, e.f, e.value, e.txn, e.cmd) for e in extra]
    touched = {(e.r, e.f) for e in later if e.kind == "wr"}
    s2 = state_of(events + later)
    for name, schema in CATALOG.schemas.items():
        for r in CATALOG.record_ids(name):
            for f in schema.nonpk:
                if (r, f) not in touched:
                    assert reconstruct_field(s2, r, f) == reconstruct_field(s, r, f)


def test_local_view_examples():
    a, b = wr(1, "b", 5), wr(1, "c", 6)
    other = wr(2, "b", 7, r=RecordId("A", (2,)))
    parent = state_of([a, b, other], vis=[(a, other), (b, other)])
    assert is_local_view(parent.restrict(parent.events), parent)
    # one of two same-(record, timestamp) writes
    assert not is_local_view(parent.restrict(frozenset([a, other])), parent)
    # dropping a whole group is fine
    assert is_local_view(parent.restrict(frozenset([other])), parent)
    wrong_cnt = DatabaseState.from_pairs([other], [], parent.cnt + 1, CATALOG)
    assert not is_local_view(wrong_cnt, parent)


def test_view_counts():
    assert len(list(enumerate_local_views(state_of([])))) == 1
    two = state_of([wr(1, "b", 5), wr(1, "c", 6), wr(2, "b", 7)])
    assert len(list(enumerate_local_views(two))) == 4


@given(states(max_events=12))
def test_every_enumerated_view_is_local(s):
    g = groups(s.events)
    views = list(enumerate_local_views(s))
    assert len(views) == 2 ** len(g)
    for v in views:
        assert is_local_view(v, s)
        for members in g.values():
            inside = members & v.events
            assert not inside or inside == members


@given(states(max_events=12), st.data())
def test_group_splitting_subsets_are_rejected(s, data):
    g = [m for m in groups(s.events).values() if len(m) > 1]
    if not g:
        return
    members = sorted(data.draw(st.sampled_from(g)), key=Event.sort_key)
    keep = s.events - {members[0]}
    assert not is_local_view(s.restrict(keep), s)


def test_dump_format():
    e = Event("wr", 3, RecordId("B", (0, 1)), "v", True, "t1", "regSt/U3")
    r = Event("rd", 4, RecordId("A", (2,)), "b", None, "t2", "getSt/S1")
    text = dump_events(state_of([r, e]))
    assert text.splitlines() == ["wr 3 B (0 1) v true t1 regSt/U3",
                                 "rd 4 A (2) b t2 getSt/S1"]
