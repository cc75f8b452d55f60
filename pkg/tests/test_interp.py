import random

import pytest

from atroforge.anomaly import check_strong_atomicity, check_strong_isolation
from atroforge.bounds import Bounds
from atroforge.dsl import parse_program
from atroforge.dsl.ast import Agg, Arg, At, BinArith, Compare, Const
from atroforge.dsl.walk import db_commands
from atroforge.interp import (
    ERROR, EnumStats, InterpError, StepContext, default_seed, enumerate_histories,
    eval_expr, make_catalog, parse_schedule, replay, run_serial, sample_history, step_select,
    step_update,
)
from atroforge.store import ABSENT, RecordId, alive_records, field_value, is_local_view

R1 = RecordId("COURSE", (1,))
B3 = Bounds().with_domains({"STUDENT": 3})


def ev(e, delta=None, args=None):
    return eval_expr(delta or {}, args or {}, None, e)


def test_increment_expression():
    delta = {"x": ((R1, {"co_st_cnt": 4}),)}
    assert ev(BinArith("+", At(Const(1), "x", "co_st_cnt"), Const(1)), delta) == 5


def test_aggregates():
    rows = tuple((RecordId("A", (i,)), {"b": v}) for i, v in enumerate([3, 7, 2]))
    assert ev(Agg("min", "x", "b"), {"x": rows}) == 2
    assert ev(Agg("max", "x", "b"), {"x": rows}) == 7
    assert ev(Agg("sum", "x", "b"), {"x": rows}) == 12
    assert ev(Agg("sum", "x", "b"), {"x": ()}) == 0
    with pytest.raises(InterpError):
        ev(Agg("min", "x", "b"), {"x": ()})


@pytest.mark.parametrize("a, b, q", [(7, 2, 3), (-7, 2, -3), (7, -2, -3), (-7, -2, 3)])
def test_division_truncates_toward_zero(a, b, q):
    assert ev(BinArith("/", Const(a), Const(b))) == q


def test_errors():
    with pytest.raises(InterpError):
        ev(BinArith("/", Const(1), Const(0)))
    with pytest.raises(InterpError):
        ev(At(Const(2), "x", "b"), {"x": ((R1, {"b": 1}),)})
    with pytest.raises(InterpError):
        ev(Arg("nope"))
    with pytest.raises(InterpError):
        ev(BinArith("+", At(Const(1), "x", "b"), Const(1)), {"x": ((R1, {"b": ABSENT}),)})


def test_absent_and_booleans():
    delta = {"x": ((R1, {"b": ABSENT}),)}
    assert ev(Compare("=", At(Const(1), "x", "b"), Const(0)), delta) is False
    assert ev(BinArith("+", Const(True), Const(1))) == 2
    assert ev(Compare("=", Const(True), Const(1))) is True


def test_select_step_events(courseware):
    b = Bounds().with_domains({"STUDENT": 1})
    cat = make_catalog(courseware, b)
    s0 = default_seed(cat)
    s1_cmd = db_commands(courseware.txn("getSt").body)[0]
    s1, delta = step_select(s0, {}, s1_cmd, s0, StepContext(args={"id": 0}))
    new = s1.events - s0.events
    # scan reads {st_id, alive} and result reads the 5 fields share st_id
    assert {e.f for e in new} == {"alive", *courseware.schema("STUDENT").fields}
    assert len(new) == 6
    assert {e.tau for e in new} == {s0.cnt} and s1.cnt == s0.cnt + 1
    assert [r for r, _ in delta["x"]] == [RecordId("STUDENT", (0,))]
    empty, delta = step_select(s0, {}, s1_cmd, s0.restrict(frozenset()),
                               StepContext(args={"id": 0}))
    assert delta["x"] == ()
    assert all(e.kind == "rd" for e in empty.events - s0.events)


def test_update_step(courseware):
    cat = make_catalog(courseware)
    s0 = default_seed(cat)
    u3 = db_commands(courseware.txn("regSt").body)[0]
    s1 = step_update(s0, {}, u3, s0, StepContext(args={"id": 1, "course": 1}))
    new = s1.events - s0.events
    assert sorted(e.f for e in new) == ["st_co_id", "st_reg"]
    assert len({e.tau for e in new}) == 1
    none = step_update(s0, {}, u3, s0, StepContext(args={"id": 7, "course": 1}))
    assert none.events == s0.events and none.cnt == s0.cnt + 1


def test_serial_lost_update_free(courseware):
    h = run_serial(courseware, [("regSt", (1, 1)), ("regSt", (2, 1))], bounds=B3)
    assert field_value(h.final.state, R1, "co_st_cnt") == 2
    assert check_strong_atomicity(h.final.state) and check_strong_isolation(h.final.state)
    assert len(run_serial(courseware, [], bounds=B3)) == 0


def test_enumeration_finds_lost_update(courseware):
    finals = {field_value(h.final.state, R1, "co_st_cnt")
              for h in enumerate_histories(courseware, [("regSt", (1, 1)), ("regSt", (2, 1))], B3)}
    assert finals == {1, 2}


WORKLOADS = [
    [("getSt", (1,)), ("setSt", (1, 1, 1))],
    [("getSt", (1,)), ("regSt", (1, 0))],
    [("regSt", (0, 1)), ("regSt", (1, 1))],
    [("setSt", (0, 1, 1)), ("regSt", (0, 1))],
]


@pytest.mark.parametrize("workload", WORKLOADS)
def test_every_step_uses_a_local_view(courseware, workload):
    stats = EnumStats()
    n = 0
    for h in enumerate_histories(courseware, workload, Bounds(), stats=stats):
        n += 1
        prev = None
        for step in h.steps:
            parent = step.before.state
            assert is_local_view(parent.restrict(step.view), parent)
            if prev is not None:
                assert parent.cnt == prev + 1
            prev = parent.cnt
    assert n == stats.histories > 0


@pytest.mark.parametrize("workload", WORKLOADS)
def test_serial_histories_satisfy_both_checks(courseware, workload):
    for order in (workload, workload[::-1]):
        s = run_serial(courseware, order).final.state
        assert check_strong_atomicity(s) and check_strong_isolation(s)
        assert check_strong_atomicity(s, closed=False) and check_strong_isolation(s, closed=False)


def test_serial_history_is_enumerated(courseware):
    wl = WORKLOADS[2]
    serial = run_serial(courseware, wl)
    finals = {h.schedule: h.final.state for h in enumerate_histories(courseware, wl)}
    assert finals[serial.schedule].events == serial.final.state.events


def test_enumeration_is_reproducible(courseware):
    a = [h.schedule for h in enumerate_histories(courseware, WORKLOADS[1])]
    b = [h.schedule for h in enumerate_histories(courseware, WORKLOADS[1])]
    assert a == b and len(set(a)) == len(a)


def test_replay_reproduces(courseware):
    hs = list(enumerate_histories(courseware, WORKLOADS[0]))
    for h in hs[:: max(1, len(hs) // 10)]:
        again = replay(courseware, WORKLOADS[0], h.schedule)
        assert again.final.state == h.final.state


def test_disjoint_updates_commute():
    p = parse_program("""
        schema A(a key, b);
        txn w(k, v) { update A set b = v where a = k; }""")
    states = {tuple(field_value(h.final.state, RecordId("A", (k,)), "b") for k in (0, 1))
              for h in enumerate_histories(p, [("w", (0, 5)), ("w", (1, 6))])}
    assert states == {(5, 6)}


def test_runtime_errors():
    p = parse_program("""
        schema A(a key, b);
        txn d(k) { x := select b from A where a = k; return 10 / x.b; }""")
    results = {h.final.instances[0].result for h in enumerate_histories(p, [("d", (0,))])}
    assert results == {ERROR}
    with pytest.raises(InterpError):
        run_serial(p, [("d", (0,))])


def test_uuid_allocation():
    p = parse_program("""
        schema L(k key, i key, v) domain 8 log;
        txn add(k) { insert into L values (k = k, i = uuid(), v = 1); }""")
    h = run_serial(p, [("add", (0,)), ("add", (0,))])
    keys = sorted(r.key for r in alive_records(h.final.state, "L"))
    assert keys == [(0, 6), (0, 7)]


def test_sampling_is_seeded(courseware):
    def run(seed):
        rng = random.Random(seed)
        return [sample_history(courseware, WORKLOADS[2], rng).schedule for _ in range(5)]
    assert run(4) == run(4)
    every = {h.schedule for h in enumerate_histories(courseware, WORKLOADS[2])}
    assert set(run(4)) <= every


@pytest.mark.parametrize("text", ["x", "0:y", "1:2:3"])
def test_malformed_schedule_is_an_interp_error(text):
    with pytest.raises(InterpError, match="schedule"):
        parse_schedule(text)
