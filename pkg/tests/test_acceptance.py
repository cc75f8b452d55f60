"""End-to-end acceptance gate.

Each test records one PASS/FAIL line, printed in the terminal summary
under "acceptance criteria".
"""
import io
import itertools
import json
import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from atroforge import bundled
from atroforge.anomaly import (
    DIRTY_READ, LOST_UPDATE, NON_REPEATABLE_READ, check_strong_atomicity,
    check_strong_isolation, detect,
)
from atroforge.bounds import Bounds
from atroforge.cli import main
from atroforge.dsl.walk import db_commands
from atroforge.interp import enumerate_histories, make_catalog, run_serial
from atroforge.refactor import repair
from atroforge.store import alive_records, field_value, is_local_view
from atroforge.valuecorr import (
    check_containment, check_program_refinement, migrate_state, with_identities,
)

from conftest import WORKLOADS
from obligations import OBLIGATIONS, SETUPS, run_obligation
from strategies import mutate, random_state, states
from test_anomaly import oracle_atomicity, oracle_isolation
from test_valuecorr import (
    P1, P2, P3, TO_LOG, TO_U, catalog, covered_source, oracle_contained, random_triple,
)


@pytest.fixture
def gate(request):
    def record(n, ok, detail):
        request.config.acceptance_lines[n] = (
            f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def _pair_key(p):
    return (p.c1, tuple(sorted(p.f1)), p.c2, tuple(sorted(p.f2)))


def test_criterion_1_anomaly_reproduction(courseware, gate):
    t0 = time.perf_counter()
    rep = detect(courseware)
    secs = time.perf_counter() - t0
    kinds = {c.txns: set(c.kind_witness) for c in rep.combos}
    pairs = {_pair_key(p) for p in rep.pairs}
    want = {("regSt/U3", ("st_co_id", "st_reg"), "regSt/U4", ("co_avail",)),
            ("regSt/S5", ("co_st_cnt",), "regSt/U4", ("co_st_cnt",))}
    ok = (NON_REPEATABLE_READ in kinds.get(("getSt", "setSt"), set())
          and DIRTY_READ in kinds.get(("getSt", "regSt"), set())
          and LOST_UPDATE in kinds.get(("regSt", "regSt"), set())
          and want <= pairs and secs < 30)
    gate(1, ok, f"{len(rep.pairs)} pairs, both named pairs present={want <= pairs}, "
                f"{secs:.1f}s (limit 30s)")


def test_criterion_2_repair_reproduction(courseware, gate):
    t0 = time.perf_counter()
    res = repair(courseware)
    secs = time.perf_counter() - t0
    p = res.program

    def shape(txn):
        return [(type(c).__name__, c.schema) for c in db_commands(p.txn(txn).body)]

    log = [s.name for s in p.schemas if s.log and "CO_ST_CNT" in s.name]
    structure = (shape("getSt") == [("Select", "STUDENT")]
                 and shape("setSt") == [("Update", "STUDENT")]
                 and len(log) == 1
                 and shape("regSt") == [("Update", "STUDENT"), ("Insert", log[0])])
    after = detect(p)
    ok = structure and not after.pairs and secs < 60
    gate(2, ok, f"structure={'match' if structure else 'mismatch'}, "
                f"{len(after.pairs)} pairs after repair, repair {secs:.1f}s (limit 60s)")


def test_criterion_3_lost_update_elimination(courseware, repaired, fig2_workloads, gate):
    spec = next(w for w in fig2_workloads if w.name == "courseware_regst_regst.wl")
    assert list(spec.invocations) == [("regSt", (1, 1)), ("regSt", (2, 1))]
    b = Bounds().with_domains(dict(spec.domains))
    seed = spec.seed(make_catalog(courseware, b))
    course1 = next(r for r in alive_records(seed, "COURSE") if r.key == (1,))
    orig = [field_value(h.final.state, course1, "co_st_cnt")
            for h in enumerate_histories(courseware, spec.invocations, b, seed)]

    V = with_identities(repaired.correspondences, courseware)
    logv = next(v for v in repaired.correspondences if v.agg == "sum")
    mig = migrate_state(seed, V, make_catalog(repaired.program, b))
    sums = []
    for h in enumerate_histories(repaired.program, spec.invocations, b, mig):
        s = h.final.state
        sums.append(sum(field_value(s, r, logv.f2) for r in alive_records(s, logv.dst)
                        if field_value(s, r, "co_id") == 1))
    ok = 1 in orig and bool(sums) and set(sums) == {2}
    gate(3, ok, f"original counts {sorted(set(orig))} over {len(orig)} histories; "
                f"repaired sums {sorted(set(sums))} over {len(sums)} histories")


def test_criterion_4_refinement(courseware, repaired, fig2_workloads, gate):
    t0 = time.perf_counter()
    V = with_identities(repaired.correspondences, courseware)
    verdict = check_program_refinement(repaired.program, courseware, V, fig2_workloads)
    secs = time.perf_counter() - t0
    counts = ", ".join(f"{w.name}: {w.refactored_histories}/{w.serial_histories}"
                       for w in verdict.workloads)
    gate(4, verdict.passed and secs < 300,
         f"status {verdict.status}; refactored/serial histories {counts}; "
         f"{secs:.1f}s (limit 300s)")


def test_criterion_5_rewrite_obligations(gate):
    failing, total = [], 0
    for setup, obligation in itertools.product(sorted(SETUPS), sorted(OBLIGATIONS)):
        res = run_obligation(setup, obligation, 1000, seed=5)
        total += 1
        assert res.cases >= 1000
        if res.failures:
            failing.append(f"{setup}/{obligation} {res.failures} failures "
                           f"({res.empty_binding_failures} on empty bindings)")
    # logger expressions diverge on empty bindings; see the decisions ledger
    gate(5, not failing, f"{total - len(failing)}/{total} suites clean at 1000 cases"
                         + ("; " + "; ".join(failing) if failing else ""))


def test_criterion_6_semantics_invariants(courseware, repaired, fig2_workloads, gate):
    views = bad_views = serial = bad_serial = 0
    for prog in (courseware, repaired.program):
        V = with_identities(repaired.correspondences, courseware)
        for spec in fig2_workloads:
            b = Bounds().with_domains(dict(spec.domains))
            seed = spec.seed(make_catalog(courseware, b))
            if prog is not courseware:
                seed = migrate_state(seed, V, make_catalog(prog, b))
            for h in enumerate_histories(prog, spec.invocations, b, seed):
                for step in h.steps:
                    parent = step.before.state
                    views += 1
                    bad_views += not is_local_view(parent.restrict(step.view), parent)
            for order in itertools.permutations(spec.invocations):
                s = run_serial(prog, list(order), seed, b).final.state
                serial += 1
                bad_serial += not (check_strong_atomicity(s) and check_strong_isolation(s))

    seen, disagree = [0], [0]

    @settings(max_examples=500, database=None, derandomize=True)
    @given(s=states(max_events=30), closed=st.booleans())
    def compare(s, closed):
        seen[0] += 1
        disagree[0] += (check_strong_atomicity(s, closed) != oracle_atomicity(s, closed)
                        or check_strong_isolation(s, closed) != oracle_isolation(s, closed))

    compare()
    ok = (bad_views == 0 and bad_serial == 0 and disagree[0] == 0
          and seen[0] >= 500 and views > 0)
    gate(6, ok, f"{bad_views}/{views} bad views, {bad_serial}/{serial} serial histories "
                f"failing a check, {disagree[0]}/{seen[0]} oracle disagreements")


def test_criterion_7_containment_oracle(gate):
    rng = random.Random(77)
    disagree = 0
    for _ in range(500):
        src, tgt, V = random_triple(rng)
        disagree += check_containment(src, tgt, V) != oracle_contained(src, tgt, V)

    V1, V2 = with_identities([TO_U], P1), with_identities([TO_LOG], P2)
    V12 = with_identities([TO_U, TO_LOG], P1)
    held = broken = tries = 0
    while held < 200 and tries < 5000:
        tries += 1
        d_s, d_u = rng.randint(1, 3), rng.randint(1, 3)
        c1, c2, c3 = catalog(P1, d_s, d_u), catalog(P2, d_s, d_u), catalog(P3, d_s, d_u)
        s1 = mutate(rng, covered_source(rng, c1) or random_state(rng, c1), rng.choice([0, 1]))
        s2 = mutate(rng, migrate_state(s1, V1, c2), rng.choice([0, 0, 1]))
        s3 = mutate(rng, migrate_state(s2, V2, c3), rng.choice([0, 0, 1]))
        if check_containment(s1, s2, V1) and check_containment(s2, s3, V2):
            held += 1
            broken += not check_containment(s1, s3, V12)
    ok = disagree == 0 and held == 200 and broken == 0
    gate(7, ok, f"{disagree}/500 containment disagreements, "
                f"{broken}/{held} composition failures")


def _cli(argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def test_criterion_8_determinism(tmp_path, gate):
    data = tmp_path / "data"
    data.mkdir()
    for name in ("courseware.dbp",) + WORKLOADS:
        (data / name).write_text(bundled(name))
    prog = data / "courseware.dbp"
    wl = data / "courseware_regst_regst.wl"
    # repair writes its outputs first so verify has something to read
    runs = {
        "check": ["check", prog, "--json"],
        "repair": ["repair", prog, "--out-dir", tmp_path / "out", "--json"],
        "simulate": ["simulate", prog, wl, "--json"],
        "simulate-serial": ["simulate", prog, wl, "--serial", "--dump", "--json"],
        "simulate-sample": ["simulate", prog, wl, "--sample", 4, "--seed", 3, "--json"],
        "verify": ["verify", prog, tmp_path / "out" / "courseware.repaired.dbp",
                   tmp_path / "out" / "courseware.vc"] + [data / w for w in WORKLOADS]
                  + ["--json"],
        "fmt": ["fmt", prog],
    }
    differing = []
    for name, argv in runs.items():
        first, second = _cli(argv), _cli(argv)
        if first != second or not first[1]:
            differing.append(name)
        if name == "repair":
            report = (tmp_path / "out" / "courseware.repair.json").read_text()
            _cli(argv)
            if report != (tmp_path / "out" / "courseware.repair.json").read_text():
                differing.append("repair.json")
        if "--json" in argv:
            assert json.loads(first[1])["version"] == 1
    gate(8, not differing, f"{len(runs)} invocations run twice; differing: "
                           f"{', '.join(differing) or 'none'}")
