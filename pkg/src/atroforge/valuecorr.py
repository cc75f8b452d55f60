"""Value correspondences, containment between states, and bounded
refinement checking between an original and a refactored program."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .bounds import Bounds
from .dsl.ast import Program
from .interp import (
    EnumStats, History, enumerate_histories, make_catalog, run_serial, seed_state,
)
from .store import ABSENT, Catalog, DatabaseState, RecordId, field_value, is_alive
from .workload import WorkloadSpec

AGGREGATORS = ("any", "sum", "id")


class CorrespondenceError(ValueError):
    pass


class AggregateError(ValueError):
    pass


@dataclass(frozen=True)
class ValueCorrespondence:
    """Field ``src.f`` is recoverable from ``dst.f2`` over the records whose
    ``theta[p]`` fields equal the source key, folded with ``agg``."""
    src: str
    dst: str
    f: str
    f2: str
    theta: Tuple[Tuple[str, str], ...]
    agg: str = "any"

    def __post_init__(self):
        if self.agg not in AGGREGATORS:
            raise CorrespondenceError(f"unknown aggregator '{self.agg}'")

    @property
    def theta_map(self) -> Dict[str, str]:
        return dict(self.theta)

    def sort_key(self):
        return (self.src, self.f, self.dst, self.f2)

    def __str__(self):
        return format_vc(self)


def identity(schema, f: str) -> ValueCorrespondence:
    return ValueCorrespondence(schema.name, schema.name, f, f,
                               tuple((p, p) for p in schema.pk), "id")


def check_correspondence(v: ValueCorrespondence, src_catalog: Catalog, dst_catalog: Catalog):
    s = src_catalog.schemas.get(v.src)
    d = dst_catalog.schemas.get(v.dst)
    if s is None or d is None:
        raise CorrespondenceError(f"{v}: unknown schema")
    if v.f not in s.fields or v.f2 not in d.fields:
        raise CorrespondenceError(f"{v}: unknown field")
    if set(v.theta_map) != set(s.pk):
        raise CorrespondenceError(f"{v}: theta must map every key field of {v.src}")
    for q in v.theta_map.values():
        if q not in d.fields:
            raise CorrespondenceError(f"{v}: theta target '{q}' is not a field of {v.dst}")


def check_correspondence_set(V: Iterable[ValueCorrespondence]):
    """No two correspondences share a source field or a target field, and
    no correspondence chains into another."""
    srcs, dsts = set(), set()
    for v in V:
        if (v.src, v.f) in srcs:
            raise CorrespondenceError(f"two correspondences share source field {v.src}.{v.f}")
        if (v.dst, v.f2) in dsts:
            raise CorrespondenceError(f"two correspondences share target field {v.dst}.{v.f2}")
        srcs.add((v.src, v.f))
        dsts.add((v.dst, v.f2))
    for v in V:
        if v.agg != "id" and (v.dst, v.f2) in srcs:
            raise CorrespondenceError(f"chained correspondence through {v.dst}.{v.f2}")


# -- record correspondence and aggregation ---------------------------------

def _target_index(v: ValueCorrespondence, target: DatabaseState):
    """theta-key tuple -> target records carrying it."""
    src_pk = [p for p, _ in v.theta]
    idx: Dict[Tuple, List[RecordId]] = {}
    cols = [q for _, q in v.theta]
    for r2 in target.catalog.record_ids(v.dst):
        key = tuple(field_value(target, r2, q) for q in cols)
        idx.setdefault(key, []).append(r2)
    return src_pk, idx


def _source_key(v, src_pk, schema, r):
    return tuple(r.key[schema.pk.index(p)] for p in src_pk)


def lift_theta(v: ValueCorrespondence, source: DatabaseState, target: DatabaseState,
               r: RecordId) -> Set[RecordId]:
    """Target records whose theta fields equal r's key components."""
    out = set()
    th = v.theta_map
    s_pk = source.catalog.schemas[v.src].pk
    for r2 in target.catalog.record_ids(v.dst):
        if all(field_value(target, r2, th[p]) == r.key[i] for i, p in enumerate(s_pk)):
            out.add(r2)
    return out


def apply_aggregator(agg: str, values: Sequence[object]):
    """Fold a multiset of values. ``sum`` of nothing is 0; ``any``/``id``
    need all values equal."""
    values = list(values)
    if agg == "sum":
        if any(v is ABSENT for v in values):
            raise AggregateError("sum over an absent value")
        return sum(int(v) for v in values)
    if not values:
        raise AggregateError(f"{agg} over an empty set of values")
    first = values[0]
    for v in values[1:]:
        if v != first or type(v) is not type(first) and (v is ABSENT or first is ABSENT):
            raise AggregateError(f"{agg} over non-uniform values {sorted(map(str, values))}")
    return first


def _same(a, b) -> bool:
    if a is ABSENT or b is ABSENT:
        return a is b
    return a == b


# -- containment -----------------------------------------------------------

def containment_failures(source: DatabaseState, target: DatabaseState,
                         V: Iterable[ValueCorrespondence], limit: int = 1) -> List[str]:
    """Reasons why ``source`` is not contained in ``target`` (empty if it is)."""
    out = []
    for v in sorted(V, key=ValueCorrespondence.sort_key):
        schema = source.catalog.schemas[v.src]
        src_pk, idx = _target_index(v, target)
        for r in source.catalog.record_ids(v.src):
            theta_r = idx.get(_source_key(v, src_pk, schema, r), ())
            live = [r2 for r2 in theta_r if is_alive(target, r2)]
            alive = is_alive(source, r)
            if alive != bool(live):
                out.append(f"{v}: {r} is {'alive' if alive else 'dead'} but "
                           f"{len(live)} corresponding record(s) are alive")
            elif alive:
                try:
                    agg = apply_aggregator(v.agg, [field_value(target, r2, v.f2) for r2 in live])
                except AggregateError as exc:
                    out.append(f"{v}: {r}: {exc}")
                else:
                    mine = field_value(source, r, v.f)
                    if not _same(mine, agg):
                        out.append(f"{v}: {r}.{v.f} = {mine} but the target folds to {agg}")
            if len(out) >= limit:
                return out
    return out


def check_containment(source: DatabaseState, target: DatabaseState,
                      V: Iterable[ValueCorrespondence]) -> bool:
    return not containment_failures(source, target, V)


def _canon(v):
    if v is ABSENT:
        return ("absent",)
    if isinstance(v, bool):
        return ("int", int(v))
    return ("int", v)


def source_projection(source: DatabaseState, V: Sequence[ValueCorrespondence]):
    """Canonical summary of what containment constrains on the source side."""
    out = []
    for v in sorted(V, key=ValueCorrespondence.sort_key):
        col = []
        for r in source.catalog.record_ids(v.src):
            if is_alive(source, r):
                col.append((True, _canon(field_value(source, r, v.f))))
            else:
                col.append((False, None))
        out.append(tuple(col))
    return tuple(out)


def target_projection(target: DatabaseState, V: Sequence[ValueCorrespondence],
                      source_catalog: Catalog):
    """The unique source projection ``target`` can contain, or None.

    ``source_projection(s) == target_projection(t)`` iff s is contained in t.
    """
    out = []
    for v in sorted(V, key=ValueCorrespondence.sort_key):
        schema = source_catalog.schemas[v.src]
        src_pk, idx = _target_index(v, target)
        col = []
        for r in source_catalog.record_ids(v.src):
            live = [r2 for r2 in idx.get(_source_key(v, src_pk, schema, r), ())
                    if is_alive(target, r2)]
            if not live:
                col.append((False, None))
                continue
            try:
                agg = apply_aggregator(v.agg, [field_value(target, r2, v.f2) for r2 in live])
            except AggregateError:
                return None
            col.append((True, _canon(agg)))
        out.append(tuple(col))
    return tuple(out)


# -- correspondence sets ---------------------------------------------------

def identity_correspondences(p: Program, exclude: Iterable = ()) -> List[ValueCorrespondence]:
    """One identity correspondence per field of ``p`` not in ``exclude``.

    ``exclude`` may hold bare field names or (schema, field) pairs.
    """
    exclude = set(exclude)
    out = []
    for s in p.schemas:
        for f in s.fields:
            if f in exclude or (s.name, f) in exclude:
                continue
            out.append(identity(s, f))
    return out


def with_identities(V: Iterable[ValueCorrespondence], p: Program) -> List[ValueCorrespondence]:
    """V plus identities for every field of ``p`` that V does not touch."""
    V = list(V)
    touched = {(v.src, v.f) for v in V} | {(v.dst, v.f2) for v in V}
    return sorted(identity_correspondences(p, touched) + V, key=ValueCorrespondence.sort_key)


def migrate_state(source: DatabaseState, V: Sequence[ValueCorrespondence],
                  target_catalog: Catalog) -> DatabaseState:
    """Build a seed for the refactored schemas that contains ``source``.

    Shared schemas are copied field by field; ``any``/``id`` targets are
    filled from the source record their theta fields point at; ``sum``
    targets (log schemas) get one record per live source record with
    ``log_id``-style extra key fields set to 0.
    """
    records: Dict[RecordId, Dict[str, object]] = {}
    for name, s2 in target_catalog.schemas.items():
        s = source.catalog.schemas.get(name)
        if s is None:
            continue
        for r in source.catalog.record_ids(name):
            if not is_alive(source, r) or r not in set(target_catalog.record_ids(name)):
                continue
            vals = {}
            for f in s2.nonpk:
                if f in s.fields:
                    vals[f] = field_value(source, r, f)
            records[r] = vals
    for v in sorted(V, key=ValueCorrespondence.sort_key):
        if v.agg == "id" and v.src == v.dst:
            continue
        s = source.catalog.schemas[v.src]
        d = target_catalog.schemas[v.dst]
        th = v.theta_map
        if v.agg == "sum":
            for r in source.catalog.record_ids(v.src):
                if not is_alive(source, r):
                    continue
                key = tuple(r.key[s.pk.index(p)] if (p := _inverse(th, q)) else 0 for q in d.pk)
                r2 = RecordId(v.dst, key)
                vals = records.setdefault(r2, {})
                for q in d.nonpk:
                    p = _inverse(th, q)
                    if p is not None:
                        vals[q] = r.key[s.pk.index(p)]
                vals[v.f2] = field_value(source, r, v.f)
        else:
            for r2, vals in records.items():
                if r2.schema != v.dst:
                    continue
                key = []
                for p in s.pk:
                    q = th[p]
                    key.append(r2.key[d.pk.index(q)] if q in d.pk else vals.get(q, ABSENT))
                r = RecordId(v.src, tuple(key))
                if is_alive(source, r):
                    vals[v.f2] = field_value(source, r, v.f)
    return seed_state(target_catalog, records)


def _inverse(theta: Mapping[str, str], q: str) -> Optional[str]:
    for p, q2 in theta.items():
        if q2 == q:
            return p
    return None


# -- refinement ------------------------------------------------------------

def check_history_refinement(h2: History, h: History, V: Sequence[ValueCorrespondence]) -> bool:
    """h2 (refactored) refines h (original): same finalized outcomes and
    h's final state is contained in h2's."""
    if h2.outcomes() != h.outcomes():
        return False
    return check_containment(h.final.state, h2.final.state, V)


@dataclass
class WorkloadVerdict:
    name: str
    refactored_histories: int = 0
    original_histories: int = 0
    serial_histories: int = 0
    cond1_failures: int = 0
    cond2_failures: int = 0
    cond1_example: Optional[dict] = None
    cond2_example: Optional[dict] = None
    capped: bool = False

    @property
    def passed(self) -> bool:
        return self.cond1_failures == 0 and self.cond2_failures == 0

    def to_json(self):
        return {
            "workload": self.name,
            "passed": self.passed,
            "capped": self.capped,
            "refactored_histories": self.refactored_histories,
            "original_histories": self.original_histories,
            "serial_histories": self.serial_histories,
            "condition_1_failures": self.cond1_failures,
            "condition_2_failures": self.cond2_failures,
            "condition_1_example": self.cond1_example,
            "condition_2_example": self.cond2_example,
        }


@dataclass
class RefinementVerdict:
    workloads: List[WorkloadVerdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(w.passed for w in self.workloads)

    @property
    def capped(self) -> bool:
        return any(w.capped for w in self.workloads)

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "bounded-pass" if self.capped else "pass"

    def to_json(self):
        return {"status": self.status, "workloads": [w.to_json() for w in self.workloads]}


def _outcome_key(h: History):
    return h.outcomes()


def check_program_refinement(refactored: Program, original: Program,
                             V: Sequence[ValueCorrespondence],
                             workloads: Sequence[WorkloadSpec],
                             bounds: Bounds = Bounds()) -> RefinementVerdict:
    """Bounded check of both refinement conditions.

    (I) every enumerated history of ``refactored`` is matched by an
    enumerated history of ``original``; (II) every serial history of
    ``original`` (all invocation orders) is matched by some history of
    ``refactored``. Matching means equal outcomes and containment of the
    original's final state under ``V``.
    """
    V = sorted(V, key=ValueCorrespondence.sort_key)
    check_correspondence_set([v for v in V if v.agg != "id"])
    verdict = RefinementVerdict()
    for wl in workloads:
        b = bounds.with_domains(dict(wl.domains)) if wl.domains else bounds
        cat = make_catalog(original, b)
        cat2 = make_catalog(refactored, b)
        for v in V:
            check_correspondence(v, cat, cat2)
        seed = wl.seed(cat)
        seed2 = migrate_state(seed, V, cat2)
        wv = WorkloadVerdict(wl.name)
        inv = list(wl.invocations)

        # original histories, indexed by (outcomes, projection)
        stats = EnumStats()
        orig_index: Set = set()
        for h in enumerate_histories(original, inv, b, seed, stats):
            wv.original_histories += 1
            orig_index.add((_outcome_key(h), source_projection(h.final.state, V)))
        stats2 = EnumStats()
        ref_index: Set = set()
        for h2 in enumerate_histories(refactored, inv, b, seed2, stats2):
            wv.refactored_histories += 1
            proj = target_projection(h2.final.state, V, cat)
            key = (_outcome_key(h2), proj)
            ref_index.add(key)
            if proj is None or key not in orig_index:
                wv.cond1_failures += 1
                if wv.cond1_example is None:
                    wv.cond1_example = {
                        "schedule": h2.schedule,
                        "outcomes": [list(map(_json_val, o)) for o in h2.outcomes()],
                    }
        for perm in _orders(inv):
            h = run_serial(original, perm, seed, b)
            wv.serial_histories += 1
            key = (_outcome_key(h), source_projection(h.final.state, V))
            if key not in ref_index:
                wv.cond2_failures += 1
                if wv.cond2_example is None:
                    wv.cond2_example = {
                        "order": [[n, list(a)] for n, a in perm],
                        "outcomes": [list(map(_json_val, o)) for o in h.outcomes()],
                    }
        wv.capped = stats.capped or stats2.capped
        verdict.workloads.append(wv)
    return verdict


def _orders(inv):
    seen = set()
    for perm in itertools.permutations(inv):
        if perm not in seen:
            seen.add(perm)
            yield list(perm)


def _json_val(v):
    if isinstance(v, tuple):
        return [_json_val(x) for x in v]
    if v is ABSENT:
        return "absent"
    return v


# -- .vc files -------------------------------------------------------------

_VC_RE = re.compile(
    r"vc\s+(\w+)\.(\w+)\s*->\s*(\w+)\.(\w+)\s+via\s*\{([^}]*)\}\s*agg\s+(\w+)\s*$")


def format_vc(v: ValueCorrespondence) -> str:
    theta = ", ".join(f"{p}: {q}" for p, q in v.theta)
    return f"vc {v.src}.{v.f} -> {v.dst}.{v.f2} via {{{theta}}} agg {v.agg}"


def format_vc_file(V: Iterable[ValueCorrespondence]) -> str:
    lines = [format_vc(v) for v in V]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_vc_file(text: str, name: str = "<vc>") -> List[ValueCorrespondence]:
    out = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0].split("#", 1)[0].strip()
        if not line:
            continue
        m = _VC_RE.match(line)
        if m is None:
            raise CorrespondenceError(f"{name}:{n}: cannot parse {line!r}")
        theta = []
        for item in m.group(5).split(","):
            if not item.strip():
                continue
            if ":" not in item:
                raise CorrespondenceError(f"{name}:{n}: bad theta entry {item.strip()!r}")
            p, q = item.split(":", 1)
            theta.append((p.strip(), q.strip()))
        out.append(ValueCorrespondence(m.group(1), m.group(3), m.group(2), m.group(4),
                                       tuple(theta), m.group(6)))
    return out
