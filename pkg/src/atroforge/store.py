"""Event-log database state: write/read events, visibility, local views.

A state holds the set of events, a visibility relation, the next timestamp
(``cnt``) and a fresh-key counter used by ``uuid()``. Visibility is kept as
a map from each event to the frozenset of events it witnessed; every event
created by one step shares the same frozenset, which keeps the relation
cheap to build. ``vis`` materializes the explicit pair set on demand.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Tuple

from .dsl.ast import ALIVE, Schema

INIT_TXN = "init"
INIT_CMD = "init"


class _Absent:
    __slots__ = ()

    def __repr__(self):
        return "absent"

    def __reduce__(self):
        return (_absent, ())


def _absent():
    return ABSENT


ABSENT = _Absent()


class StoreError(RuntimeError):
    pass


class RecordId(NamedTuple):
    schema: str
    key: Tuple[int, ...]

    def __str__(self):
        return f"{self.schema}({', '.join(map(str, self.key))})"


class Event:
    """A read (``rd``) or write (``wr``) event with provenance."""

    __slots__ = ("kind", "tau", "r", "f", "value", "txn", "cmd", "_h")

    def __init__(self, kind, tau, r, f, value=None, txn=INIT_TXN, cmd=INIT_CMD):
        if kind not in ("rd", "wr"):
            raise ValueError(f"bad event kind {kind!r}")
        if kind == "rd" and value is not None:
            raise ValueError("read events carry no value")
        self.kind = kind
        self.tau = tau
        self.r = r
        self.f = f
        self.value = value
        self.txn = txn
        self.cmd = cmd
        self._h = hash(self.astuple())

    def astuple(self):
        return (self.kind, self.tau, self.r, self.f, self.value, self.txn, self.cmd)

    @property
    def is_write(self):
        return self.kind == "wr"

    def __hash__(self):
        return self._h

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Event):
            return NotImplemented
        return self._h == other._h and self.astuple() == other.astuple()

    def __reduce__(self):
        return (Event, self.astuple())

    def sort_key(self):
        v = self.value
        return (self.tau, self.r.schema, self.r.key, self.f, self.kind,
                str(v), str(self.txn), self.cmd)

    def __repr__(self):
        if self.kind == "wr":
            return f"wr({self.tau},{self.r},{self.f},{_fmt(self.value)})"
        return f"rd({self.tau},{self.r},{self.f})"


def _fmt(v):
    if v is True:
        return "true"
    if v is False:
        return "false"
    return str(v)


class Catalog:
    """Schemas plus the finite key domain used for each of them."""

    def __init__(self, schemas: Iterable[Schema], domains: Mapping[str, int]):
        self.schemas: Dict[str, Schema] = {s.name: s for s in schemas}
        self.domains: Dict[str, int] = dict(domains)
        self._ids: Dict[str, Tuple[RecordId, ...]] = {}

    def record_ids(self, schema: str) -> Tuple[RecordId, ...]:
        ids = self._ids.get(schema)
        if ids is None:
            s = self.schemas[schema]
            n = self.domains[schema]
            ids = tuple(RecordId(schema, k)
                        for k in itertools.product(range(n), repeat=len(s.pk)))
            self._ids[schema] = ids
        return ids

    def uuid_range(self, schema: str) -> range:
        """Top quarter of the key domain, reserved for ``uuid()``."""
        n = self.domains[schema]
        return range(n - math.ceil(n / 4), n)

    def __eq__(self, other):
        return (isinstance(other, Catalog) and self.schemas == other.schemas
                and self.domains == other.domains)

    def __hash__(self):
        return hash(tuple(sorted(self.domains.items())))

    def __reduce__(self):
        return (Catalog, (tuple(self.schemas.values()), self.domains))


_EMPTY: FrozenSet[Event] = frozenset()


class DatabaseState:
    """Immutable ``(str, vis, cnt, fresh)`` over a catalog."""

    __slots__ = ("events", "cnt", "fresh", "catalog", "_seen", "_parent_seen",
                 "_vis", "_index")

    def __init__(self, events: FrozenSet[Event], seen: Optional[Mapping[Event, FrozenSet[Event]]],
                 cnt: int, fresh: int, catalog: Catalog, parent_seen=None):
        self.events = events
        self.cnt = cnt
        self.fresh = fresh
        self.catalog = catalog
        self._seen = seen
        self._parent_seen = parent_seen
        self._vis = None
        self._index = None

    # alias: the event store is often called str
    @property
    def str(self) -> FrozenSet[Event]:
        return self.events

    @classmethod
    def empty(cls, catalog: Catalog, cnt: int = 0) -> "DatabaseState":
        return cls(frozenset(), {}, cnt, 0, catalog)

    @classmethod
    def from_pairs(cls, events, vis_pairs, cnt, catalog, fresh=0) -> "DatabaseState":
        seen: Dict[Event, set] = {}
        for a, b in vis_pairs:
            seen.setdefault(b, set()).add(a)
        return cls(frozenset(events), {k: frozenset(v) for k, v in seen.items()},
                   cnt, fresh, catalog)

    @property
    def seen(self) -> Mapping[Event, FrozenSet[Event]]:
        """event -> events visible to it."""
        if self._seen is None:
            evs = self.events
            self._seen = {e: s & evs for e, s in self._parent_seen.items()
                          if e in evs and s}
            self._parent_seen = None
        return self._seen

    @property
    def vis(self) -> FrozenSet[Tuple[Event, Event]]:
        if self._vis is None:
            self._vis = frozenset((a, b) for b, s in self.seen.items() for a in s)
        return self._vis

    def sees(self, a: Event, b: Event) -> bool:
        """vis(a, b)"""
        return a in self.seen.get(b, _EMPTY)

    def visible_to(self, b: Event) -> FrozenSet[Event]:
        return self.seen.get(b, _EMPTY)

    def restrict(self, events: FrozenSet[Event]) -> "DatabaseState":
        """Sub-state on ``events`` with visibility restricted accordingly."""
        return DatabaseState(events, None, self.cnt, self.fresh, self.catalog,
                             parent_seen=self.seen)

    def extend(self, new_events: Iterable[Event], witnessed: FrozenSet[Event],
               fresh: Optional[int] = None) -> "DatabaseState":
        """Append one step's events, all witnessing ``witnessed``; cnt + 1."""
        new_events = list(new_events)
        seen = dict(self.seen)
        for e in new_events:
            if witnessed:
                seen[e] = witnessed
        return DatabaseState(self.events.union(new_events), seen, self.cnt + 1,
                             self.fresh if fresh is None else fresh, self.catalog)

    # -- reconstruction
    @property
    def index(self) -> Dict[Tuple[RecordId, str], Tuple[int, object]]:
        """(record, field) -> (tau, value) of the latest write."""
        if self._index is None:
            idx: Dict[Tuple[RecordId, str], Tuple[int, object]] = {}
            for e in self.events:
                if e.kind != "wr":
                    continue
                k = (e.r, e.f)
                cur = idx.get(k)
                if cur is None or e.tau > cur[0]:
                    idx[k] = (e.tau, e.value)
                elif e.tau == cur[0] and e.value != cur[1]:
                    raise StoreError(f"conflicting writes to {e.r}.{e.f} at timestamp {e.tau}")
            self._index = idx
        return self._index

    def __eq__(self, other):
        return (isinstance(other, DatabaseState) and self.events == other.events
                and self.cnt == other.cnt and self.fresh == other.fresh
                and self.vis == other.vis)

    def __hash__(self):
        return hash((self.events, self.cnt, self.fresh))

    def __reduce__(self):
        return (DatabaseState, (self.events, dict(self.seen), self.cnt, self.fresh, self.catalog))

    def __repr__(self):
        return f"DatabaseState(|str|={len(self.events)}, cnt={self.cnt}, fresh={self.fresh})"


def reconstruct_field(state: DatabaseState, r: RecordId, f: str):
    """Value of the latest write to ``r.f``; ``ABSENT`` if never written.

    A missing ``alive`` reads as False.
    """
    hit = state.index.get((r, f))
    if hit is None:
        return False if f == ALIVE else ABSENT
    return hit[1]


def field_value(state: DatabaseState, r: RecordId, f: str):
    """Like reconstruct_field, but primary-key fields come from the key."""
    s = state.catalog.schemas[r.schema]
    if f in s.pk:
        return r.key[s.pk.index(f)]
    return reconstruct_field(state, r, f)


def is_alive(state: DatabaseState, r: RecordId) -> bool:
    return reconstruct_field(state, r, ALIVE) is True


def alive_records(state: DatabaseState, schema: str) -> List[RecordId]:
    return [r for r in state.catalog.record_ids(schema) if is_alive(state, r)]


def groups(events: Iterable[Event]) -> Dict[Tuple[RecordId, int], FrozenSet[Event]]:
    """Partition events by (record, timestamp)."""
    out: Dict[Tuple[RecordId, int], set] = {}
    for e in events:
        out.setdefault((e.r, e.tau), set()).add(e)
    return {k: frozenset(v) for k, v in out.items()}


def is_local_view(view: DatabaseState, parent: DatabaseState) -> bool:
    if view.cnt != parent.cnt:
        return False
    if not view.events <= parent.events:
        return False
    present = {(e.r, e.tau) for e in view.events}
    for e in parent.events:
        if (e.r, e.tau) in present and e not in view.events:
            return False
    expected = frozenset((a, b) for a, b in parent.vis
                         if a in view.events and b in view.events)
    return view.vis == expected


def enumerate_local_views(parent: DatabaseState) -> Iterator[DatabaseState]:
    """Every group-closed sub-state; 2^g of them for g groups."""
    parts = sorted(groups(parent.events).items(),
                   key=lambda kv: (kv[0][1], kv[0][0].schema, kv[0][0].key))
    blocks = [evs for _, evs in parts]
    for mask in range(1 << len(blocks)):
        chosen = frozenset().union(*(b for i, b in enumerate(blocks) if mask >> i & 1))
        yield parent.restrict(chosen)


def format_event(e: Event) -> str:
    key = "(" + " ".join(map(str, e.r.key)) + ")"
    val = f" {_fmt(e.value)}" if e.kind == "wr" else ""
    return f"{e.kind} {e.tau} {e.r.schema} {key} {e.f}{val} {e.txn} {e.cmd}"


def dump_events(state: DatabaseState) -> str:
    """One line per event, ordered by timestamp then record and field."""
    lines = [format_event(e) for e in sorted(state.events, key=Event.sort_key)]
    return "\n".join(lines) + ("\n" if lines else "")
