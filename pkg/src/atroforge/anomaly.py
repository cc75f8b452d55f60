"""Serializability checks over event states and access-pair detection.

Two layers live here. The literal checks (strong atomicity, strong
isolation, ``atomic``) evaluate the visibility axioms on one state. The
detector runs every small transaction combination through the bounded
enumerator, builds a dependency graph between transaction instances for
each history (reads-from, write order, anti-dependencies) and reports the
command pairs that sit on a dependency cycle.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from .bounds import Bounds
from .dsl.ast import Program
from .dsl.walk import db_commands
from .interp import EnumStats, default_seed, enumerate_histories, make_catalog
from .store import INIT_TXN, DatabaseState, Event

LOST_UPDATE = "lost update"
DIRTY_READ = "dirty read"
NON_REPEATABLE_READ = "non-repeatable read"
WRITE_CYCLE = "other cycle"


# -- literal axioms --------------------------------------------------------

def vis_closure(state: DatabaseState) -> Dict[Event, FrozenSet[Event]]:
    """event -> all events reaching it through one or more vis edges."""
    g = nx.DiGraph()
    g.add_nodes_from(state.events)
    g.add_edges_from(state.vis)
    return {e: frozenset(nx.ancestors(g, e)) for e in state.events}


def _relation(state: DatabaseState, closed: bool):
    if closed:
        anc = vis_closure(state)
        return lambda a, b: a in anc[b]
    return state.sees


def atomicity_violation(state: DatabaseState, closed: bool = True):
    """First counterexample to strong atomicity, or None.

    Returns ``(a, b)`` for the timestamp clause or ``(a, b, c)`` for the
    all-or-nothing clause. ``c`` ranges over events of other transactions.
    """
    vis = _relation(state, closed)
    evs = sorted(state.events, key=Event.sort_key)
    for a in evs:
        for b in evs:
            if a.tau < b.tau and not vis(a, b):
                return (a, b)
    by_txn: Dict[str, List[Event]] = {}
    for e in evs:
        by_txn.setdefault(e.txn, []).append(e)
    for a in evs:
        for c in evs:
            if c.txn == a.txn or not vis(a, c):
                continue
            for b in by_txn[a.txn]:
                if not vis(b, c):
                    return (a, b, c)
    return None


def isolation_violation(state: DatabaseState, closed: bool = True):
    """First ``(a, b, c)`` with a, b in one transaction, a not after b, c
    from another transaction, vis(c, b) and not vis(c, a); else None."""
    vis = _relation(state, closed)
    evs = sorted(state.events, key=Event.sort_key)
    by_txn: Dict[str, List[Event]] = {}
    for e in evs:
        by_txn.setdefault(e.txn, []).append(e)
    for b in evs:
        for c in evs:
            if c.txn == b.txn or not vis(c, b):
                continue
            for a in by_txn[b.txn]:
                if a.tau <= b.tau and not vis(c, a):
                    return (a, b, c)
    return None


def check_strong_atomicity(state: DatabaseState, closed: bool = True) -> bool:
    return atomicity_violation(state, closed) is None


def check_strong_isolation(state: DatabaseState, closed: bool = True) -> bool:
    return isolation_violation(state, closed) is None


def atomic(a: Event, b: Event, state: DatabaseState) -> bool:
    """a and b witness the same events and are witnessed by the same events."""
    for c in state.events:
        if state.sees(a, c) and not state.sees(b, c):
            return False
        if state.sees(c, a) and not state.sees(c, b):
            return False
    return True


# -- access pairs ----------------------------------------------------------

@dataclass(frozen=True, order=True)
class AccessPair:
    c1: str
    f1: FrozenSet[str]
    c2: str
    f2: FrozenSet[str]

    def sort_key(self):
        return (self.c1.split("/")[0], self.c1, self.c2, sorted(self.f1), sorted(self.f2))

    def to_json(self):
        return {"c1": self.c1, "f1": sorted(self.f1), "c2": self.c2, "f2": sorted(self.f2)}

    @classmethod
    def from_json(cls, d):
        return cls(d["c1"], frozenset(d["f1"]), d["c2"], frozenset(d["f2"]))

    @property
    def txn(self) -> str:
        return self.c1.split("/")[0]

    def __str__(self):
        return (f"({self.c1}, {{{', '.join(sorted(self.f1))}}}, "
                f"{self.c2}, {{{', '.join(sorted(self.f2))}}})")


@dataclass(frozen=True)
class Dependency:
    kind: str        # "wr" (reads-from), "ww" (write order), "rw" (anti-dependency)
    src: str         # instance tag
    src_cmd: str
    dst: str
    dst_cmd: str
    item: Tuple      # (record, field)


def dependencies(state: DatabaseState) -> List[Dependency]:
    """Dependency edges between non-seed transaction instances."""
    writes: Dict[Tuple, List[Event]] = {}
    for e in state.events:
        if e.kind == "wr":
            writes.setdefault((e.r, e.f), []).append(e)
    out = set()
    for ws in writes.values():
        ws = [w for w in ws if w.txn != INIT_TXN]
        for w1, w2 in itertools.permutations(ws, 2):
            if w1.txn != w2.txn and w1.tau < w2.tau:
                out.add(Dependency("ww", w1.txn, w1.cmd, w2.txn, w2.cmd, (w1.r, w1.f)))
    for rd in state.events:
        if rd.kind != "rd" or rd.txn == INIT_TXN:
            continue
        ws = writes.get((rd.r, rd.f))
        if not ws:
            continue
        seen = state.visible_to(rd)
        read_tau = max((w.tau for w in ws if w in seen), default=-1)
        for w in ws:
            if w.txn == rd.txn or w.txn == INIT_TXN:
                continue
            if w in seen:
                if w.tau == read_tau:
                    out.add(Dependency("wr", w.txn, w.cmd, rd.txn, rd.cmd, (rd.r, rd.f)))
            elif w.tau > read_tau:
                out.add(Dependency("rw", rd.txn, rd.cmd, w.txn, w.cmd, (rd.r, rd.f)))
    return sorted(out, key=lambda d: (d.src, d.dst, d.kind, d.src_cmd, d.dst_cmd, str(d.item)))


def dependency_cycles(deps: Sequence[Dependency]) -> List[List[str]]:
    g = nx.DiGraph()
    for d in deps:
        g.add_edge(d.src, d.dst)
    cycles = [list(c) for c in nx.simple_cycles(g)]
    # rotate each cycle to start at its smallest tag for stable output
    out = []
    for c in cycles:
        i = c.index(min(c))
        out.append(c[i:] + c[:i])
    return sorted(out)


def _order_map(p: Program) -> Dict[str, int]:
    order = {}
    for t in p.transactions:
        for i, c in enumerate(db_commands(t.body)):
            order[f"{t.name}/{c.label}"] = i
    return order


def _edge_groups(deps: Sequence[Dependency]):
    """(src, dst) -> {(src_cmd, dst_cmd): fields}"""
    groups: Dict[Tuple[str, str], Dict[Tuple[str, str], Set[str]]] = {}
    for d in deps:
        groups.setdefault((d.src, d.dst), {}).setdefault((d.src_cmd, d.dst_cmd), set()).add(d.item[1])
    return groups


def attribute_pairs(deps: Sequence[Dependency], cycles, order: Dict[str, int]) -> Set[AccessPair]:
    """For every instance on a cycle, pair the command through which the
    cycle enters it with the command through which it leaves."""
    groups = _edge_groups(deps)
    pairs = set()
    for cyc in cycles:
        n = len(cyc)
        for k, t in enumerate(cyc):
            prev, nxt = cyc[k - 1], cyc[(k + 1) % n]
            ins = groups.get((prev, t), {})
            outs = groups.get((t, nxt), {})
            for (_, c_in), f_in in ins.items():
                for (c_out, _), f_out in outs.items():
                    if c_in == c_out:
                        continue
                    a, b = (c_in, f_in), (c_out, f_out)
                    if order.get(a[0], 0) > order.get(b[0], 0):
                        a, b = b, a
                    pairs.add(AccessPair(a[0], frozenset(a[1]), b[0], frozenset(b[1])))
    return pairs


def classify_cycle(deps: Sequence[Dependency], cycle: Sequence[str], order: Dict[str, int]) -> Set[str]:
    kinds = set()
    members = set(cycle)
    on = [d for d in deps if d.src in members and d.dst in members]
    rw = [d for d in on if d.kind == "rw"]
    wr = [d for d in on if d.kind == "wr"]
    for a in rw:
        for b in rw:
            if a.src == b.dst and a.dst == b.src and a.item == b.item:
                kinds.add(LOST_UPDATE)
    for w in wr:
        for r in rw:
            if w.dst != r.src or w.src != r.dst:
                continue
            # same reader X and writer Y
            if order.get(w.src_cmd, 0) < order.get(r.dst_cmd, 0):
                kinds.add(DIRTY_READ)
            if order.get(r.src_cmd, 0) < order.get(w.dst_cmd, 0):
                kinds.add(NON_REPEATABLE_READ)
    return kinds or {WRITE_CYCLE}


@dataclass
class Witness:
    """A replayable history exhibiting an anomaly."""
    txns: Tuple[str, ...]
    workload: Tuple[Tuple[str, Tuple[int, ...]], ...]
    schedule: str
    kinds: Tuple[str, ...]
    pair: Optional[AccessPair] = None
    violated: Tuple[str, ...] = ()
    events: Tuple[str, ...] = ()

    def to_json(self):
        d = {
            "txns": list(self.txns),
            "workload": [[n, list(a)] for n, a in self.workload],
            "schedule": self.schedule,
            "kinds": list(self.kinds),
            "violated": list(self.violated),
            "events": list(self.events),
        }
        if self.pair is not None:
            d["pair"] = self.pair.to_json()
        return d


def label_violations(w: Witness, state: DatabaseState) -> Witness:
    """Name the violated axioms, preferring the closed-vis reading.

    Views need not be causally closed, so a stale read can hide behind a
    transitive edge; those witnesses are labelled from the direct edges.
    """
    for closed, suffix in ((True, ""), (False, " (direct vis)")):
        violated, events = [], ()
        ato = atomicity_violation(state, closed)
        iso = isolation_violation(state, closed)
        if ato is not None:
            violated.append("atomicity" + suffix)
            events = tuple(map(repr, ato))
        if iso is not None:
            violated.append("isolation" + suffix)
            if not events:
                events = tuple(map(repr, iso))
        if violated:
            break
    w.violated = tuple(violated)
    w.events = events
    return w


@dataclass
class ComboResult:
    txns: Tuple[str, ...]
    pairs: List[AccessPair] = field(default_factory=list)          # discovery order
    pair_witness: Dict[AccessPair, Witness] = field(default_factory=dict)
    kind_witness: Dict[str, Witness] = field(default_factory=dict)
    stats: EnumStats = field(default_factory=EnumStats)
    anomalous_histories: int = 0


def _arg_tuples(p: Program, name: str, domain: Sequence[int]):
    return list(itertools.product(domain, repeat=len(p.txn(name).params)))


def _workloads(p: Program, combo: Sequence[str], domain: Sequence[int]):
    choices = [_arg_tuples(p, n, domain) for n in combo]
    for args in itertools.product(*choices):
        # instances of the same transaction are interchangeable
        skip = any(combo[i] == combo[i + 1] and args[i] > args[i + 1] for i in range(len(combo) - 1))
        if not skip:
            yield tuple(zip(combo, args))


def detect_combo(p: Program, combo: Tuple[str, ...], bounds: Bounds,
                 init: Optional[DatabaseState] = None) -> ComboResult:
    order = _order_map(p)
    if init is None:
        init = default_seed(make_catalog(p, bounds))
    res = ComboResult(combo)
    for wl in _workloads(p, combo, bounds.args):
        stats = EnumStats()
        for h in enumerate_histories(p, wl, bounds, init, stats):
            deps = dependencies(h.final.state)
            cycles = dependency_cycles(deps)
            if not cycles:
                continue
            res.anomalous_histories += 1
            new_pairs = attribute_pairs(deps, cycles, order)
            kinds = set()
            for c in cycles:
                kinds |= classify_cycle(deps, c, order)
            for k in sorted(kinds):
                if k not in res.kind_witness:
                    res.kind_witness[k] = label_violations(
                        Witness(combo, wl, h.schedule, tuple(sorted(kinds))), h.final.state)
            for pr in sorted(new_pairs, key=AccessPair.sort_key):
                if pr not in res.pair_witness:
                    res.pairs.append(pr)
                    res.pair_witness[pr] = label_violations(
                        Witness(combo, wl, h.schedule, tuple(sorted(kinds)), pr), h.final.state)
        res.stats.merge(stats)
    return res


def _detect_star(args):
    return detect_combo(*args)


@dataclass
class DetectionReport:
    pairs: List[AccessPair]
    witnesses: List[Witness]
    combos: List[ComboResult]
    bounds: Bounds

    @property
    def capped(self) -> bool:
        return any(c.stats.capped for c in self.combos)

    def kinds_for(self, *txns: str) -> Set[str]:
        key = tuple(sorted(txns))
        for c in self.combos:
            if tuple(sorted(c.txns)) == key:
                return set(c.kind_witness)
        return set()

    def to_json(self, program_name: str = ""):
        combos = []
        for c in self.combos:
            combos.append({
                "txns": list(c.txns),
                "histories": c.stats.histories,
                "anomalous_histories": c.anomalous_histories,
                "anomalies": {k: c.kind_witness[k].to_json() for k in sorted(c.kind_witness)},
                "capped": {
                    "schedule": c.stats.schedule_capped,
                    "view_steps": c.stats.view_capped_steps,
                    "step_limit": c.stats.step_capped,
                },
            })
        return {
            "version": 1,
            "program": program_name,
            "bounds": self.bounds.to_json(),
            "pairs": [pr.to_json() for pr in self.pairs],
            "witnesses": [w.to_json() for w in self.witnesses],
            "combinations": combos,
            "capped": self.capped,
        }


def transaction_combos(p: Program, bounds: Bounds, txns: Optional[Iterable[str]] = None):
    names = [t.name for t in p.transactions] if txns is None else list(txns)
    return list(itertools.combinations_with_replacement(names, bounds.instances))


def detect(p: Program, bounds: Bounds = Bounds(), init: Optional[DatabaseState] = None,
           jobs: int = 1, combos=None) -> DetectionReport:
    """Explore every transaction combination and collect anomalous pairs."""
    combos = transaction_combos(p, bounds) if combos is None else combos
    tasks = [(p, tuple(c), bounds, init) for c in combos]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_detect_star, tasks))
    else:
        results = [_detect_star(t) for t in tasks]
    pairs, witnesses, seen = [], [], set()
    for r in results:
        for pr in r.pairs:
            if pr not in seen:
                seen.add(pr)
                pairs.append(pr)
    pairs.sort(key=AccessPair.sort_key)
    for pr in pairs:
        for r in results:
            if pr in r.pair_witness:
                witnesses.append(r.pair_witness[pr])
                break
    return DetectionReport(pairs, witnesses, results, bounds)


def detect_access_pairs(p: Program, bounds: Bounds = Bounds(), init=None, jobs: int = 1) -> Set[AccessPair]:
    return set(detect(p, bounds, init, jobs).pairs)
