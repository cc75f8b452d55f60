"""Repair driver: detect anomalous access pairs, then try merging,
redirecting or logging each one, and finish with clean-up passes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from ..anomaly import AccessPair, DetectionReport, detect
from ..bounds import Bounds
from ..dsl.ast import At, Const, Insert, Program, Select, Update, label_parts
from ..dsl.walk import db_commands, fields_accessed, pk_equalities, where_atoms, conjuncts
from ..valuecorr import ValueCorrespondence
from .rewrite import (
    LOGGER, REDIRECT, RefactorError, RefactorState, RewriteUndefined, Step,
    binding_select, bindings, canonical_where, eliminate_select, find_command,
    fresh_field_name, increment_delta, intro_field, intro_vc, make_logging_schema,
    merge_commands, split_update, var_is_used,
)

_FAILED = (RewriteUndefined, RefactorError)


def _split_label(full: str) -> Tuple[str, str]:
    txn, label = full.split("/", 1)
    return txn, label


# -- pre-processing --------------------------------------------------------

def _co_accessed(p: Program, schema: str, fields: Sequence[str], skip: Tuple[str, str]) -> bool:
    """Whether some other command touches two or more of ``fields``."""
    s = p.schema(schema)
    for t in p.transactions:
        for c in db_commands(t.body):
            if (t.name, c.label) == skip or c.schema != schema:
                continue
            if len(fields_accessed(c, s) & set(fields)) >= 2:
                return True
    return False


def preprocess_split(st: RefactorState, pairs: Sequence[AccessPair]) -> RefactorState:
    """Split multi-field updates implicated in more than one pair into
    single-field updates, unless their fields are used together elsewhere."""
    counts = {}
    for pr in pairs:
        for c in {pr.c1, pr.c2}:
            counts[c] = counts.get(c, 0) + 1
    for full in sorted(c for c, n in counts.items() if n > 1):
        txn, label = _split_label(full)
        c = find_command(st.program.txn(txn), label)
        if not isinstance(c, Update) or len(c.sets) < 2:
            continue
        if _co_accessed(st.program, c.schema, [f for f, _ in c.sets], (txn, c.label)):
            continue
        st = split_update(st, txn, c.label)
    return st


def remap_split_pairs(pairs: Sequence[AccessPair], st: RefactorState) -> List[AccessPair]:
    """Point pairs at the split parts whose fields they involve."""
    split = {(s.args[0], s.args[1]) for s in st.log if s.kind == "split"}

    def sides(full, fields):
        txn, label = _split_label(full)
        if (txn, label) not in split:
            return [(full, fields)]
        t = st.program.txn(txn)
        out = []
        for c in db_commands(t.body):
            if isinstance(c, Update) and c.label.startswith(label + "."):
                mine = fields & {f for f, _ in c.sets}
                if mine:
                    out.append((f"{txn}/{c.label}", frozenset(mine)))
        return out

    out = set()
    for pr in pairs:
        for a, fa in sides(pr.c1, pr.f1):
            for b, fb in sides(pr.c2, pr.f2):
                if a != b:
                    out.add(AccessPair(a, fa, b, fb))
    return sorted(out, key=AccessPair.sort_key)


# -- the three repair strategies -------------------------------------------

def try_merging(st: RefactorState, txn: str, l1: str, l2: str) -> Optional[RefactorState]:
    try:
        return merge_commands(st, txn, l1, l2)
    except _FAILED:
        return None


def _theta_for(t, c1, c2, src_pk) -> Optional[dict]:
    """Match each key field of c2's schema with a field of c1's schema
    holding the same value, judged from the where clauses."""
    eqs = pk_equalities(c2.where, src_pk)
    if eqs is None:
        return None
    binds = bindings(t)
    c1_atoms = conjuncts(c1.where) or []
    theta = {}
    for p in src_pk:
        e = eqs[p]
        g = None
        if isinstance(e, At) and e.index == Const(1) and binds.get(e.var) == c1.schema:
            g = e.field
        elif isinstance(c1, Update) and any(x == e for _, x in c1.sets):
            g = next(f for f, x in c1.sets if x == e)
        else:
            g = next((a.field for a in c1_atoms if a.op == "=" and a.expr == e), None)
        if g is None:
            return None
        theta[p] = g
    return theta


def try_redirect(st: RefactorState, txn: str, l1: str, l2: str) -> Optional[RefactorState]:
    """Move the fields ``l2`` accesses into ``l1``'s schema."""
    p = st.program
    t = p.txn(txn)
    c1, c2 = find_command(t, l1), find_command(t, l2)
    if isinstance(c1, Insert) or isinstance(c2, Insert):
        return None
    src, dst = p.schema(c2.schema), p.schema(c1.schema)
    if any(f not in src.pk for f in {a.field for a in where_atoms(c2.where)}):
        return None
    theta = _theta_for(t, c1, c2, src.pk)
    if theta is None:
        return None
    if isinstance(c2, Select):
        moved = list(src.nonpk) if c2.is_star else [f for f in c2.fields if f not in src.pk]
    else:
        moved = [f for f, _ in c2.sets]
    taken = {(v.src, v.f) for v in st.V}
    try:
        for f in moved:
            if (src.name, f) in taken:
                return None
            f2 = fresh_field_name(st.program.schema(dst.name), f)
            st = intro_field(st, dst.name, f2)
            v = ValueCorrespondence(src.name, dst.name, f, f2,
                                    tuple((q, theta[q]) for q in src.pk), "any")
            st = intro_vc(st, v, REDIRECT)
    except _FAILED:
        return None
    return st


def try_logging(st: RefactorState, txn: str, l1: str, l2: str,
                bounds: Bounds = Bounds()) -> Optional[RefactorState]:
    """Turn the pair's increment into an insert into a logging schema;
    succeeds only if the paired select is left without uses."""
    t = st.program.txn(txn)
    c1, c2 = find_command(t, l1), find_command(t, l2)
    kinds = {type(c1), type(c2)}
    if kinds != {Select, Update}:
        return None
    upd, sel = (c1, c2) if isinstance(c1, Update) else (c2, c1)
    canon = canonical_where(upd.where)

    def same_record(var):
        s = binding_select(t, var)
        return s is not None and s.schema == upd.schema and canonical_where(s.where) == canon

    candidates = []
    for f, e in upd.sets:
        m = increment_delta(e, same_record, f)
        if m is not None:
            candidates.append((m[0] != sel.var, f))
    if not candidates:
        return None
    f = min(candidates)[1]
    try:
        st2, _, v = make_logging_schema(st, upd.schema, f,
                                        bounds.domain_for(st.program.schema(upd.schema)))
        st2 = intro_vc(st2, v, LOGGER)
    except _FAILED:
        return None
    t2 = st2.program.txn(txn)
    s2 = find_command(t2, sel.label)
    if isinstance(s2, Select) and var_is_used(t2, s2.var):
        return None
    return st2


def _same_kind(c1, c2) -> bool:
    if isinstance(c1, Select) or isinstance(c2, Select):
        return isinstance(c1, Select) and isinstance(c2, Select)
    return True


def try_repair(st: RefactorState, pair: AccessPair, bounds: Bounds = Bounds()):
    """One repair attempt; returns (state or None, action)."""
    txn, l1 = _split_label(pair.c1)
    _, l2 = _split_label(pair.c2)
    t = st.program.txn(txn)
    c1, c2 = find_command(t, l1), find_command(t, l2)
    if c1 is None or c2 is None:
        return None, "gone"
    if c1.label == c2.label:
        return None, "already-merged"
    if _same_kind(c1, c2):
        if c1.schema == c2.schema:
            new = try_merging(st, txn, c1.label, c2.label)
            return new, "merge"
        red = try_redirect(st, txn, c1.label, c2.label)
        if red is None:
            return None, "redirect"
        t2 = red.program.txn(txn)
        n1, n2 = find_command(t2, l1), find_command(t2, l2)
        if n1 is not None and n2 is not None:
            merged = try_merging(red, txn, n1.label, n2.label)
            if merged is not None:
                return merged, "redirect+merge"
        return red, "redirect"
    return try_logging(st, txn, c1.label, c2.label, bounds), "logging"


# -- post-processing -------------------------------------------------------

def _dce(st: RefactorState) -> RefactorState:
    changed = True
    while changed:
        changed = False
        for t in st.program.transactions:
            for c in db_commands(t.body):
                if isinstance(c, Select) and not var_is_used(t, c.var):
                    st = eliminate_select(st, t.name, c.label)
                    changed = True
                    break
            if changed:
                break
    return st


def _merge_pass(st: RefactorState) -> RefactorState:
    changed = True
    while changed:
        changed = False
        for t in st.program.transactions:
            cmds = db_commands(t.body)
            for a, b in itertools.combinations(cmds, 2):
                if type(a) is not type(b) or isinstance(a, Insert) or a.schema != b.schema:
                    continue
                new = try_merging(st, t.name, a.label, b.label)
                if new is not None:
                    st, changed = new, True
                    break
            if changed:
                break
    return st


def post_process(st: RefactorState) -> RefactorState:
    return _dce(_merge_pass(_dce(st)))


# -- driver ----------------------------------------------------------------

@dataclass
class PairOutcome:
    pair: AccessPair
    action: str
    applied: bool

    def to_json(self):
        return {"pair": self.pair.to_json(), "action": self.action, "applied": self.applied}


@dataclass
class RepairReport:
    pairs_in: List[AccessPair] = field(default_factory=list)
    pairs_repaired: List[AccessPair] = field(default_factory=list)
    pairs_remaining: List[AccessPair] = field(default_factory=list)
    final_pairs: List[AccessPair] = field(default_factory=list)
    attempts: List[PairOutcome] = field(default_factory=list)
    steps: List[Step] = field(default_factory=list)
    capped: bool = False

    @property
    def serializable_txns(self) -> List[str]:
        """Transactions to run under serializable isolation instead."""
        return sorted({p.txn for p in self.final_pairs})

    def to_json(self, program_name: str = ""):
        return {
            "version": 1,
            "program": program_name,
            "capped": self.capped,
            "pairs_in": [p.to_json() for p in self.pairs_in],
            "pairs_repaired": [p.to_json() for p in self.pairs_repaired],
            "pairs_remaining": [p.to_json() for p in self.pairs_remaining],
            "final_pairs": [p.to_json() for p in self.final_pairs],
            "attempts": [a.to_json() for a in self.attempts],
            "steps": [s.to_json() for s in self.steps],
            "recommend_serializable": self.serializable_txns,
        }


@dataclass
class RepairResult:
    program: Program
    correspondences: Tuple[ValueCorrespondence, ...]
    report: RepairReport
    state: RefactorState


def _derives(label: str, original: str) -> bool:
    return any(q == original or q.startswith(original + ".") for q in label_parts(label))


def _still_present(pair: AccessPair, finals: Sequence[AccessPair]) -> bool:
    txn, a = _split_label(pair.c1)
    _, b = _split_label(pair.c2)
    for fp in finals:
        if fp.txn != txn:
            continue
        _, x = _split_label(fp.c1)
        _, y = _split_label(fp.c2)
        if (_derives(x, a) and _derives(y, b)) or (_derives(x, b) and _derives(y, a)):
            return True
    return False


def repair(p: Program, bounds: Bounds = Bounds(), jobs: int = 1,
           initial: Optional[DetectionReport] = None) -> RepairResult:
    """Detect, split, repair pair by pair, clean up, then re-detect to
    classify each input pair as repaired or remaining."""
    first = initial if initial is not None else detect(p, bounds, jobs=jobs)
    report = RepairReport(pairs_in=list(first.pairs), capped=first.capped)
    st = RefactorState(p)
    if not first.pairs:
        return RepairResult(p, (), report, st)
    st = preprocess_split(st, first.pairs)
    pairs = remap_split_pairs(first.pairs, st)
    for pr in sorted(pairs, key=lambda x: (x.txn, x.c1, x.c2, sorted(x.f1), sorted(x.f2))):
        new, action = try_repair(st, pr, bounds)
        report.attempts.append(PairOutcome(pr, action, new is not None))
        if new is not None:
            st = new
    st = post_process(st)
    final = detect(st.program, bounds, jobs=jobs)
    report.capped |= final.capped
    report.final_pairs = list(final.pairs)
    for pr in report.pairs_in:
        (report.pairs_remaining if _still_present(pr, final.pairs)
         else report.pairs_repaired).append(pr)
    report.steps = list(st.log)
    return RepairResult(st.program, st.V, report, st)
