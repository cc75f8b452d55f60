"""Operational semantics: expression evaluation, command steps, serial runs
and bounded enumeration of interleaved histories under weak visibility."""
from __future__ import annotations

import operator
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from .bounds import Bounds
from .dsl.ast import (
    ALIVE, Agg, Arg, At, BinArith, BoolOp, Command, Compare, Const, Expr, If,
    Insert, Iter, Iterate, Program, Select, Seq, Skip, Update, Uuid, Where,
    WhereAtom, full_label,
)
from .dsl.walk import desugar_insert, fields_of_where
from .store import (
    ABSENT, INIT_CMD, INIT_TXN, Catalog, DatabaseState, Event, RecordId,
    field_value, reconstruct_field,
)

ERROR = "error"


class InterpError(RuntimeError):
    pass


Row = Tuple[RecordId, Mapping[str, object]]
LocalStore = Mapping[str, Tuple[Row, ...]]

_CMP = {"<": operator.lt, "<=": operator.le, "=": operator.eq,
        ">": operator.gt, ">=": operator.ge}


def _num(v, what):
    if v is ABSENT:
        raise InterpError(f"{what} reads an absent field")
    return int(v)


def eval_expr(delta: LocalStore, args: Mapping[str, object], iter_value: Optional[int],
              e: Expr, uuid: Optional[Callable[[], int]] = None):
    """Evaluate ``e``; ``x.f`` means ``at^1(x.f)`` and indices are 1-based."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Arg):
        try:
            return args[e.name]
        except KeyError:
            raise InterpError(f"unbound parameter '{e.name}'") from None
    if isinstance(e, Iter):
        if iter_value is None:
            raise InterpError("'iter' outside of an iterate block")
        return iter_value
    if isinstance(e, Uuid):
        if uuid is None:
            raise InterpError("uuid() is not available here")
        return uuid()
    if isinstance(e, BinArith):
        lv = _num(eval_expr(delta, args, iter_value, e.left, uuid), e.op)
        rv = _num(eval_expr(delta, args, iter_value, e.right, uuid), e.op)
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if rv == 0:
            raise InterpError("division by zero")
        q = abs(lv) // abs(rv)
        return q if (lv >= 0) == (rv >= 0) else -q
    if isinstance(e, Compare):
        lv = eval_expr(delta, args, iter_value, e.left, uuid)
        rv = eval_expr(delta, args, iter_value, e.right, uuid)
        if lv is ABSENT or rv is ABSENT:
            return False
        return _CMP[e.op](lv, rv)
    if isinstance(e, BoolOp):
        lv = bool(eval_expr(delta, args, iter_value, e.left, uuid))
        rv = bool(eval_expr(delta, args, iter_value, e.right, uuid))
        return (lv and rv) if e.op == "and" else (lv or rv)
    if isinstance(e, Agg):
        rows = _binding(delta, e.var)
        vals = [_num(row[1].get(e.field, ABSENT), e.kind) for row in rows]
        if e.kind == "sum":
            return sum(vals)
        if not vals:
            raise InterpError(f"{e.kind} over an empty result")
        return min(vals) if e.kind == "min" else max(vals)
    if isinstance(e, At):
        rows = _binding(delta, e.var)
        k = _num(eval_expr(delta, args, iter_value, e.index, uuid), "at")
        if not 1 <= k <= len(rows):
            raise InterpError(f"at^{k}({e.var}.{e.field}) out of range ({len(rows)} records)")
        row = rows[k - 1][1]
        if e.field not in row:
            raise InterpError(f"variable '{e.var}' has no field '{e.field}'")
        return row[e.field]
    raise TypeError(f"not an expression: {e!r}")


def _binding(delta, var):
    try:
        return delta[var]
    except KeyError:
        raise InterpError(f"unbound variable '{var}'") from None


# -- where clauses ---------------------------------------------------------

def _bind_where(w: Where, ev: Callable[[Expr], object]):
    """Evaluate right-hand sides once (they never mention ``this``)."""
    if isinstance(w, WhereAtom):
        return (w.field, _CMP[w.op], ev(w.expr))
    return (w.op, _bind_where(w.left, ev), _bind_where(w.right, ev))


def _holds(bw, get) -> bool:
    if len(bw) == 3 and callable(bw[1]):
        fld, cmp, rhs = bw
        lhs = get(fld)
        if lhs is ABSENT or rhs is ABSENT:
            return False
        return bool(cmp(lhs, rhs))
    op, left, right = bw
    if op == "and":
        return _holds(left, get) and _holds(right, get)
    return _holds(left, get) or _holds(right, get)


def matching_records(view: DatabaseState, schema: str, bound_where, alive_only: bool):
    out = []
    for r in view.catalog.record_ids(schema):
        if alive_only and reconstruct_field(view, r, ALIVE) is not True:
            continue
        if _holds(bound_where, lambda f, r=r: field_value(view, r, f)):
            out.append(r)
    return out


# -- single steps ----------------------------------------------------------

@dataclass(frozen=True)
class StepContext:
    """Who is stepping: used for event provenance and evaluation."""
    txn: str = "t"
    label: str = "t/c"
    args: Mapping[str, object] = field(default_factory=dict)
    iter_value: Optional[int] = None


def _uuid_source(state: DatabaseState, schema: str):
    box = {"fresh": state.fresh}
    reserved = state.catalog.uuid_range(schema)

    def draw():
        i = box["fresh"]
        if i >= len(reserved):
            raise InterpError(f"uuid() space of {schema} exhausted")
        box["fresh"] = i + 1
        return reserved[i]
    return box, draw


def step_select(state: DatabaseState, delta: LocalStore, cmd: Select, view: DatabaseState,
                ctx: StepContext = StepContext()):
    """One select step; returns (new state, new local store)."""
    schema = state.catalog.schemas[cmd.schema]
    bw = _bind_where(cmd.where, lambda e: eval_expr(delta, ctx.args, ctx.iter_value, e))
    hits = matching_records(view, cmd.schema, bw, alive_only=True)
    fields = schema.fields if cmd.is_star else cmd.fields
    rows = tuple((r, {f: field_value(view, r, f) for f in fields}) for r in hits)
    tau = state.cnt
    scan_fields = sorted(fields_of_where(cmd.where) | {ALIVE})
    new = [Event("rd", tau, r, f, None, ctx.txn, ctx.label)
           for r in state.catalog.record_ids(cmd.schema) for f in scan_fields]
    new += [Event("rd", tau, r, f, None, ctx.txn, ctx.label) for r in hits for f in fields]
    new_delta = dict(delta)
    new_delta[cmd.var] = rows
    return state.extend(new, view.events), new_delta


def step_update(state: DatabaseState, delta: LocalStore, cmd, view: DatabaseState,
                ctx: StepContext = StepContext()) -> DatabaseState:
    """One update (or desugared insert) step."""
    schema = state.catalog.schemas[cmd.schema]
    if isinstance(cmd, Insert):
        cmd = desugar_insert(cmd, schema)
    box, draw = _uuid_source(state, cmd.schema)
    ev = lambda e: eval_expr(delta, ctx.args, ctx.iter_value, e, draw)  # noqa: E731
    bw = _bind_where(cmd.where, ev)
    values = [(f, ev(e)) for f, e in cmd.sets]
    hits = matching_records(view, cmd.schema, bw, alive_only=False)
    tau = state.cnt
    new = [Event("wr", tau, r, f, v, ctx.txn, ctx.label) for r in hits for f, v in values]
    return state.extend(new, view.events, fresh=box["fresh"])


# -- seeds -----------------------------------------------------------------

def make_catalog(p: Program, bounds: Bounds = Bounds()) -> Catalog:
    return Catalog(p.schemas, {s.name: bounds.domain_for(s) for s in p.schemas})


def seed_state(catalog: Catalog, records: Mapping[RecordId, Mapping[str, object]]) -> DatabaseState:
    """State whose only events are timestamp-0 writes making ``records`` alive."""
    evs = []
    for r, vals in records.items():
        evs.append(Event("wr", 0, r, ALIVE, True, INIT_TXN, INIT_CMD))
        pk = catalog.schemas[r.schema].pk
        for f, v in vals.items():
            if f not in pk:
                evs.append(Event("wr", 0, r, f, v, INIT_TXN, INIT_CMD))
    return DatabaseState(frozenset(evs), {}, 1, 0, catalog)


def default_seed(catalog: Catalog) -> DatabaseState:
    """Every record of every non-log schema alive with all fields 0."""
    records = {}
    for name, s in catalog.schemas.items():
        if s.log:
            continue
        for r in catalog.record_ids(name):
            records[r] = {f: 0 for f in s.nonpk}
    return seed_state(catalog, records)


# -- transaction instances -------------------------------------------------

@dataclass(frozen=True)
class TxnInstance:
    id: int
    name: str
    args: Tuple[Tuple[str, object], ...]
    todo: Tuple[Tuple[Command, Optional[int]], ...]
    ret: Expr
    delta: Mapping[str, Tuple[Row, ...]] = field(default_factory=dict, compare=False)
    result: object = None
    error: Optional[str] = None

    @property
    def tag(self) -> str:
        return f"{self.name}#{self.id}"

    @property
    def finished(self) -> bool:
        return self.result is not None

    @property
    def argmap(self):
        return dict(self.args)

    def next_command(self):
        return self.todo[0] if self.todo else None


def _fail(inst: TxnInstance, exc: Exception, strict: bool) -> TxnInstance:
    if strict:
        raise InterpError(f"{inst.tag}: {exc}") from exc
    return replace(inst, todo=(), result=ERROR, error=str(exc))


def advance_local(inst: TxnInstance, strict: bool = False) -> TxnInstance:
    """Run control-flow steps until the next database command or the return."""
    todo = list(inst.todo)
    args = inst.argmap
    try:
        while todo:
            c, it = todo[0]
            if isinstance(c, (Select, Update, Insert)):
                return replace(inst, todo=tuple(todo))
            todo.pop(0)
            if isinstance(c, Seq):
                todo[0:0] = [(sub, it) for sub in c.cmds]
            elif isinstance(c, If):
                if eval_expr(inst.delta, args, it, c.cond):
                    todo.insert(0, (c.body, it))
            elif isinstance(c, Iterate):
                n = _num(eval_expr(inst.delta, args, it, c.count), "iterate")
                todo[0:0] = [(c.body, k) for k in range(1, n + 1)]
            elif not isinstance(c, Skip):
                raise TypeError(f"unexpected command {c!r}")
        value = eval_expr(inst.delta, args, None, inst.ret)
        if value is ABSENT:
            raise InterpError("return value reads an absent field")
    except InterpError as exc:
        return _fail(inst, exc, strict)
    return replace(inst, todo=(), result=value)


def start_instance(p: Program, iid: int, name: str, args: Sequence[object],
                   strict: bool = False) -> TxnInstance:
    t = p.txn(name)
    if len(args) != len(t.params):
        raise InterpError(f"{name} expects {len(t.params)} argument(s), got {len(args)}")
    inst = TxnInstance(iid, name, tuple(zip(t.params, args)), ((t.body, None),), t.ret)
    return advance_local(inst, strict)


def db_step(state: DatabaseState, inst: TxnInstance, view: DatabaseState,
            strict: bool = False) -> Tuple[DatabaseState, TxnInstance]:
    """Execute the instance's pending database command against ``view``."""
    c, it = inst.todo[0]
    ctx = StepContext(inst.tag, full_label(inst.name, c.label), inst.argmap, it)
    try:
        if isinstance(c, Select):
            state, delta = step_select(state, inst.delta, c, view, ctx)
        else:
            state = step_update(state, inst.delta, c, view, ctx)
            delta = inst.delta
    except InterpError as exc:
        # the failing command still consumes a timestamp so the step is visible
        return state.extend((), view.events), _fail(inst, exc, strict)
    inst = replace(inst, todo=inst.todo[1:], delta=delta)
    return state, advance_local(inst, strict)


# -- histories -------------------------------------------------------------

@dataclass(frozen=True)
class Config:
    state: DatabaseState
    instances: Tuple[TxnInstance, ...]


@dataclass(frozen=True)
class HistoryStep:
    before: Config
    kind: str            # "select" | "update"
    actor: int           # instance id
    view_index: int
    label: str
    view: FrozenSet[Event] = field(repr=False, default=frozenset())


@dataclass(frozen=True)
class History:
    steps: Tuple[HistoryStep, ...]
    final: Config

    @property
    def schedule(self) -> str:
        return " ".join(f"{s.actor}:{s.view_index}" for s in self.steps)

    def outcomes(self):
        """Sorted (txn, args, return value) triples of finalized instances."""
        return tuple(sorted(((i.name, tuple(v for _, v in i.args), i.result)
                             for i in self.final.instances), key=repr))

    def __len__(self):
        return len(self.steps)


Workload = Sequence[Tuple[str, Tuple[object, ...]]]


@dataclass
class EnumStats:
    histories: int = 0
    schedule_capped: bool = False
    view_capped_steps: int = 0
    step_capped: int = 0

    @property
    def capped(self) -> bool:
        return self.schedule_capped or self.view_capped_steps > 0 or self.step_capped > 0

    def merge(self, other: "EnumStats"):
        self.histories += other.histories
        self.schedule_capped |= other.schedule_capped
        self.view_capped_steps += other.view_capped_steps
        self.step_capped += other.step_capped


def _step_kind(c) -> str:
    return "select" if isinstance(c, Select) else "update"


def _subset_order(k: int) -> List[int]:
    """Bitmasks over k groups (bit i = i-th oldest): timestamp prefixes from
    the full set downward first, then the remaining subsets, largest first."""
    prefixes = [(1 << n) - 1 for n in range(k, -1, -1)]
    seen = set(prefixes)
    rest = [m for m in range((1 << k) - 1, -1, -1) if m not in seen]
    return prefixes + rest


def candidate_views(state: DatabaseState, inst: TxnInstance, cap: int):
    """Local views offered to ``inst``'s next step.

    Always visible: seed events, the instance's own events and other
    instances' reads. Other instances' writes are chosen per
    (record, timestamp) group. Returns (views, capped).
    """
    base, grouped = [], {}
    tag = inst.tag
    for e in state.events:
        if e.txn == tag or e.txn == INIT_TXN or e.kind == "rd":
            base.append(e)
        else:
            grouped.setdefault((e.tau, e.r.schema, e.r.key), []).append(e)
    base = frozenset(base)
    keys = sorted(grouped)
    masks = _subset_order(len(keys))
    capped = len(masks) > cap
    views = []
    for m in masks[:cap]:
        chosen = [e for i, k in enumerate(keys) if m >> i & 1 for e in grouped[k]]
        views.append(base.union(chosen) if chosen else base)
    return views, capped


def initial_config(p: Program, workload: Workload, init: DatabaseState,
                   strict: bool = False) -> Config:
    insts = tuple(start_instance(p, i, name, tuple(args), strict)
                  for i, (name, args) in enumerate(workload))
    return Config(init, insts)


def _apply(config: Config, actor: int, view_events, view_index: int, strict=False):
    inst = config.instances[actor]
    c, _ = inst.todo[0]
    view = config.state.restrict(view_events)
    state, inst2 = db_step(config.state, inst, view, strict)
    insts = config.instances[:actor] + (inst2,) + config.instances[actor + 1:]
    step = HistoryStep(config, _step_kind(c), actor, view_index,
                       full_label(inst.name, c.label), view_events)
    return Config(state, insts), step


def run_serial(p: Program, workload: Workload, init: Optional[DatabaseState] = None,
               bounds: Bounds = Bounds()) -> History:
    """Run each invocation to completion in order, always reading the full store."""
    if init is None:
        init = default_seed(make_catalog(p, bounds))
    config = initial_config(p, workload, init, strict=True)
    steps = []
    for actor in range(len(config.instances)):
        while not config.instances[actor].finished:
            config, step = _apply(config, actor, config.state.events, 0, strict=True)
            steps.append(step)
    return History(tuple(steps), config)


def enumerate_histories(p: Program, workload: Workload, bounds: Bounds = Bounds(),
                        init: Optional[DatabaseState] = None,
                        stats: Optional[EnumStats] = None) -> Iterator[History]:
    """Yield complete histories over all interleavings and view choices.

    Order is deterministic: depth-first by instance id, then view index.
    Caps are recorded in ``stats`` rather than raised.
    """
    if init is None:
        init = default_seed(make_catalog(p, bounds))
    if stats is None:
        stats = EnumStats()
    root = initial_config(p, workload, init)
    path: List[HistoryStep] = []

    def dfs(config: Config):
        if stats.histories >= bounds.schedule_cap:
            stats.schedule_capped = True
            return
        runnable = [i for i, inst in enumerate(config.instances) if not inst.finished]
        if not runnable:
            stats.histories += 1
            yield History(tuple(path), config)
            return
        if len(path) >= bounds.max_steps:
            stats.step_capped += 1
            return
        for actor in runnable:
            views, capped = candidate_views(config.state, config.instances[actor],
                                            bounds.max_views_per_step)
            if capped:
                stats.view_capped_steps += 1
            for vi, view_events in enumerate(views):
                if stats.histories >= bounds.schedule_cap:
                    stats.schedule_capped = True
                    return
                child, step = _apply(config, actor, view_events, vi)
                path.append(step)
                yield from dfs(child)
                path.pop()

    yield from dfs(root)


def parse_schedule(text: str) -> List[Tuple[int, int]]:
    out = []
    for tok in text.split():
        a, _, v = tok.partition(":")
        try:
            out.append((int(a), int(v or 0)))
        except ValueError:
            raise InterpError(f"bad schedule entry '{tok}' (expected actor:view)") from None
    return out


def replay(p: Program, workload: Workload, schedule, bounds: Bounds = Bounds(),
           init: Optional[DatabaseState] = None) -> History:
    """Re-execute one history from its ``actor:view`` schedule."""
    if isinstance(schedule, str):
        schedule = parse_schedule(schedule)
    if init is None:
        init = default_seed(make_catalog(p, bounds))
    config = initial_config(p, workload, init)
    steps = []
    for actor, vi in schedule:
        if not 0 <= actor < len(config.instances) or config.instances[actor].finished:
            raise InterpError(f"schedule names instance {actor}, which cannot step")
        views, _ = candidate_views(config.state, config.instances[actor],
                                   bounds.max_views_per_step)
        if not 0 <= vi < len(views):
            raise InterpError(f"view index {vi} out of range for instance {actor}")
        config, step = _apply(config, actor, views[vi], vi)
        steps.append(step)
    if any(not i.finished for i in config.instances):
        raise InterpError("schedule ends before every instance finished")
    return History(tuple(steps), config)


def sample_history(p: Program, workload: Workload, rng, bounds: Bounds = Bounds(),
                   init: Optional[DatabaseState] = None) -> History:
    """One history picked by a random walk: ``rng`` (a ``random.Random``)
    chooses the next instance and its view at each step."""
    if init is None:
        init = default_seed(make_catalog(p, bounds))
    config = initial_config(p, workload, init)
    steps = []
    while True:
        runnable = [i for i, inst in enumerate(config.instances) if not inst.finished]
        if not runnable:
            return History(tuple(steps), config)
        actor = rng.choice(runnable)
        views, _ = candidate_views(config.state, config.instances[actor],
                                   bounds.max_views_per_step)
        vi = rng.randrange(len(views))
        config, step = _apply(config, actor, views[vi], vi)
        steps.append(step)
