"""Program rewrites driven by value correspondences.

Every primitive here is a pure function ``RefactorState -> RefactorState``
that appends one ``Step`` to the state's log, so a log can be replayed
against the original program to rebuild the same result.

A rewrite that does not apply raises ``RewriteUndefined``; the caller
keeps its previous state. Violated preconditions (duplicate names and the
like) raise ``RefactorError``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

from ..dsl.ast import (
    ALIVE, Agg, At, BinArith, Command, Const, Expr, If, Insert, Iterate, Program,
    Schema, Select, Seq, Skip, Transaction, Update, Uuid, Where, WhereAtom,
    label_parts,
)
from ..dsl.printer import expr_str
from ..dsl.walk import (
    conjoin, conjuncts, db_commands, fields_of_where, iter_commands, map_commands,
    map_expr, map_where, pk_equalities, vars_used,
)
from ..valuecorr import ValueCorrespondence

REDIRECT = "redirect"
LOGGER = "logger"
LOG_DOMAIN_MIN = 16


class RefactorError(ValueError):
    pass


class RewriteUndefined(Exception):
    """The rewrite has no result for this program; nothing was changed."""


@dataclass(frozen=True)
class Step:
    kind: str
    args: tuple

    def to_json(self):
        out = {"step": self.kind}
        if self.kind == "intro-schema":
            out.update(schema=self.args[0], domain=self.args[1], log=self.args[2])
        elif self.kind == "intro-field":
            out.update(schema=self.args[0], field=self.args[1], key=self.args[2])
        elif self.kind == "intro-vc":
            out.update(correspondence=str(self.args[0]), mode=self.args[1])
        else:
            out.update(txn=self.args[0], labels=list(self.args[1:]))
        return out

    def __str__(self):
        if self.kind == "intro-vc":
            return f"intro-vc {self.args[1]} {self.args[0]}"
        return f"{self.kind} " + " ".join(str(a) for a in self.args)


@dataclass(frozen=True)
class RefactorState:
    program: Program
    V: Tuple[ValueCorrespondence, ...] = ()
    log: Tuple[Step, ...] = ()

    def _with(self, step: Step, program: Program = None, V=None) -> "RefactorState":
        return RefactorState(program if program is not None else self.program,
                             tuple(V) if V is not None else self.V,
                             self.log + (step,))


# -- small program surgery -------------------------------------------------

def _replace_schema(p: Program, s: Schema) -> Program:
    return replace(p, schemas=tuple(s if x.name == s.name else x for x in p.schemas))


def _replace_txn(p: Program, t: Transaction) -> Program:
    return replace(p, transactions=tuple(t if x.name == t.name else x for x in p.transactions))


def find_command(t: Transaction, label: str) -> Optional[Command]:
    """The database command of ``t`` carrying ``label`` or derived from it
    (primed, merged or split)."""
    for c in db_commands(t.body):
        if c.label == label:
            return c
    want = label_parts(label)
    for c in db_commands(t.body):
        parts = label_parts(c.label)
        if all(w in parts for w in want):
            return c
    return None


def bindings(t: Transaction) -> Dict[str, str]:
    """var -> schema of the select binding it. Rebinding to a different
    schema makes the var ambiguous (mapped to None)."""
    out: Dict[str, Optional[str]] = {}
    for c in db_commands(t.body):
        if isinstance(c, Select):
            if c.var in out and out[c.var] != c.schema:
                out[c.var] = None
            else:
                out[c.var] = c.schema
    return out


def binding_select(t: Transaction, var: str) -> Optional[Select]:
    found = [c for c in db_commands(t.body) if isinstance(c, Select) and c.var == var]
    return found[0] if len(found) == 1 else None


def map_command_exprs(c: Command, fn: Callable[[Expr], Expr]) -> Command:
    """Apply ``fn`` to every expression in a command tree."""
    def where(w: Where) -> Where:
        return map_where(w, lambda a: WhereAtom(a.field, a.op, fn(a.expr), pos=a.pos))

    if isinstance(c, Select):
        return replace(c, where=where(c.where))
    if isinstance(c, Update):
        return replace(c, sets=tuple((f, fn(e)) for f, e in c.sets), where=where(c.where))
    if isinstance(c, Insert):
        return replace(c, values=tuple((f, fn(e)) for f, e in c.values))
    if isinstance(c, If):
        return If(fn(c.cond), map_command_exprs(c.body, fn), pos=c.pos)
    if isinstance(c, Iterate):
        return Iterate(fn(c.count), map_command_exprs(c.body, fn), pos=c.pos)
    if isinstance(c, Seq):
        return Seq(tuple(map_command_exprs(x, fn) for x in c.cmds), pos=c.pos)
    return c


def all_exprs(t: Transaction) -> List[Expr]:
    out = []

    def grab(e):
        out.append(e)
        return e
    map_command_exprs(t.body, grab)
    out.append(t.ret)
    return out


def var_is_used(t: Transaction, var: str) -> bool:
    return any(var in vars_used(e) for e in all_exprs(t))


def canonical_where(w: Where) -> str:
    """Order-insensitive text of a conjunction; plain text otherwise."""
    atoms = conjuncts(w)
    if atoms is None:
        from ..dsl.printer import where_str
        return where_str(w)
    return " and ".join(sorted({f"{a.field} {a.op} {expr_str(a.expr)}" for a in atoms}))


# -- intro rules -----------------------------------------------------------

def intro_schema(st: RefactorState, name: str, key_domain: Optional[int] = None,
                 log: bool = False) -> RefactorState:
    if st.program.has_schema(name):
        raise RefactorError(f"schema '{name}' already exists")
    p = replace(st.program, schemas=st.program.schemas + (Schema(name, (), (), key_domain, log),))
    return st._with(Step("intro-schema", (name, key_domain, log)), p)


def intro_field(st: RefactorState, schema: str, f: str, is_pk: bool = False) -> RefactorState:
    try:
        s = st.program.schema(schema)
    except KeyError:
        raise RefactorError(f"unknown schema '{schema}'") from None
    if f in s.fields or f == ALIVE:
        raise RefactorError(f"{schema} already has a field '{f}'")
    s2 = replace(s, fields=s.fields + (f,), pk=s.pk + ((f,) if is_pk else ()))
    return st._with(Step("intro-field", (schema, f, is_pk)), _replace_schema(st.program, s2))


def fresh_field_name(schema: Schema, f: str) -> str:
    """Name for ``f`` moved into ``schema``, using the schema's field prefix
    (``st_`` for STUDENT) when all its fields share one."""
    prefix = schema.fields[0].split("_", 1)[0] + "_" if schema.fields and "_" in schema.fields[0] else ""
    if not prefix or not all(x.startswith(prefix) for x in schema.fields):
        prefix = schema.name.lower() + "_"
    base = f if f.startswith(prefix) else prefix + f
    name, n = base, 2
    while name in schema.fields:
        name, n = f"{base}_{n}", n + 1
    return name


def make_logging_schema(st: RefactorState, schema: str, f: str, source_domain: int = 2):
    """New append-only schema holding deltas of ``schema.f``; returns the
    state, the schema name and the ``sum`` correspondence for it."""
    src = st.program.schema(schema)
    base = f"{schema}_{f.upper()}_LOG"
    name, n = base, 2
    while st.program.has_schema(name):
        name, n = f"{base}_{n}", n + 1
    st = intro_schema(st, name, max(LOG_DOMAIN_MIN, 4 * source_domain), log=True)
    for p in src.pk:
        st = intro_field(st, name, p, is_pk=True)
    log_id = "log_id"
    while log_id in src.pk:
        log_id += "_"
    st = intro_field(st, name, log_id, is_pk=True)
    st = intro_field(st, name, f"{f}_log")
    v = ValueCorrespondence(schema, name, f, f"{f}_log", tuple((p, p) for p in src.pk), "sum")
    return st, name, v


# -- rewriting under one correspondence ------------------------------------

def redirect_where(where: Where, v: ValueCorrespondence, src: Schema) -> Optional[Where]:
    """Re-key a pk-equality where clause of the source schema onto the
    target's theta fields; None when the clause does not pin the key."""
    eqs = pk_equalities(where, src.pk)
    if eqs is None:
        return None
    th = v.theta_map
    return conjoin(WhereAtom(th[p], "=", eqs[p]) for p in src.pk)


@dataclass
class _Ctx:
    v: ValueCorrespondence
    mode: str
    src: Schema
    dst: Schema
    binds: Dict[str, str]
    # selects redirected in logger mode whose at^1 reads became sums
    txn: Transaction = None


def _rewrite_expr(e: Expr, cx: _Ctx) -> Expr:
    v = cx.v

    def fn(x):
        if isinstance(x, At) and x.field == v.f and cx.binds.get(x.var) == v.src:
            if x.index != Const(1):
                raise RewriteUndefined(f"indexed read at({expr_str(x.index)}, {x.var}.{x.field})")
            if cx.mode == REDIRECT:
                return At(Const(1), x.var, v.f2, pos=x.pos)
            return Agg("sum", x.var, v.f2, pos=x.pos)
        if isinstance(x, Agg) and x.field == v.f and cx.binds.get(x.var) == v.src:
            if cx.mode == LOGGER and x.kind == "sum":
                return Agg("sum", x.var, v.f2, pos=x.pos)
            raise RewriteUndefined(f"aggregate {x.kind}({x.var}.{x.field}) over a moved field")
        if isinstance(x, (At, Agg)) and cx.binds.get(x.var, "") is None:
            raise RewriteUndefined(f"variable '{x.var}' is bound to several schemas")
        return None
    return map_expr(e, fn)


def _rewrite_where_exprs(w: Where, cx: _Ctx) -> Where:
    return map_where(w, lambda a: WhereAtom(a.field, a.op, _rewrite_expr(a.expr, cx), pos=a.pos))


def increment_delta(e: Expr, var_ok: Callable[[str], bool], f: str) -> Optional[Tuple[str, Expr]]:
    """Match ``at^1(x.f) + d``, ``d + at^1(x.f)`` or ``at^1(x.f) - d``;
    returns (x, signed delta)."""
    if not isinstance(e, BinArith) or e.op not in "+-":
        return None

    def is_read(x):
        return isinstance(x, At) and x.field == f and x.index == Const(1) and var_ok(x.var)

    if is_read(e.left):
        d = e.right
        if e.op == "-":
            d = Const(-d.value) if isinstance(d, Const) and not isinstance(d.value, bool) \
                else BinArith("-", Const(0), d)
        return e.left.var, d
    if e.op == "+" and is_read(e.right):
        return e.right.var, e.left
    return None


def _rewrite_update(c: Update, cx: _Ctx) -> Command:
    v = cx.v
    set_fields = [f for f, _ in c.sets]
    if c.schema == v.src:
        if ALIVE in set_fields:
            raise RewriteUndefined(f"{c.label} creates or deletes {v.src} records")
        if v.f in fields_of_where(c.where):
            raise RewriteUndefined(f"{c.label} filters on the moved field {v.f}")
    if c.schema != v.src or v.f not in set_fields:
        return replace(c, sets=tuple((f, _rewrite_expr(e, cx)) for f, e in c.sets),
                       where=_rewrite_where_exprs(c.where, cx))
    new_where = redirect_where(c.where, v, cx.src)
    if new_where is None:
        raise RewriteUndefined(f"{c.label}: where clause does not pin the key of {v.src}")
    new_where = _rewrite_where_exprs(new_where, cx)
    expr = dict(c.sets)[v.f]
    if cx.mode == REDIRECT:
        moved = Update(v.dst, ((v.f2, _rewrite_expr(expr, cx)),), new_where, c.label + "'")
    else:
        canon = canonical_where(c.where)

        def same_record(var):
            sel = binding_select(cx.txn, var)
            return (sel is not None and sel.schema == v.src
                    and canonical_where(sel.where) == canon)
        m = increment_delta(expr, same_record, v.f)
        if m is None:
            raise RewriteUndefined(f"{c.label}: {v.f} is not updated by an increment")
        delta = _rewrite_expr(m[1], cx)
        eqs = pk_equalities(c.where, cx.src.pk)
        th = v.theta_map
        values = []
        for q in cx.dst.pk:
            p = next((p for p, q2 in th.items() if q2 == q), None)
            values.append((q, _rewrite_expr(eqs[p], cx) if p is not None else Uuid()))
        for q in cx.dst.nonpk:
            p = next((p for p, q2 in th.items() if q2 == q), None)
            if p is not None:
                values.append((q, _rewrite_expr(eqs[p], cx)))
        values.append((v.f2, delta))
        moved = Insert(v.dst, tuple(values), c.label + "'")
    rest = tuple((f, _rewrite_expr(e, cx)) for f, e in c.sets if f != v.f)
    if not rest:
        return moved
    kept = replace(c, sets=rest, where=_rewrite_where_exprs(c.where, cx))
    return Seq((kept, moved))


def _rewrite_select(c: Select, cx: _Ctx) -> Command:
    v = cx.v
    reads_f = c.schema == v.src and (c.is_star or v.f in c.fields)
    if c.schema == v.src and v.f in fields_of_where(c.where):
        raise RewriteUndefined(f"{c.label} filters on the moved field {v.f}")
    if not reads_f:
        return replace(c, where=_rewrite_where_exprs(c.where, cx))
    if c.is_star or tuple(c.fields) != (v.f,):
        raise RewriteUndefined(f"{c.label} reads {v.f} together with other fields")
    new_where = redirect_where(c.where, v, cx.src)
    if new_where is None:
        raise RewriteUndefined(f"{c.label}: where clause does not pin the key of {v.src}")
    return Select(c.var, (v.f2,), v.dst, _rewrite_where_exprs(new_where, cx), c.label + "'")


def _rewrite(c: Command, cx: _Ctx) -> Command:
    if isinstance(c, Seq):
        out = []
        for x in c.cmds:
            new = _rewrite(x, cx)
            if isinstance(new, Seq) and not isinstance(x, Seq):
                out.extend(new.cmds)
            else:
                out.append(new)
        return Seq(tuple(out), pos=c.pos)
    if isinstance(c, Skip):
        return c
    if isinstance(c, If):
        return If(_rewrite_expr(c.cond, cx), _rewrite(c.body, cx), pos=c.pos)
    if isinstance(c, Iterate):
        return Iterate(_rewrite_expr(c.count, cx), _rewrite(c.body, cx), pos=c.pos)
    if isinstance(c, Select):
        return _rewrite_select(c, cx)
    if isinstance(c, Update):
        return _rewrite_update(c, cx)
    if isinstance(c, Insert):
        if c.schema == cx.v.src:
            raise RewriteUndefined(f"{c.label} inserts into {cx.v.src}")
        return replace(c, values=tuple((f, _rewrite_expr(e, cx)) for f, e in c.values))
    raise TypeError(c)


def rewrite_command(c: Command, v: ValueCorrespondence, mode: str, program: Program,
                    txn: Transaction) -> Command:
    """Rewrite one command (tree) of ``txn`` under ``v``. Raises
    RewriteUndefined when the rewrite does not apply."""
    cx = _Ctx(v, mode, program.schema(v.src), program.schema(v.dst), bindings(txn), txn)
    return _rewrite(c, cx)


def rewrite_transaction(t: Transaction, v: ValueCorrespondence, mode: str,
                        program: Program) -> Transaction:
    cx = _Ctx(v, mode, program.schema(v.src), program.schema(v.dst), bindings(t), t)
    return replace(t, body=_rewrite(t.body, cx), ret=_rewrite_expr(t.ret, cx))


def _check_vc(st: RefactorState, v: ValueCorrespondence, mode: str):
    p = st.program
    if mode not in (REDIRECT, LOGGER):
        raise RefactorError(f"unknown rewrite mode '{mode}'")
    for name, f in ((v.src, v.f), (v.dst, v.f2)):
        if not p.has_schema(name) or f not in p.schema(name).fields:
            raise RefactorError(f"{v}: {name}.{f} does not exist")
    if v.src == v.dst:
        raise RefactorError(f"{v}: source and target schema coincide")
    src, dst = p.schema(v.src), p.schema(v.dst)
    if v.f in src.pk:
        raise RefactorError(f"{v}: cannot move a key field")
    if set(v.theta_map) != set(src.pk) or any(q not in dst.fields for q in v.theta_map.values()):
        raise RefactorError(f"{v}: theta must map every key field of {v.src} to a field of {v.dst}")
    if (mode == LOGGER) != (v.agg == "sum"):
        raise RefactorError(f"{v}: {mode} mode needs {'sum' if mode == LOGGER else 'any'}")
    for w in st.V:
        if w == v:
            raise RefactorError(f"{v} is already introduced")
        if (w.src, w.f) == (v.src, v.f) or (w.dst, w.f2) == (v.dst, v.f2):
            raise RefactorError(f"{v} shares a field with {w}")
        if (w.dst, w.f2) == (v.src, v.f) or (w.src, w.f) == (v.dst, v.f2):
            raise RefactorError(f"{v} chains with {w}")
    for t in p.transactions:
        for c in db_commands(t.body):
            if c.schema == v.dst and v.f2 in _named_fields(c):
                raise RefactorError(f"{v}: target field {v.f2} is already in use")


def _named_fields(c: Command):
    """Fields a command names explicitly (``*`` names none)."""
    if isinstance(c, Select):
        return (set() if c.is_star else set(c.fields)) | fields_of_where(c.where)
    if isinstance(c, Update):
        return {f for f, _ in c.sets} | fields_of_where(c.where)
    return {f for f, _ in c.values}


def intro_vc(st: RefactorState, v: ValueCorrespondence, mode: str = REDIRECT) -> RefactorState:
    """Add ``v`` and rewrite every transaction under it."""
    _check_vc(st, v, mode)
    p = st.program
    txns = tuple(rewrite_transaction(t, v, mode, p) for t in p.transactions)
    return st._with(Step("intro-vc", (v, mode)), replace(p, transactions=txns), st.V + (v,))


# -- structural steps: split, merge, dead-select elimination ---------------

def split_update(st: RefactorState, txn: str, label: str) -> RefactorState:
    """Split a multi-field update into single-field updates ``label.1``,
    ``label.2`` ... in set order."""
    t = st.program.txn(txn)
    c = find_command(t, label)
    if not isinstance(c, Update) or len(c.sets) < 2:
        raise RefactorError(f"{txn}/{label} is not a multi-field update")
    parts = tuple(replace(c, sets=(s,), label=f"{c.label}.{i}")
                  for i, s in enumerate(c.sets, 1))

    def fn(x):
        return Seq(parts) if x is c or (isinstance(x, Update) and x.label == c.label) else None
    t2 = replace(t, body=map_commands(t.body, fn))
    return st._with(Step("split", (txn, c.label)), _replace_txn(st.program, t2))


def _locate(body: Command, l1: str, l2: str):
    """The Seq holding commands labelled l1 and l2 as direct children,
    with their indices."""
    for node in iter_commands(body):
        if isinstance(node, Seq):
            labels = [getattr(x, "label", None) for x in node.cmds]
            if l1 in labels and l2 in labels:
                return node, labels.index(l1), labels.index(l2)
    return None


def _accesses_schema(c: Command, schema: str) -> bool:
    return any(x.schema == schema for x in db_commands(c))


def _writes_field(c: Command, schema: str, f: str) -> bool:
    for x in db_commands(c):
        if x.schema != schema:
            continue
        if isinstance(x, Update) and f in dict(x.sets):
            return True
        if isinstance(x, Insert):
            return True
    return False


def _bound_vars(c: Command):
    return {x.var for x in db_commands(c) if isinstance(x, Select)}


def merge_plan(t: Transaction, c1: Command, c2: Command) -> Optional[str]:
    """Why the two commands select the same records, or None.

    ``same-where``: the where clauses are equal after canonicalization.
    ``anchor``: the later clause is ``this.g = x.g`` where ``x`` was
    selected from the same schema by a clause equal to the earlier one.
    ``set-anchor``: the earlier update sets ``g = e`` and the later one
    filters on ``this.g = e``.
    """
    if canonical_where(c1.where) == canonical_where(c2.where):
        return "same-where"
    atoms = conjuncts(c2.where)
    if atoms is None or len(atoms) != 1 or atoms[0].op != "=":
        return None
    a = atoms[0]
    e = a.expr
    if isinstance(e, At) and e.index == Const(1) and e.field == a.field:
        sel = binding_select(t, e.var)
        if (sel is not None and sel.schema == c1.schema
                and (sel.is_star or a.field in sel.fields)
                and canonical_where(sel.where) == canonical_where(c1.where)):
            # the anchor field must not change between the select and c2
            order = [x.label for x in db_commands(t.body)]
            i, j = order.index(sel.label), order.index(c2.label)
            between = [x for x in db_commands(t.body) if order.index(x.label) in range(i + 1, j)]
            if not any(_writes_field(x, c1.schema, a.field) for x in between):
                return "anchor"
    if isinstance(c1, Update) and dict(c1.sets).get(a.field) == e:
        return "set-anchor"
    return None


def merge_commands(st: RefactorState, txn: str, l1: str, l2: str) -> RefactorState:
    """Fuse two commands on the same schema into one at the earlier one's
    position. Raises RewriteUndefined when it cannot be shown safe."""
    t = st.program.txn(txn)
    c1, c2 = find_command(t, l1), find_command(t, l2)
    if c1 is None or c2 is None or c1 is c2 or c1.label == c2.label:
        raise RewriteUndefined("commands not found")
    if type(c1) is not type(c2) or isinstance(c1, Insert) or c1.schema != c2.schema:
        raise RewriteUndefined(f"{c1.label} and {c2.label} are not the same kind on one schema")
    loc = _locate(t.body, c1.label, c2.label)
    if loc is None:
        raise RewriteUndefined(f"{c1.label} and {c2.label} are not in the same block")
    block, i, j = loc
    if i > j:
        c1, c2, i, j = c2, c1, j, i
    between = block.cmds[i + 1:j]
    if any(_accesses_schema(x, c1.schema) for x in between):
        raise RewriteUndefined(f"a command between {c1.label} and {c2.label} touches {c1.schema}")
    used = set()
    for e in _direct_exprs(c2):
        used |= vars_used(e)
    if any(used & _bound_vars(x) for x in between):
        raise RewriteUndefined(f"{c2.label} depends on a variable bound in between")
    plan = merge_plan(t, c1, c2)
    if plan is None:
        raise RewriteUndefined(f"cannot show {c1.label} and {c2.label} select the same records")
    label = f"{c1.label}+{c2.label}"
    if isinstance(c1, Update):
        f1 = {f for f, _ in c1.sets}
        if any(f in f1 for f, _ in c2.sets):
            raise RewriteUndefined(f"{c1.label} and {c2.label} set the same field")
        merged = replace(c1, sets=c1.sets + c2.sets, label=label)
    else:
        if c1.is_star or c2.is_star:
            fields = ("*",)
        else:
            fields = c1.fields + tuple(f for f in c2.fields if f not in c1.fields)
        merged = replace(c1, fields=fields, label=label)
    cmds = list(block.cmds)
    cmds[i] = merged
    del cmds[j]
    new_block = Seq(tuple(cmds), pos=block.pos)
    body = _replace_node(t.body, block, new_block)
    t2 = replace(t, body=body)
    if isinstance(c1, Select) and c2.var != c1.var:
        t2 = rename_var(t2, c2.var, c1.var)
    return st._with(Step("merge", (txn, c1.label, c2.label)), _replace_txn(st.program, t2))


def _direct_exprs(c: Command):
    out = []
    map_command_exprs(c, lambda e: out.append(e) or e)
    return out


def _replace_node(c: Command, old: Command, new: Command) -> Command:
    if c is old:
        return new
    if isinstance(c, Seq):
        return Seq(tuple(_replace_node(x, old, new) for x in c.cmds), pos=c.pos)
    if isinstance(c, If):
        return If(c.cond, _replace_node(c.body, old, new), pos=c.pos)
    if isinstance(c, Iterate):
        return Iterate(c.count, _replace_node(c.body, old, new), pos=c.pos)
    return c


def rename_var(t: Transaction, old: str, new: str) -> Transaction:
    def fn(x):
        if isinstance(x, (At, Agg)) and x.var == old:
            return replace(x, var=new)
        return None

    def ex(e):
        return map_expr(e, fn)
    return replace(t, body=map_command_exprs(t.body, ex), ret=ex(t.ret))


def eliminate_select(st: RefactorState, txn: str, label: str) -> RefactorState:
    """Drop a select whose variable is never used."""
    t = st.program.txn(txn)
    c = find_command(t, label)
    if not isinstance(c, Select):
        raise RefactorError(f"{txn}/{label} is not a select")
    if var_is_used(t, c.var):
        raise RewriteUndefined(f"{c.var} is still used")

    def drop(x):
        if isinstance(x, Select) and x.label == c.label:
            return Seq(())
        return None
    body = map_commands(t.body, drop)
    return st._with(Step("dce", (txn, c.label)), _replace_txn(st.program, replace(t, body=body)))


def dead_selects(t: Transaction) -> List[str]:
    return [c.label for c in db_commands(t.body)
            if isinstance(c, Select) and not var_is_used(t, c.var)]


# -- replay ----------------------------------------------------------------

def apply_step(st: RefactorState, step: Step) -> RefactorState:
    k, a = step.kind, step.args
    if k == "intro-schema":
        return intro_schema(st, a[0], a[1], a[2])
    if k == "intro-field":
        return intro_field(st, a[0], a[1], a[2])
    if k == "intro-vc":
        return intro_vc(st, a[0], a[1])
    if k == "split":
        return split_update(st, a[0], a[1])
    if k == "merge":
        return merge_commands(st, a[0], a[1], a[2])
    if k == "dce":
        return eliminate_select(st, a[0], a[1])
    raise RefactorError(f"unknown step '{k}'")


def replay(program: Program, log) -> RefactorState:
    st = RefactorState(program)
    for step in log:
        st = apply_step(st, step)
    return st
