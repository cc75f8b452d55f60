"""Traversals and small structural helpers over the AST."""
from __future__ import annotations

from typing import Callable, Iterator, List, Optional, Set, Tuple

from .ast import (
    ALIVE, Agg, At, BinArith, BoolOp, Command, Compare, Const, Expr, If,
    Insert, Iterate, Program, Select, Seq, Transaction, Update, Where,
    WhereAtom, WhereBool,
)


class DesugarError(ValueError):
    pass


def fields_of_where(where: Where) -> Set[str]:
    """Fields named by ``this.f`` atoms."""
    if isinstance(where, WhereAtom):
        return {where.field}
    return fields_of_where(where.left) | fields_of_where(where.right)


def where_atoms(where: Where) -> Iterator[WhereAtom]:
    if isinstance(where, WhereAtom):
        yield where
    else:
        yield from where_atoms(where.left)
        yield from where_atoms(where.right)


def conjuncts(where: Where) -> Optional[List[WhereAtom]]:
    """Flatten a pure conjunction into its atoms; None if any ``or`` occurs."""
    if isinstance(where, WhereAtom):
        return [where]
    if where.op != "and":
        return None
    left, right = conjuncts(where.left), conjuncts(where.right)
    if left is None or right is None:
        return None
    return left + right


def conjoin(atoms) -> Where:
    atoms = list(atoms)
    if not atoms:
        raise ValueError("empty conjunction")
    out = atoms[0]
    for a in atoms[1:]:
        out = WhereBool("and", out, a)
    return out


def pk_equalities(where: Where, pk) -> Optional[dict]:
    """Map each pk field to its equated expression when ``where`` is a
    conjunction of equalities covering exactly the primary key."""
    atoms = conjuncts(where)
    if atoms is None:
        return None
    eqs = {}
    for a in atoms:
        if a.op != "=" or a.field not in pk or a.field in eqs:
            return None
        eqs[a.field] = a.expr
    if set(eqs) != set(pk):
        return None
    return eqs


def desugar_insert(cmd: Insert, schema) -> Update:
    """Rewrite an insert as an update that sets ``alive`` and targets the
    record identified by the pk values."""
    given = dict(cmd.values)
    missing = [p for p in schema.pk if p not in given]
    if missing:
        raise DesugarError(
            f"insert into {cmd.schema} is missing primary-key field(s) {', '.join(missing)}")
    sets = [(ALIVE, Const(True))]
    sets += [(f, e) for f, e in cmd.values if f not in schema.pk]
    where = conjoin(WhereAtom(p, "=", given[p]) for p in schema.pk)
    return Update(cmd.schema, tuple(sets), where, cmd.label, pos=cmd.pos)


# -- expression traversal --------------------------------------------------

def subexprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (BinArith, Compare, BoolOp)):
        yield from subexprs(e.left)
        yield from subexprs(e.right)
    elif isinstance(e, At):
        yield from subexprs(e.index)


def map_expr(e: Expr, fn: Callable[[Expr], Optional[Expr]]) -> Expr:
    """Bottom-up rebuild; ``fn`` may return a replacement or None to keep."""
    if isinstance(e, (BinArith, Compare, BoolOp)):
        e = type(e)(e.op, map_expr(e.left, fn), map_expr(e.right, fn), pos=e.pos)
    elif isinstance(e, At):
        e = At(map_expr(e.index, fn), e.var, e.field, pos=e.pos)
    out = fn(e)
    return e if out is None else out


def map_where(w: Where, fn: Callable[[WhereAtom], Where]) -> Where:
    if isinstance(w, WhereAtom):
        return fn(w)
    return WhereBool(w.op, map_where(w.left, fn), map_where(w.right, fn), pos=w.pos)


def command_exprs(c: Command) -> Iterator[Expr]:
    """Expressions appearing directly in ``c`` (not in nested bodies)."""
    if isinstance(c, Select):
        for a in where_atoms(c.where):
            yield a.expr
    elif isinstance(c, Update):
        for _, e in c.sets:
            yield e
        for a in where_atoms(c.where):
            yield a.expr
    elif isinstance(c, Insert):
        for _, e in c.values:
            yield e
    elif isinstance(c, If):
        yield c.cond
    elif isinstance(c, Iterate):
        yield c.count


def vars_used(e: Expr) -> Set[str]:
    return {s.var for s in subexprs(e) if isinstance(s, (At, Agg))}


# -- command traversal -----------------------------------------------------

def iter_commands(c: Command) -> Iterator[Command]:
    """Pre-order walk of every command node."""
    yield c
    if isinstance(c, Seq):
        for sub in c.cmds:
            yield from iter_commands(sub)
    elif isinstance(c, (If, Iterate)):
        yield from iter_commands(c.body)


def db_commands(c: Command) -> List[Command]:
    return [x for x in iter_commands(c) if isinstance(x, (Select, Update, Insert))]


def all_db_commands(p: Program) -> Iterator[Tuple[Transaction, Command]]:
    for t in p.transactions:
        for c in db_commands(t.body):
            yield t, c


def map_commands(c: Command, fn: Callable[[Command], Optional[Command]]) -> Command:
    """Rebuild a command tree bottom-up. ``fn`` is applied to leaves and may
    return a replacement (possibly a Seq, which is spliced into the parent)."""
    if isinstance(c, Seq):
        out = []
        for sub in c.cmds:
            new = map_commands(sub, fn)
            if isinstance(new, Seq) and not isinstance(sub, Seq):
                out.extend(new.cmds)
            else:
                out.append(new)
        return Seq(tuple(out), pos=c.pos)
    if isinstance(c, If):
        return If(c.cond, map_commands(c.body, fn), pos=c.pos)
    if isinstance(c, Iterate):
        return Iterate(c.count, map_commands(c.body, fn), pos=c.pos)
    new = fn(c)
    return c if new is None else new


def fields_accessed(c: Command, schema) -> Set[str]:
    """Fields of ``schema`` read or written by a database command."""
    if isinstance(c, Select):
        sel = set(schema.fields) if c.is_star else set(c.fields)
        return sel | fields_of_where(c.where)
    if isinstance(c, Update):
        return {f for f, _ in c.sets} | fields_of_where(c.where)
    if isinstance(c, Insert):
        return {f for f, _ in c.values}
    return set()


def fields_written(c: Command) -> Set[str]:
    if isinstance(c, Update):
        return {f for f, _ in c.sets}
    if isinstance(c, Insert):
        return {f for f, _ in c.values} | {ALIVE}
    return set()


def fields_read(c: Command, schema) -> Set[str]:
    if isinstance(c, Select):
        sel = set(schema.fields) if c.is_star else set(c.fields)
        return sel | fields_of_where(c.where)
    if isinstance(c, Update):
        return fields_of_where(c.where)
    return set()
