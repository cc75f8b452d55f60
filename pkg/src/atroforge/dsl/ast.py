"""AST node types for database programs.

All nodes are frozen dataclasses so programs can be compared structurally
and shared between rewrites. Source positions ride along in ``pos`` but do
not take part in equality.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

ALIVE = "alive"
STAR = ("*",)

ARITH_OPS = ("+", "-", "*", "/")
COMPARE_OPS = ("<", "<=", "=", ">", ">=")
BOOL_OPS = ("and", "or")
AGG_KINDS = ("sum", "min", "max")

Pos = Optional[Tuple[int, int]]


def _pos():
    return field(default=None, compare=False, repr=False)


# -- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: Union[int, bool]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Arg:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class BinArith:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class BoolOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Iter:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Agg:
    kind: str
    var: str
    field: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class At:
    """``at^index(var.field)``; ``x.f`` in source is ``At(Const(1), x, f)``."""
    index: "Expr"
    var: str
    field: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Uuid:
    pos: Pos = _pos()


Expr = Union[Const, Arg, BinArith, Compare, BoolOp, Iter, Agg, At, Uuid]


def at1(var: str, fld: str) -> At:
    return At(Const(1), var, fld)


# -- where clauses ---------------------------------------------------------

@dataclass(frozen=True)
class WhereAtom:
    """``this.field op expr``"""
    field: str
    op: str
    expr: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class WhereBool:
    op: str
    left: "Where"
    right: "Where"
    pos: Pos = _pos()


Where = Union[WhereAtom, WhereBool]


# -- commands --------------------------------------------------------------

@dataclass(frozen=True)
class Select:
    var: str
    fields: Tuple[str, ...]
    schema: str
    where: Where
    label: str
    pos: Pos = _pos()

    @property
    def is_star(self) -> bool:
        return self.fields == STAR


@dataclass(frozen=True)
class Update:
    schema: str
    sets: Tuple[Tuple[str, Expr], ...]
    where: Where
    label: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Insert:
    schema: str
    values: Tuple[Tuple[str, Expr], ...]
    label: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    cond: Expr
    body: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Iterate:
    count: Expr
    body: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Seq:
    """A block of commands executed in order."""
    cmds: Tuple["Command", ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Skip:
    pos: Pos = _pos()


Command = Union[Select, Update, Insert, If, Iterate, Seq, Skip]
DbCommand = Union[Select, Update, Insert]


# -- top level -------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    name: str
    fields: Tuple[str, ...]
    pk: Tuple[str, ...]
    key_domain: Optional[int] = None
    # Append-only tables (logging schemas) start out empty in default seeds.
    log: bool = False
    pos: Pos = _pos()

    @property
    def nonpk(self) -> Tuple[str, ...]:
        return tuple(f for f in self.fields if f not in self.pk)

    def has_field(self, name: str) -> bool:
        return name == ALIVE or name in self.fields


@dataclass(frozen=True)
class Transaction:
    name: str
    params: Tuple[str, ...]
    body: Command
    ret: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Program:
    schemas: Tuple[Schema, ...] = ()
    transactions: Tuple[Transaction, ...] = ()

    def schema(self, name: str) -> Schema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise KeyError(name)

    def has_schema(self, name: str) -> bool:
        return any(s.name == name for s in self.schemas)

    def txn(self, name: str) -> Transaction:
        for t in self.transactions:
            if t.name == name:
                return t
        raise KeyError(name)

    def schema_map(self):
        return {s.name: s for s in self.schemas}


def full_label(txn: str, label: str) -> str:
    return f"{txn}/{label}"


def base_label(label: str) -> str:
    """Strip rewrite primes: ``U4.2''`` -> ``U4.2``."""
    return label.rstrip("'")


def label_parts(label: str) -> Tuple[str, ...]:
    """Base labels a (possibly merged) label was derived from."""
    return tuple(base_label(p) for p in label.split("+"))
