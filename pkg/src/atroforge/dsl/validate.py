"""Static checks: name resolution, duplicate detection and uuid placement."""
from __future__ import annotations

from typing import Dict, List

from .ast import (
    ALIVE, Agg, Arg, At, Command, Expr, If, Insert, Iter, Iterate, Program,
    Select, Seq, Skip, Update, Uuid,
)
from .parser import Diagnostic
from .walk import db_commands, subexprs, where_atoms


def _at(node, fallback=(1, 1)):
    return node.pos or fallback


class _Checker:
    def __init__(self, prog: Program):
        self.prog = prog
        self.diags: List[Diagnostic] = []
        self.schemas = {}

    def err(self, node, msg, fallback=None):
        line, col = _at(node, fallback or (1, 1))
        self.diags.append(Diagnostic(line, col, msg))

    def run(self):
        for s in self.prog.schemas:
            if s.name in self.schemas:
                self.err(s, f"duplicate schema '{s.name}'")
                continue
            self.schemas[s.name] = s
            seen = set()
            for f in s.fields:
                if f == ALIVE:
                    self.err(s, f"field 'alive' is implicit and may not be declared in '{s.name}'")
                elif f in seen:
                    self.err(s, f"duplicate field '{f}' in schema '{s.name}'")
                seen.add(f)
            if not s.pk:
                self.err(s, f"schema '{s.name}' has no primary-key field")
            if s.key_domain is not None and s.key_domain < 1:
                self.err(s, f"schema '{s.name}' has a non-positive key domain")
        names = set()
        labels = set()
        for t in self.prog.transactions:
            if t.name in names:
                self.err(t, f"duplicate transaction '{t.name}'")
            names.add(t.name)
            if len(set(t.params)) != len(t.params):
                self.err(t, f"duplicate parameter in transaction '{t.name}'")
            self.params = set(t.params)
            self.bound: Dict[str, Select] = {}
            self.txn = t
            self.command(t.body, depth=0)
            self.expr(t.ret, t, depth=0, where="return")
            for c in db_commands(t.body):
                full = f"{t.name}/{c.label}"
                if full in labels:
                    self.err(c, f"duplicate command label '{full}'")
                labels.add(full)
        return self.diags

    def command(self, c: Command, depth: int):
        if isinstance(c, Seq):
            for sub in c.cmds:
                self.command(sub, depth)
        elif isinstance(c, Skip):
            pass
        elif isinstance(c, If):
            self.expr(c.cond, c, depth, "condition")
            self.command(c.body, depth)
        elif isinstance(c, Iterate):
            self.expr(c.count, c, depth, "iterate count")
            self.command(c.body, depth + 1)
        elif isinstance(c, Select):
            s = self.schema(c)
            if s is not None:
                if not c.is_star:
                    for f in c.fields:
                        if not s.has_field(f):
                            self.err(c, f"unresolved field '{f}' in schema '{s.name}'")
                self.where(c, s, depth)
            self.bound[c.var] = c
        elif isinstance(c, Update):
            s = self.schema(c)
            seen = set()
            for f, e in c.sets:
                if f in seen:
                    self.err(c, f"field '{f}' assigned twice")
                seen.add(f)
                if s is not None:
                    if not s.has_field(f):
                        self.err(c, f"unresolved field '{f}' in schema '{s.name}'")
                    elif f in s.pk:
                        self.err(c, f"primary-key field '{f}' cannot be assigned")
                self.expr(e, c, depth, "set")
            if s is not None:
                self.where(c, s, depth, allow_uuid=True)
        elif isinstance(c, Insert):
            s = self.schema(c)
            seen = set()
            for f, e in c.values:
                if f in seen:
                    self.err(c, f"field '{f}' assigned twice")
                seen.add(f)
                if s is not None and (f == ALIVE or not s.has_field(f)):
                    self.err(c, f"unresolved field '{f}' in schema '{s.name}'")
                self.expr(e, c, depth, "insert", allow_uuid=True)
            if s is not None:
                missing = [p for p in s.pk if p not in seen]
                if missing:
                    self.err(c, f"insert into '{s.name}' is missing primary-key field(s) "
                                f"{', '.join(missing)}")

    def schema(self, c):
        s = self.schemas.get(c.schema)
        if s is None:
            self.err(c, f"unresolved schema '{c.schema}'")
        return s

    def where(self, c, s, depth, allow_uuid=False):
        for a in where_atoms(c.where):
            if not s.has_field(a.field):
                self.err(a, f"unresolved field '{a.field}' in schema '{s.name}'", c.pos)
            ok_uuid = allow_uuid and a.op == "=" and a.field in s.pk
            self.expr(a.expr, a, depth, "where", allow_uuid=ok_uuid, fallback=c.pos)

    def expr(self, e: Expr, owner, depth, where, allow_uuid=False, fallback=None):
        fb = fallback or owner.pos
        for s in subexprs(e):
            if isinstance(s, Arg):
                if s.name not in self.params:
                    self.err(s, f"unresolved variable or parameter '{s.name}'", fb)
            elif isinstance(s, (At, Agg)):
                sel = self.bound.get(s.var)
                if sel is None:
                    self.err(s, f"unresolved variable '{s.var}'", fb)
                    continue
                sch = self.schemas.get(sel.schema)
                if sch is None:
                    continue
                ok = sch.has_field(s.field) if sel.is_star else s.field in sel.fields
                if not ok:
                    self.err(s, f"variable '{s.var}' has no field '{s.field}'", fb)
            elif isinstance(s, Iter):
                if depth == 0:
                    self.err(s, "'iter' used outside of an iterate block", fb)
            elif isinstance(s, Uuid):
                if not allow_uuid:
                    self.err(s, f"uuid() is not allowed in a {where} expression", fb)


def validate_program(prog: Program) -> List[Diagnostic]:
    return _Checker(prog).run()
