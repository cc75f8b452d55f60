"""Render programs back to concrete syntax.

Output is canonical: every database command carries its label, blocks are
indented by four spaces, and parentheses appear only where precedence
requires them. ``parse_program(pretty_print(p)) == p`` for valid programs.
"""
from __future__ import annotations

from typing import List

from .ast import (
    Agg, Arg, At, BinArith, BoolOp, Command, Compare, Const, Expr, If, Insert,
    Iter, Iterate, Program, Schema, Select, Seq, Skip, Transaction, Update,
    Uuid, Where, WhereAtom,
)

# binding strength; higher binds tighter
_PREC = {"or": 1, "and": 2, "cmp": 3, "+": 4, "-": 4, "*": 5, "/": 5}


def _prec(e: Expr) -> int:
    if isinstance(e, BoolOp):
        return _PREC[e.op]
    if isinstance(e, Compare):
        return _PREC["cmp"]
    if isinstance(e, BinArith):
        return _PREC[e.op]
    if isinstance(e, Const) and not isinstance(e.value, bool) and e.value < 0:
        return 4
    return 9


def expr_str(e: Expr) -> str:
    if isinstance(e, Const):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return str(e.value)
    if isinstance(e, Arg):
        return e.name
    if isinstance(e, Iter):
        return "iter"
    if isinstance(e, Uuid):
        return "uuid()"
    if isinstance(e, Agg):
        return f"{e.kind}({e.var}.{e.field})"
    if isinstance(e, At):
        if e.index == Const(1):
            return f"{e.var}.{e.field}"
        return f"at({expr_str(e.index)}, {e.var}.{e.field})"
    if isinstance(e, (BinArith, Compare, BoolOp)):
        p = _prec(e)
        left = expr_str(e.left)
        if _prec(e.left) < p or (isinstance(e, Compare) and _prec(e.left) <= p):
            left = f"({left})"
        right = expr_str(e.right)
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def _operand(e: Expr) -> str:
    # where-atom right-hand sides and assignments are parsed at arithmetic level
    s = expr_str(e)
    return f"({s})" if _prec(e) < 4 else s


def where_str(w: Where) -> str:
    if isinstance(w, WhereAtom):
        return f"{w.field} {w.op} {_operand(w.expr)}"
    p = _PREC[w.op]
    left, right = where_str(w.left), where_str(w.right)
    if not isinstance(w.left, WhereAtom) and _PREC[w.left.op] < p:
        left = f"({left})"
    if not isinstance(w.right, WhereAtom) and _PREC[w.right.op] <= p:
        right = f"({right})"
    return f"{left} {w.op} {right}"


def _assigns(pairs) -> str:
    return ", ".join(f"{f} = {_operand(e)}" for f, e in pairs)


def command_lines(c: Command, indent: int = 1) -> List[str]:
    pad = "    " * indent
    if isinstance(c, Seq):
        out = []
        for sub in c.cmds:
            out.extend(command_lines(sub, indent))
        return out
    if isinstance(c, Skip):
        return [pad + "skip;"]
    if isinstance(c, If):
        return ([f"{pad}if ({expr_str(c.cond)}) {{"]
                + command_lines(c.body, indent + 1) + [pad + "}"])
    if isinstance(c, Iterate):
        return ([f"{pad}iterate ({expr_str(c.count)}) {{"]
                + command_lines(c.body, indent + 1) + [pad + "}"])
    if isinstance(c, Select):
        return [f"{pad}{c.label}: {command_str(c)}"]
    if isinstance(c, (Update, Insert)):
        return [f"{pad}{c.label}: {command_str(c)}"]
    raise TypeError(f"not a command: {c!r}")


def command_str(c: Command) -> str:
    """One-line rendering of a database command, without its label."""
    if isinstance(c, Select):
        return (f"{c.var} := select {', '.join(c.fields)} from {c.schema} "
                f"where {where_str(c.where)};")
    if isinstance(c, Update):
        return f"update {c.schema} set {_assigns(c.sets)} where {where_str(c.where)};"
    if isinstance(c, Insert):
        return f"insert into {c.schema} values ({_assigns(c.values)});"
    return " ".join(line.strip() for line in command_lines(c, 0))


def schema_str(s: Schema) -> str:
    fields = ", ".join(f + (" key" if f in s.pk else "") for f in s.fields)
    out = f"schema {s.name}({fields})"
    if s.key_domain is not None:
        out += f" domain {s.key_domain}"
    if s.log:
        out += " log"
    return out + ";"


def transaction_str(t: Transaction) -> str:
    lines = [f"txn {t.name}({', '.join(t.params)}) {{"]
    lines += command_lines(t.body, 1)
    lines.append(f"    return {expr_str(t.ret)};")
    lines.append("}")
    return "\n".join(lines)


def pretty_print(p: Program) -> str:
    parts = [schema_str(s) for s in p.schemas]
    text = "\n".join(parts)
    for t in p.transactions:
        text += ("\n\n" if text else "") + transaction_str(t)
    return text + "\n" if text else ""
