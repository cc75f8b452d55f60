"""Tokenizer, recursive-descent parser and validator for ``.dbp`` programs."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional

from .ast import (
    AGG_KINDS, STAR, Agg, Arg, At, BinArith, BoolOp, Command, Compare,
    Const, If, Insert, Iter, Iterate, Program, Schema, Select, Seq, Skip,
    Transaction, Update, Uuid, WhereAtom, WhereBool,
)

KEYWORDS = {
    "schema", "key", "domain", "log", "txn", "select", "from", "where",
    "update", "set", "insert", "into", "values", "if", "iterate", "return",
    "skip", "and", "or", "true", "false", "this", "iter", "uuid", "at",
    "sum", "min", "max",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<label>[A-Za-z_][\w.'+]*:(?!=))
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>:=|<=|>=|[-+*/<>=(){},;.])
""", re.VERBOSE)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(d.format() for d in diagnostics))

    def format(self, filename: str) -> str:
        return "\n".join(d.format(filename) for d in self.diagnostics)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, kw, op, label, eof
    text: str
    line: int
    col: int

    @property
    def pos(self):
        return (self.line, self.col)


def tokenize(text: str) -> List[Token]:
    tokens = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError([Diagnostic(line, i - line_start + 1,
                                         f"unexpected character {text[i]!r}")])
        kind = m.lastgroup
        col = i - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "label":
            tokens.append(Token("label", m.group()[:-1], line, col))
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind in ("num", "op"):
            tokens.append(Token(kind, m.group(), line, col))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise ParseError([Diagnostic(tok.line, tok.col, msg)])

    def at(self, text: str) -> bool:
        return self.tok.kind in ("kw", "op") and self.tok.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            self.error(f"expected '{text}', found '{found}'")
        return t

    def ident(self, what="identifier") -> Token:
        if self.tok.kind != "ident":
            found = self.tok.text or "end of input"
            self.error(f"expected {what}, found '{found}'")
        t = self.tok
        self.i += 1
        return t

    def number(self) -> int:
        if self.tok.kind != "num":
            self.error(f"expected integer, found '{self.tok.text}'")
        t = self.tok
        self.i += 1
        return int(t.text)

    # -- top level
    def program(self) -> Program:
        schemas, txns = [], []
        while self.tok.kind != "eof":
            if self.at("schema"):
                schemas.append(self.schema())
            elif self.at("txn"):
                txns.append(self.transaction())
            else:
                self.error(f"expected 'schema' or 'txn', found '{self.tok.text}'")
        return Program(tuple(schemas), tuple(txns))

    def schema(self) -> Schema:
        start = self.expect("schema")
        name = self.ident("schema name").text
        self.expect("(")
        fields, pk = [], []
        if not self.at(")"):
            while True:
                ft = self.ident("field name")
                fields.append(ft.text)
                if self.accept("key"):
                    pk.append(ft.text)
                if not self.accept(","):
                    break
        self.expect(")")
        domain = None
        log = False
        while True:
            if self.accept("domain"):
                domain = self.number()
            elif self.accept("log"):
                log = True
            else:
                break
        self.expect(";")
        return Schema(name, tuple(fields), tuple(pk), domain, log, pos=start.pos)

    def transaction(self) -> Transaction:
        start = self.expect("txn")
        name = self.ident("transaction name").text
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                params.append(self.ident("parameter").text)
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("{")
        self.ordinal = 0
        cmds = self.statements(top=True)
        ret = Const(0)
        if self.accept("return"):
            ret = self.expr()
            self.expect(";")
        self.expect("}")
        return Transaction(name, tuple(params), Seq(tuple(cmds)), ret, pos=start.pos)

    def statements(self, top=False) -> List[Command]:
        cmds = []
        while not (self.at("}") or (top and self.at("return"))):
            if self.tok.kind == "eof":
                self.error("unexpected end of input")
            cmds.append(self.statement())
        return cmds

    def block(self) -> Seq:
        t = self.expect("{")
        cmds = self.statements()
        self.expect("}")
        return Seq(tuple(cmds), pos=t.pos)

    def statement(self) -> Command:
        label = None
        if self.tok.kind == "label":
            label = self.tok.text
            self.i += 1
        t = self.tok
        if self.accept("if"):
            self._no_label(label, t)
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return If(cond, self.block(), pos=t.pos)
        if self.accept("iterate"):
            self._no_label(label, t)
            self.expect("(")
            count = self.expr()
            self.expect(")")
            return Iterate(count, self.block(), pos=t.pos)
        if self.accept("skip"):
            self._no_label(label, t)
            self.expect(";")
            return Skip(pos=t.pos)
        self.ordinal += 1
        label = label or f"c{self.ordinal}"
        if self.accept("update"):
            schema = self.ident("schema name").text
            self.expect("set")
            sets = self.assignments()
            self.expect("where")
            where = self.where()
            self.expect(";")
            return Update(schema, tuple(sets), where, label, pos=t.pos)
        if self.accept("insert"):
            self.expect("into")
            schema = self.ident("schema name").text
            self.expect("values")
            self.expect("(")
            values = self.assignments()
            self.expect(")")
            self.expect(";")
            return Insert(schema, tuple(values), label, pos=t.pos)
        if t.kind == "ident":
            var = self.ident().text
            self.expect(":=")
            self.expect("select")
            if self.accept("*"):
                fields = STAR
            else:
                fields = [self.ident("field name").text]
                while self.accept(","):
                    fields.append(self.ident("field name").text)
                fields = tuple(fields)
            self.expect("from")
            schema = self.ident("schema name").text
            self.expect("where")
            where = self.where()
            self.expect(";")
            return Select(var, fields, schema, where, label, pos=t.pos)
        self.error(f"expected a command, found '{t.text}'")

    def _no_label(self, label, tok):
        if label is not None:
            self.error("labels are only allowed on database commands", tok)

    def assignments(self):
        out = []
        while True:
            ft = self.ident("field name")
            self.expect("=")
            out.append((ft.text, self.arith()))
            if not self.accept(","):
                return out

    # -- where clauses
    def where(self):
        left = self.where_and()
        while True:
            t = self.accept("or")
            if t is None:
                return left
            left = WhereBool("or", left, self.where_and(), pos=t.pos)

    def where_and(self):
        left = self.where_atom()
        while True:
            t = self.accept("and")
            if t is None:
                return left
            left = WhereBool("and", left, self.where_atom(), pos=t.pos)

    def where_atom(self):
        if self.accept("("):
            w = self.where()
            self.expect(")")
            return w
        start = self.tok
        if self.accept("this"):
            self.expect(".")
        ft = self.ident("field name")
        op = self.tok.text
        if self.tok.kind != "op" or op not in ("<", "<=", "=", ">", ">="):
            self.error(f"expected comparison operator, found '{op}'")
        self.i += 1
        return WhereAtom(ft.text, op, self.arith(), pos=start.pos)

    # -- expressions
    def expr(self):
        left = self.and_expr()
        while True:
            t = self.accept("or")
            if t is None:
                return left
            left = BoolOp("or", left, self.and_expr(), pos=t.pos)

    def and_expr(self):
        left = self.cmp_expr()
        while True:
            t = self.accept("and")
            if t is None:
                return left
            left = BoolOp("and", left, self.cmp_expr(), pos=t.pos)

    def cmp_expr(self):
        left = self.arith()
        if self.tok.kind == "op" and self.tok.text in ("<", "<=", "=", ">", ">="):
            t = self.tok
            self.i += 1
            return Compare(t.text, left, self.arith(), pos=t.pos)
        return left

    def arith(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            t = self.tok
            self.i += 1
            left = BinArith(t.text, left, self.term(), pos=t.pos)
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            t = self.tok
            self.i += 1
            left = BinArith(t.text, left, self.unary(), pos=t.pos)
        return left

    def unary(self):
        t = self.tok
        if self.accept("-"):
            if self.tok.kind == "num":
                return Const(-self.number(), pos=t.pos)
            return BinArith("-", Const(0), self.unary(), pos=t.pos)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            return Const(self.number(), pos=t.pos)
        if self.accept("true"):
            return Const(True, pos=t.pos)
        if self.accept("false"):
            return Const(False, pos=t.pos)
        if self.accept("iter"):
            return Iter(pos=t.pos)
        if self.accept("uuid"):
            self.expect("(")
            self.expect(")")
            return Uuid(pos=t.pos)
        if t.kind == "kw" and t.text in AGG_KINDS:
            self.i += 1
            self.expect("(")
            var = self.ident("variable").text
            self.expect(".")
            fld = self.field_name()
            self.expect(")")
            return Agg(t.text, var, fld, pos=t.pos)
        if self.accept("at"):
            self.expect("(")
            index = self.expr()
            self.expect(",")
            var = self.ident("variable").text
            self.expect(".")
            fld = self.field_name()
            self.expect(")")
            return At(index, var, fld, pos=t.pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.i += 1
            if self.accept("."):
                return At(Const(1), t.text, self.field_name(), pos=t.pos)
            return Arg(t.text, pos=t.pos)
        self.error(f"expected expression, found '{t.text or 'end of input'}'")

    def field_name(self):
        return self.ident("field name").text


def parse_program(text: str, validate: bool = True) -> Program:
    prog = _Parser(text).program()
    if validate:
        from .validate import validate_program
        diags = validate_program(prog)
        if diags:
            raise ParseError(diags)
    return prog
