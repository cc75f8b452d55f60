"""Workload files (``.wl``).

Grammar, one item per line::

    invoke regSt(1, 1)
    init STUDENT(st_id = 1, st_name = 0, st_em_id = 1, st_co_id = 1, st_reg = false)
    domain STUDENT 3

``invoke`` lines give the transaction instances. ``init`` lines, if any,
replace the default seed (all records alive with zero fields) by exactly
the listed records. ``domain`` overrides a schema's key domain.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Tuple

from .dsl.ast import Program
from .store import Catalog, DatabaseState, RecordId


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    invocations: Tuple[Tuple[str, Tuple[int, ...]], ...]
    init: Optional[Tuple[Tuple[str, Tuple[Tuple[str, object], ...]], ...]] = None
    domains: Tuple[Tuple[str, int], ...] = ()

    def seed(self, catalog: Catalog) -> DatabaseState:
        from .interp import default_seed, seed_state
        if self.init is None:
            return default_seed(catalog)
        records = {}
        for schema, values in self.init:
            s = catalog.schemas.get(schema)
            if s is None:
                raise WorkloadError(f"init names unknown schema '{schema}'")
            vals = dict(values)
            missing = [p for p in s.pk if p not in vals]
            if missing:
                raise WorkloadError(f"init {schema} is missing key field(s) {', '.join(missing)}")
            key = tuple(vals[p] for p in s.pk)
            dom = catalog.domains[schema]
            if any(not 0 <= k < dom for k in key):
                raise WorkloadError(f"init {schema}{key} lies outside the key domain {dom}")
            for f in vals:
                if f not in s.fields:
                    raise WorkloadError(f"init {schema} has no field '{f}'")
            records[RecordId(schema, key)] = {f: v for f, v in vals.items() if f not in s.pk}
        return seed_state(catalog, records)


_INVOKE = re.compile(r"invoke\s+(\w+)\s*\(([^)]*)\)\s*$")
_INIT = re.compile(r"init\s+(\w+)\s*\(([^)]*)\)\s*$")
_DOMAIN = re.compile(r"domain\s+(\w+)\s+(\d+)\s*$")


def _value(text: str, where: str):
    text = text.strip()
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        raise WorkloadError(f"{where}: bad value {text!r}") from None


def parse_workload(text: str, name: str = "<workload>") -> WorkloadSpec:
    invs, inits, domains = [], [], {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0].split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{name}:{n}"
        if m := _INVOKE.match(line):
            args = tuple(_value(a, where) for a in m.group(2).split(",") if a.strip())
            invs.append((m.group(1), args))
        elif m := _INIT.match(line):
            vals = []
            for item in m.group(2).split(","):
                if not item.strip():
                    continue
                if "=" not in item:
                    raise WorkloadError(f"{where}: expected field = value, got {item.strip()!r}")
                f, v = item.split("=", 1)
                vals.append((f.strip(), _value(v, where)))
            inits.append((m.group(1), tuple(vals)))
        elif m := _DOMAIN.match(line):
            domains[m.group(1)] = int(m.group(2))
        else:
            raise WorkloadError(f"{where}: cannot parse {line!r}")
    return WorkloadSpec(name, tuple(invs), tuple(inits) if inits else None,
                        tuple(sorted(domains.items())))


def check_workload(spec: WorkloadSpec, p: Program):
    for txn, args in spec.invocations:
        try:
            t = p.txn(txn)
        except KeyError:
            raise WorkloadError(f"{spec.name}: unknown transaction '{txn}'") from None
        if len(args) != len(t.params):
            raise WorkloadError(f"{spec.name}: {txn} expects {len(t.params)} argument(s)")


def format_workload(spec: WorkloadSpec) -> str:
    lines = [f"domain {s} {n}" for s, n in spec.domains]
    for schema, vals in spec.init or ():
        body = ", ".join(f"{f} = {_fmt(v)}" for f, v in vals)
        lines.append(f"init {schema}({body})")
    for txn, args in spec.invocations:
        lines.append(f"invoke {txn}({', '.join(map(_fmt, args))})")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is True:
        return "true"
    if v is False:
        return "false"
    return str(v)
