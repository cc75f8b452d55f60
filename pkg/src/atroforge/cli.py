"""Command-line front end.

Exit codes: 0 clean, 1 anomalies found or refinement failed, 2 usage,
parse or input errors.
"""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .anomaly import detect
from .bounds import Bounds, BoundsError, bounds_from_env
from .dsl import ParseError, parse_program, pretty_print
from .dsl.ast import Program
from .interp import (
    EnumStats, History, InterpError, enumerate_histories, make_catalog, replay,
    run_serial, sample_history,
)
from .refactor import repair
from .store import ABSENT, DatabaseState, StoreError, alive_records, dump_events, field_value
from .valuecorr import (
    CorrespondenceError, check_program_refinement, format_vc_file, parse_vc_file,
    with_identities,
)
from .workload import WorkloadError, WorkloadSpec, check_workload, parse_workload

EXIT_OK, EXIT_FOUND, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def load_program(path: str) -> Program:
    text = _read(path)
    try:
        return parse_program(text)
    except ParseError as exc:
        raise UsageError("\n".join(d.format(path) for d in exc.diagnostics)) from None


def load_workload(path: str, p: Program) -> WorkloadSpec:
    spec = parse_workload(_read(path), Path(path).name)
    check_workload(spec, p)
    return spec


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _json_value(v):
    if v is ABSENT:
        return None
    return v


def state_table(state: DatabaseState) -> List[dict]:
    """Live records with their reconstructed fields, in schema/key order."""
    rows = []
    for name in sorted(state.catalog.schemas):
        s = state.catalog.schemas[name]
        for r in alive_records(state, name):
            rows.append({"schema": name, "key": list(r.key),
                         "fields": {f: _json_value(field_value(state, r, f)) for f in s.fields}})
    return rows


def _fmt_row(row) -> str:
    vals = ", ".join(f"{f}={'absent' if v is None else str(v).lower() if isinstance(v, bool) else v}"
                     for f, v in row["fields"].items())
    return f"  {row['schema']}({vals})"


def _outcomes_json(h: History):
    return [[n, list(a), _json_value(r)] for n, a, r in h.outcomes()]


def _bounds(args) -> Bounds:
    return bounds_from_env(args.bounds)


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else (os.cpu_count() or 1)


# -- subcommands -----------------------------------------------------------

def cmd_check(args, out) -> int:
    p = load_program(args.program)
    b = _bounds(args)
    rep = detect(p, b, jobs=_jobs(args))
    if args.json:
        doc = rep.to_json(Path(args.program).name)
        doc["seed"] = args.seed
        out.write(_dumps(doc))
    else:
        out.write(f"{len(rep.pairs)} anomalous access pair(s) at bounds {b}\n")
        for pr in rep.pairs:
            out.write(f"  {pr}\n")
        for c in rep.combos:
            if c.kind_witness:
                out.write(f"  {' || '.join(c.txns)}: {', '.join(sorted(c.kind_witness))}\n")
        if rep.capped:
            out.write("  note: exploration hit a cap; results are bounded\n")
    return EXIT_FOUND if rep.pairs else EXIT_OK


def cmd_repair(args, out) -> int:
    p = load_program(args.program)
    b = _bounds(args)
    res = repair(p, b, jobs=_jobs(args))
    src = Path(args.program)
    out_dir = Path(args.out_dir) if args.out_dir else src.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = src.name[:-len(".dbp")] if src.name.endswith(".dbp") else src.name
    prog_path = out_dir / f"{stem}.repaired.dbp"
    vc_path = out_dir / f"{stem}.vc"
    rep_path = out_dir / f"{stem}.repair.json"
    prog_path.write_text(pretty_print(res.program))
    vc_path.write_text(format_vc_file(res.correspondences))
    doc = res.report.to_json(src.name)
    doc["bounds"] = b.to_json()
    doc["seed"] = args.seed
    doc["outputs"] = {"program": prog_path.name, "correspondences": vc_path.name}
    rep_path.write_text(_dumps(doc))
    if args.json:
        out.write(_dumps(doc))
    else:
        r = res.report
        out.write(f"{len(r.pairs_in)} pair(s) detected, {len(r.pairs_repaired)} repaired, "
                  f"{len(r.pairs_remaining)} remaining\n")
        for pr in r.pairs_remaining:
            out.write(f"  remaining {pr}\n")
        if r.serializable_txns:
            out.write("  run these transactions serializably: "
                      f"{', '.join(r.serializable_txns)}\n")
        out.write(f"wrote {prog_path}, {vc_path} and {rep_path}\n")
    return EXIT_FOUND if res.report.final_pairs else EXIT_OK


def cmd_simulate(args, out) -> int:
    p = load_program(args.program)
    spec = load_workload(args.workload, p)
    b = _bounds(args)
    if spec.domains:
        b = b.with_domains(dict(spec.domains))
    seed = spec.seed(make_catalog(p, b))
    inv = list(spec.invocations)
    doc = {"version": 1, "program": Path(args.program).name, "workload": spec.name,
           "bounds": b.to_json(), "seed": args.seed}
    lines = []

    def describe(h: History, title: str):
        entry = {"schedule": h.schedule, "outcomes": _outcomes_json(h),
                 "final": state_table(h.final.state)}
        if args.dump:
            entry["events"] = dump_events(h.final.state).splitlines()
        lines.append(f"{title}: schedule [{h.schedule}]")
        for n, a, r in entry["outcomes"]:
            lines.append(f"  {n}({', '.join(map(str, a))}) -> {r}")
        lines.extend(_fmt_row(row) for row in entry["final"])
        if args.dump:
            lines.extend("  " + e for e in entry["events"])
        return entry

    if args.serial:
        doc["mode"] = "serial"
        doc["history"] = describe(run_serial(p, inv, seed, b), "serial")
    elif args.schedule is not None:
        doc["mode"] = "replay"
        doc["history"] = describe(replay(p, inv, args.schedule, b, seed), "replay")
    elif args.sample:
        doc["mode"] = "sample"
        rng = random.Random(args.seed)
        doc["histories"] = [describe(sample_history(p, inv, rng, b, seed), f"sample {i}")
                            for i in range(args.sample)]
    else:
        doc["mode"] = "enumerate"
        stats = EnumStats()
        summary = {}
        for h in enumerate_histories(p, inv, b, seed, stats):
            key = json.dumps([_outcomes_json(h), state_table(h.final.state)], sort_keys=True)
            if key not in summary:
                summary[key] = {"count": 0, "example": describe(h, f"outcome {len(summary)}")}
            summary[key]["count"] += 1
        doc["histories"] = stats.histories
        doc["capped"] = stats.capped
        doc["distinct"] = [summary[k] for k in summary]
        lines.insert(0, f"{stats.histories} histories, {len(summary)} distinct outcome(s)"
                        + (" (capped)" if stats.capped else ""))
    out.write(_dumps(doc) if args.json else "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(args, out) -> int:
    orig = load_program(args.original)
    refac = load_program(args.refactored)
    V = parse_vc_file(_read(args.correspondences), args.correspondences)
    specs = [load_workload(w, orig) for w in args.workloads]
    b = _bounds(args)
    verdict = check_program_refinement(refac, orig, with_identities(V, orig), specs, b)
    if args.json:
        doc = verdict.to_json()
        doc.update(version=1, bounds=b.to_json(), seed=args.seed,
                   original=Path(args.original).name, refactored=Path(args.refactored).name)
        out.write(_dumps(doc))
    else:
        out.write(f"refinement: {verdict.status}\n")
        for w in verdict.workloads:
            out.write(f"  {w.name}: {'pass' if w.passed else 'FAIL'} "
                      f"({w.refactored_histories} refactored, {w.original_histories} original, "
                      f"{w.serial_histories} serial histories)\n")
            if w.cond1_example:
                out.write(f"    new behaviour, schedule [{w.cond1_example['schedule']}]\n")
            if w.cond2_example:
                out.write(f"    lost serial behaviour, order {w.cond2_example['order']}\n")
    return EXIT_OK if verdict.passed else EXIT_FOUND


def cmd_fmt(args, out) -> int:
    out.write(pretty_print(load_program(args.program)))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--bounds", help="k=v[,k=v...]; defaults come from $ATROFORGE_BOUNDS")
    common.add_argument("--seed", type=int, default=0, help="random seed (used by --sample)")
    common.add_argument("--json", action="store_true", help="print a JSON report")
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")

    ap = argparse.ArgumentParser(prog="atroforge",
                                 description="Find and repair serializability anomalies "
                                             "in database programs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", parents=[common], help="list anomalous access pairs")
    s.add_argument("program")
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("repair", parents=[common], help="refactor a program to remove anomalies")
    s.add_argument("program")
    s.add_argument("--out-dir", help="where to write outputs (default: next to the program)")
    s.set_defaults(fn=cmd_repair)

    s = sub.add_parser("simulate", parents=[common], help="run a workload")
    s.add_argument("program")
    s.add_argument("workload")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--serial", action="store_true", help="run invocations one after another")
    mode.add_argument("--schedule", help="replay an 'actor:view ...' schedule")
    mode.add_argument("--sample", type=int, metavar="K", help="K random histories")
    s.add_argument("--dump", action="store_true", help="print final event stores")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("verify", parents=[common], help="bounded refinement check")
    s.add_argument("original")
    s.add_argument("refactored")
    s.add_argument("correspondences")
    s.add_argument("workloads", nargs="+")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("fmt", parents=[common], help="pretty-print a program")
    s.add_argument("program")
    s.set_defaults(fn=cmd_fmt)
    return ap


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.jobs is not None and args.jobs < 1:
        print("atroforge: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "sample", None) is not None and args.sample < 1:
        print("atroforge: --sample must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args, out)
    except (UsageError, BoundsError, WorkloadError, CorrespondenceError) as exc:
        print(f"atroforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InterpError, StoreError) as exc:
        print(f"atroforge: runtime error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
