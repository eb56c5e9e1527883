"""Command line runner: execute scenarios, compare approaches.

Commands::

    crdtlab run <file> [--seed N] [--out PATH] [--trace]
    crdtlab compare <file> --approaches op,pure,state [--seed N] [--out PATH]
    crdtlab list-datatypes

``run`` executes one scenario and prints its report; exit code 0 when
every assert-converged holds and no middleware check fired, 1 on
assertion failure, 2 on usage or parse errors. ``compare`` replays the
same logical operation sequence under several approaches with the same
seed, prints an aligned metrics table, and fails hard if the approaches
disagree on query results at convergence. A scenario argument is either
a path or the name of a bundled scenario (see ``crdtlab.scenarios``).
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .scenario import (
    APPROACHES,
    SUPPORTED,
    Command,
    Scenario,
    ScenarioError,
    parse_scenario,
)
from .sim import RunResult, run_scenario


def load_scenario_text(ref: str) -> str:
    """Resolve a path or bundled scenario name to scenario text."""
    p = Path(ref)
    if p.exists():
        return p.read_text()
    name = ref if ref.endswith(".scn") else f"{ref}.scn"
    bundle = resources.files("crdtlab").joinpath("scenarios", name)
    if bundle.is_file():
        return bundle.read_text()
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")


def bundled_scenarios() -> list[str]:
    names = []
    for entry in resources.files("crdtlab").joinpath("scenarios").iterdir():
        if entry.name.endswith(".scn"):
            names.append(entry.name[: -len(".scn")])
    return sorted(names)


def adapt_for_approach(sc: Scenario, approach: str, seed: int | None = None) -> Scenario:
    """Same logical run under another approach.

    Beacons are middleware-level no-ops outside pure mode and are
    dropped; a final flush plus convergence assertion is appended so
    every approach is compared after full delivery.
    """
    clone = sc.with_approach(approach)
    if seed is not None:
        clone.seed = seed
    commands = [
        c for c in sc.commands
        if not (c.verb == "op" and c.args == ("beacon",) and approach != "pure")
    ]
    last = max((c.tick for c in commands), default=0)
    tail = last + sc.reorder + sc.sync_every + 5
    commands.append(Command(tail, "flush", None, (), 0))
    commands.append(Command(tail + 1, "assert-converged", None, (), 0))
    clone.commands = commands
    return clone


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    try:
        sc = parse_scenario(load_scenario_text(args.scenario))
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        sc.seed = args.seed
    result = run_scenario(sc)
    _emit(result.report_lines(include_trace=args.trace), args.out)
    return 0 if result.ok else 1


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]


def cmd_compare(args) -> int:
    try:
        sc = parse_scenario(load_scenario_text(args.scenario))
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    approaches = [a.strip() for a in args.approaches.split(",") if a.strip()]
    if not approaches:
        print("error: --approaches needs at least one approach", file=sys.stderr)
        return 2
    for ap in approaches:
        if ap not in APPROACHES:
            print(f"error: unknown approach {ap!r}", file=sys.stderr)
            return 2
        if sc.datatype not in SUPPORTED[ap]:
            print(f"error: approach {ap} does not support datatype {sc.datatype}", file=sys.stderr)
            return 2
    results: dict[str, RunResult] = {}
    for ap in approaches:
        results[ap] = run_scenario(adapt_for_approach(sc, ap, args.seed))

    lines = [f"compare datatype={sc.datatype} nodes={sc.nodes} seed={args.seed if args.seed is not None else sc.seed}"]
    rows = [["approach", "messages", "payload", "flush_msgs", "flush_payload", "state_leaves", "converged"]]
    for ap in approaches:
        m = results[ap].metrics
        rows.append([
            ap,
            str(m.messages),
            str(m.payload),
            str(m.flush_messages),
            str(m.flush_payload),
            str(sum(m.state_leaves.values())),
            "never" if m.convergence_tick is None else str(m.convergence_tick),
        ])
    lines.extend(_table(rows))

    failed = [ap for ap in approaches if not results[ap].ok]
    for ap in failed:
        for tick, ok, text in results[ap].assertions:
            if not ok:
                lines.append(f"{ap}: assert t={tick} FAIL {text}")
        lines.extend(f"{ap}: violation {v}" for v in results[ap].violations)

    snapshots = {ap: results[ap].final_snapshot for ap in approaches}
    reference = snapshots[approaches[0]]
    divergent = [ap for ap in approaches if snapshots[ap] != reference]
    if divergent:
        lines.append("equivalence FAILED: approaches disagree at convergence")
        for ap in approaches:
            for node in sorted(snapshots[ap]):
                lines.append(f"  {ap} n{node}: {'|'.join(snapshots[ap][node])}")
    else:
        lines.append("equivalence ok: all approaches agree at convergence")
    _emit(lines, args.out)
    return 1 if divergent or failed else 0


def cmd_list_datatypes(_args) -> int:
    datatypes = sorted({d for ds in SUPPORTED.values() for d in ds})
    rows = [["datatype"] + list(APPROACHES)]
    for d in datatypes:
        rows.append([d] + ["x" if d in SUPPORTED[ap] else "-" for ap in APPROACHES])
    for line in _table(rows):
        print(line)
    print()
    print("bundled scenarios: " + ", ".join(bundled_scenarios()))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="crdtlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario and report")
    run_p.add_argument("scenario", help="scenario file path or bundled scenario name")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--out", default=None, help="write the report to a file instead of stdout")
    run_p.add_argument("--trace", action="store_true", help="include the full event trace")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="run the same operations under several approaches")
    cmp_p.add_argument("scenario", help="scenario file path or bundled scenario name")
    cmp_p.add_argument("--approaches", required=True, help="comma-separated approaches")
    cmp_p.add_argument("--seed", type=int, default=None)
    cmp_p.add_argument("--out", default=None)
    cmp_p.set_defaults(func=cmd_compare)

    ls_p = sub.add_parser("list-datatypes", help="show the datatype/approach support matrix")
    ls_p.set_defaults(func=cmd_list_datatypes)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
