"""Command line entry point: ``zendoo run|replay|verify|report``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ScenarioError, SnapshotError
from .report import RunReport, render_text
from .runner import Simulation
from .scenario import load_scenario
from .snapshot import read_snapshot, replay_matches, snapshot_text, verify_problems


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    sim = Simulation(scenario, args.seed)
    report = sim.run()
    print(render_text(report))
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    if args.snapshot:
        Path(args.snapshot).write_text(snapshot_text(sim, report))
    return 0 if report.ok else 1


def _cmd_replay(args: argparse.Namespace) -> int:
    snap = read_snapshot(args.snapshot)
    same = replay_matches(snap)
    report = RunReport.from_dict(snap.report)
    print(render_text(report))
    print("replay: identical" if same else "replay: DIFFERS from the snapshot")
    return 0 if same and report.ok else 1


def _cmd_verify(args: argparse.Namespace) -> int:
    snap = read_snapshot(args.snapshot)
    problems = verify_problems(snap)
    for p in problems:
        print(f"FAIL {p}")
    ok = not problems and RunReport.from_dict(snap.report).ok
    print("verify: ok" if ok else "verify: failed")
    return 0 if ok else 1


def _cmd_report(args: argparse.Namespace) -> int:
    snap = read_snapshot(args.snapshot)
    report = RunReport.from_dict(snap.report)
    if args.format == "structured":
        print(report.to_json())
    else:
        print(render_text(report))
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zendoo", description="Deterministic mainchain/sidechain simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--report", help="write the structured report here")
    run.add_argument("--snapshot", help="write a replayable snapshot here")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("replay", help="re-run a snapshot and compare")
    rep.add_argument("snapshot")
    rep.set_defaults(func=_cmd_replay)

    ver = sub.add_parser("verify", help="re-check every block and proof of a snapshot offline")
    ver.add_argument("snapshot")
    ver.set_defaults(func=_cmd_verify)

    out = sub.add_parser("report", help="print the report stored in a snapshot")
    out.add_argument("snapshot")
    out.add_argument("--format", choices=("text", "structured"), default="text")
    out.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SnapshotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
