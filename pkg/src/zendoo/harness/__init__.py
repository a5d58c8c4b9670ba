"""Scenario runner, snapshots and reports tying the mainchain and sidechains together."""

from .report import RunReport, render_text
from .runner import Simulation, run
from .scenario import (
    Scenario,
    dump_scenario,
    load_scenario,
    parse_scenario,
    random_scenario,
)
from .snapshot import (
    Snapshot,
    parse_snapshot,
    read_snapshot,
    replay,
    verify,
    write_snapshot,
)

__all__ = [
    "RunReport", "Scenario", "Simulation", "Snapshot", "dump_scenario", "load_scenario", "parse_scenario",
    "parse_snapshot", "random_scenario", "read_snapshot", "render_text", "replay", "run", "verify",
    "write_snapshot",
]
