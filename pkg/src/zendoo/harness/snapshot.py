"""Snapshot files: a run's scenario, every block it produced and its report.

The format is JSON Lines. The first line is the version header, the second
the scenario (with the effective seed), then one line per block in arrival
order (hex of the canonical encoding), and last the report with its digest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..codec import decode_as, encode
from ..errors import CodecError, InvalidBlock, Rejected, ScenarioError, SnapshotError
from ..latus.consensus import ScChain
from ..latus.references import verify_mc_reference
from ..latus.types import ScBlock
from ..mainchain import McBlock, McChain
from .report import RunReport, report_digest
from .runner import Simulation, actor_key, sidechain_params
from .scenario import Scenario, scenario_from_dict

SNAPSHOT_FORMAT = "zendoo-snapshot"
SNAPSHOT_VERSION = 1


@dataclass
class Snapshot:
    scenario: Scenario
    records: list[tuple[str, str | None, bytes]]
    report: dict[str, Any]
    digest: str

    def run_report(self) -> RunReport:
        return RunReport.from_dict(self.report)


def snapshot_lines(sim: Simulation, report: RunReport) -> list[str]:
    dump = lambda obj: json.dumps(obj, sort_keys=True, separators=(",", ":"))
    lines = [dump({"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION}),
             dump({"scenario": sim.scenario.to_dict()})]
    for kind, name, block in sim.records:
        if kind == "mc":
            lines.append(dump({"mc": encode(block).hex()}))
        else:
            lines.append(dump({"sc": name, "block": encode(block).hex()}))
    lines.append(dump({"report": report.to_dict(), "digest": report.digest}))
    return lines


def snapshot_text(sim: Simulation, report: RunReport) -> str:
    return "\n".join(snapshot_lines(sim, report)) + "\n"


def write_snapshot(path: str | Path, sim: Simulation, report: RunReport) -> None:
    Path(path).write_text(snapshot_text(sim, report))


def parse_snapshot(text: str) -> Snapshot:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SnapshotError("empty snapshot")
    try:
        rows = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"line is not JSON: {exc}") from None
    header = rows[0]
    if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError("missing snapshot header")
    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {header.get('version')!r}")
    if len(rows) < 3 or not isinstance(rows[1], dict) or "scenario" not in rows[1]:
        raise SnapshotError("missing scenario line")
    try:
        scenario = scenario_from_dict(rows[1]["scenario"])
    except ScenarioError as exc:
        raise SnapshotError(f"bad scenario: {exc}") from None
    tail = rows[-1]
    if not isinstance(tail, dict) or "report" not in tail or "digest" not in tail:
        raise SnapshotError("missing report line (truncated snapshot?)")
    records = []
    for i, row in enumerate(rows[2:-1], start=3):
        try:
            if "mc" in row:
                records.append(("mc", None, bytes.fromhex(row["mc"])))
            elif "sc" in row:
                records.append(("sc", str(row["sc"]), bytes.fromhex(row["block"])))
            else:
                raise SnapshotError(f"line {i}: unknown record")
        except (TypeError, ValueError, KeyError) as exc:
            raise SnapshotError(f"line {i}: {exc}") from None
    return Snapshot(scenario, records, tail["report"], str(tail["digest"]))


def read_snapshot(path: str | Path) -> Snapshot:
    return parse_snapshot(Path(path).read_text())


def replay(snapshot: Snapshot) -> RunReport:
    """Run the stored scenario again; the result should equal the stored report."""
    return Simulation(snapshot.scenario).run()


def replay_matches(snapshot: Snapshot) -> bool:
    sim = Simulation(snapshot.scenario)
    report = sim.run()
    if report.digest != snapshot.digest:
        return False
    fresh = [(k, n, encode(b)) for k, n, b in sim.records]
    return fresh == snapshot.records


def verify(snapshot: Snapshot) -> bool:
    """Rebuild both chains from the stored blocks alone, re-checking every proof."""
    return not verify_problems(snapshot)


def verify_problems(snapshot: Snapshot) -> list[str]:
    scenario = snapshot.scenario
    for name in scenario.actors():
        actor_key(scenario.seed, name)
    if report_digest(snapshot.report) != snapshot.digest:
        return ["report digest does not match the report"]
    if not snapshot.records or snapshot.records[0][0] != "mc":
        return ["first record must be the mainchain genesis"]
    try:
        mc = McChain(decode_as(snapshot.records[0][2], McBlock))
        chains = {s.name: ScChain(sidechain_params(scenario, s), mc) for s in scenario.sidechains}
        for i, (kind, name, raw) in enumerate(snapshot.records[1:], start=1):
            if kind == "mc":
                mc.extend_chain(decode_as(raw, McBlock))
                continue
            chain = chains.get(name)
            if chain is None:
                return [f"record {i}: unknown sidechain {name!r}"]
            block = decode_as(raw, ScBlock)
            for ref in block.mc_refs:
                known = mc.blocks.get(ref.header.hash)
                if known is None or not verify_mc_reference(ref, chain.params.ledger_id, known.hash):
                    return [f"record {i}: reference does not match a known mainchain block"]
            chain.add_block(block)
    except (CodecError, InvalidBlock, Rejected, ValueError, TypeError, KeyError, IndexError,
            AttributeError) as exc:
        return [f"block rejected: {exc}"]
    problems = []
    final = snapshot.report.get("final", {})
    mc_final = final.get("mc", {})
    if mc_final.get("tip") != mc.tip.hex() or mc_final.get("height") != mc.height:
        problems.append("mainchain tip differs from the report")
    state = mc.tip_state
    for name, chain in chains.items():
        want = final.get("sidechains", {}).get(name, {})
        tip = chain.tip
        if want.get("sc_tip") != tip.hex() or want.get("state_digest") != chain.info[tip].state.digest.hex():
            problems.append(f"{name}: sidechain tip differs from the report")
        entry = state.sidechains.get(chain.params.ledger_id)
        if entry is not None and (want.get("balance") != entry.balance or want.get("certs") != sorted(entry.certs)):
            problems.append(f"{name}: registry differs from the report")
    return problems
