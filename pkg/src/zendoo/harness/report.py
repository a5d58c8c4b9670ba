"""Run reports: structure, canonical JSON, digest and a text rendering."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any


@dataclass
class RunReport:
    scenario: str
    seed: int
    ticks: int = 0
    blocks: list[dict[str, Any]] = field(default_factory=list)
    balances: dict[str, list[list[int]]] = field(default_factory=dict)
    events: list[dict[str, Any]] = field(default_factory=list)
    checks: dict[str, int] = field(default_factory=dict)
    violations: list[dict[str, Any]] = field(default_factory=list)
    final: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "ticks": self.ticks,
            "ok": self.ok,
            "blocks": self.blocks,
            "balances": self.balances,
            "events": self.events,
            "invariants": {"checks": dict(sorted(self.checks.items())), "violations": self.violations},
            "final": self.final,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> RunReport:
        inv = raw.get("invariants", {})
        return cls(raw["scenario"], raw["seed"], raw.get("ticks", 0), raw.get("blocks", []),
                   raw.get("balances", {}), raw.get("events", []), inv.get("checks", {}),
                   inv.get("violations", []), raw.get("final", {}))

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def digest(self) -> str:
        return report_digest(self.to_dict())

    def rejections(self) -> list[dict[str, Any]]:
        return [e for e in self.events if e["outcome"] == "rejected"]

    def events_of(self, kind: str, outcome: str | None = None) -> list[dict[str, Any]]:
        return [e for e in self.events if e["kind"] == kind and (outcome is None or e["outcome"] == outcome)]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def report_digest(report: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(report).encode()).hexdigest()


def render_text(report: RunReport) -> str:
    lines = [
        f"scenario {report.scenario} (seed {report.seed}): {report.ticks} ticks, {len(report.blocks)} MC blocks mined",
    ]
    mc = report.final.get("mc", {})
    if mc:
        lines.append(f"mainchain tip height {mc['height']} {mc['tip'][:16]}")
    for name, sc in report.final.get("sidechains", {}).items():
        lines.append(
            f"  {name}: {sc['status']} balance={sc['balance']} ft={sc['ft_total']} "
            f"cert={sc['cert_total']} csw={sc['csw_total']} certs={sc['certs']} sc_height={sc['sc_height']}"
        )
    accepted = sum(1 for e in report.events if e["outcome"] == "accepted")
    rejected = report.rejections()
    lines.append(f"events: {accepted} accepted, {len(rejected)} rejected")
    counts: dict[str, int] = {}
    for e in rejected:
        key = f"{e['kind']}:{e['reason']}"
        counts[key] = counts.get(key, 0) + 1
    for key in sorted(counts):
        lines.append(f"  rejected {key} x{counts[key]}")
    checks = sum(report.checks.values())
    if report.ok:
        lines.append(f"invariants: all {checks} checks held")
    else:
        lines.append(f"invariants: {len(report.violations)} violated")
        for v in report.violations:
            lines.append(f"  tick {v['tick']} {v['name']}: {v['detail']}")
    lines.append(f"digest {report.digest}")
    return "\n".join(lines)
