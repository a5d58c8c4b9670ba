"""Scenario files: parsing, validation, serialization and random generation.

A scenario is YAML (JSON is accepted too, being a subset) with a ``version``
header. Time is a logical tick: sidechains get one slot per tick and the
mainchain mines one block every ``ticks_per_block`` ticks.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..errors import ScenarioError

SCENARIO_VERSION = 1

# kind -> (required fields, optional fields with defaults)
EVENT_FIELDS: dict[str, tuple[tuple[str, ...], dict[str, Any]]] = {
    "mc_transfer": (("sender", "receiver", "amount"), {}),
    "ft": (("sc", "sender", "receiver", "amount"), {"malformed": False}),
    "payment": (("sc", "sender", "receiver", "amount"), {}),
    "bt": (("sc", "sender", "receiver", "amount"), {}),
    "btr": (("sc", "owner", "receiver"), {"amount": None, "resubmit": False}),
    "csw": (("sc", "owner", "receiver"), {"amount": None, "resubmit": False}),
    "cert": (("sc",), {"epoch": None, "quality": None, "ledger": None, "extra_bt": None,
                       "corrupt_proof": False, "resubmit": False}),
    "withhold": (("sc",), {}),
    "release": (("sc",), {}),
    "skip": (("sc",), {"ticks": 1}),
    "fork": (("depth",), {"requeue": True}),
}

_INT_FIELDS = {"amount", "epoch", "quality", "extra_bt", "ticks", "depth"}
_BOOL_FIELDS = {"malformed", "resubmit", "corrupt_proof", "requeue"}


@dataclass(frozen=True)
class McSpec:
    ticks_per_block: int = 1
    allocations: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SidechainSpec:
    name: str
    stakers: dict[str, int]
    mst_depth: int = 16
    start_block: int = 3
    epoch_len: int = 4
    submit_len: int = 2
    slots_per_epoch: int = 4
    certs: str = "auto"


@dataclass(frozen=True)
class Event:
    at: int
    kind: str
    args: dict[str, Any]

    def get(self, key: str) -> Any:
        return self.args[key]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    mc: McSpec
    sidechains: tuple[SidechainSpec, ...]
    events: tuple[Event, ...]
    ticks: int
    version: int = SCENARIO_VERSION

    def with_seed(self, seed: int | None) -> Scenario:
        if seed is None:
            return self
        return Scenario(self.name, _seed(seed), self.mc, self.sidechains, self.events, self.ticks, self.version)

    def sidechain(self, name: str) -> SidechainSpec:
        for sc in self.sidechains:
            if sc.name == name:
                return sc
        raise KeyError(name)

    def actors(self) -> list[str]:
        """Every named party, in first-mention order."""
        names: dict[str, None] = {}
        for n in self.mc.allocations:
            names[n] = None
        for sc in self.sidechains:
            for n in sc.stakers:
                names[n] = None
        for ev in self.events:
            for key in ("sender", "receiver", "owner"):
                if key in ev.args:
                    names[ev.args[key]] = None
        return list(names)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "name": self.name,
            "seed": self.seed,
            "mc": {"ticks_per_block": self.mc.ticks_per_block, "allocations": dict(self.mc.allocations)},
            "sidechains": [asdict(sc) for sc in self.sidechains],
            "stop": {"ticks": self.ticks},
            "events": [_event_dict(ev) for ev in self.events],
        }


def _event_dict(ev: Event) -> dict[str, Any]:
    required, optional = EVENT_FIELDS[ev.kind]
    out: dict[str, Any] = {"at": ev.at, "do": ev.kind}
    for key in required:
        out[key] = ev.args[key]
    for key, default in optional.items():
        if ev.args[key] != default:
            out[key] = ev.args[key]
    return out


def _seed(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 1 << 64:
        raise ScenarioError(f"seed must be a 64-bit unsigned integer, got {value!r}")
    return value


def _int(value: Any, where: str, low: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ScenarioError(f"{where}: expected an integer >= {low}, got {value!r}")
    return value


def _name(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ScenarioError(f"{where}: expected a non-empty name, got {value!r}")
    return value


def _mapping(value: Any, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    return value


def _parse_event(raw: Any, i: int, sc_names: set[str]) -> Event:
    where = f"events[{i}]"
    raw = dict(_mapping(raw, where))
    if "do" not in raw or "at" not in raw:
        raise ScenarioError(f"{where}: 'at' and 'do' are required")
    kind = raw.pop("do")
    at = _int(raw.pop("at"), f"{where}.at", 1)
    if kind not in EVENT_FIELDS:
        raise ScenarioError(f"{where}: unknown event kind {kind!r}")
    required, optional = EVENT_FIELDS[kind]
    unknown = set(raw) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{where}: unknown fields {sorted(unknown)}")
    args: dict[str, Any] = {}
    for key in required:
        if key not in raw:
            raise ScenarioError(f"{where}: missing field {key!r}")
        args[key] = raw[key]
    for key, default in optional.items():
        args[key] = raw.get(key, default)
    for key, value in args.items():
        if value is None:
            continue
        if key in _INT_FIELDS:
            args[key] = _int(value, f"{where}.{key}", 1 if key in ("amount", "ticks", "depth") else 0)
        elif key in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise ScenarioError(f"{where}.{key}: expected a boolean")
        else:
            args[key] = _name(value, f"{where}.{key}")
    if "sc" in args and args["sc"] not in sc_names:
        raise ScenarioError(f"{where}: unknown sidechain {args['sc']!r}")
    return Event(at, kind, args)


def _parse_sidechain(raw: Any, i: int) -> SidechainSpec:
    where = f"sidechains[{i}]"
    raw = _mapping(raw, where)
    known = set(SidechainSpec.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"{where}: unknown fields {sorted(unknown)}")
    stakers = {_name(k, f"{where}.stakers"): _int(v, f"{where}.stakers.{k}", 1)
               for k, v in _mapping(raw.get("stakers"), f"{where}.stakers").items()}
    if not stakers:
        raise ScenarioError(f"{where}: at least one staker is required")
    spec = SidechainSpec(
        name=_name(raw.get("name"), f"{where}.name"),
        stakers=stakers,
        mst_depth=_int(raw.get("mst_depth", 16), f"{where}.mst_depth", 1),
        start_block=_int(raw.get("start_block", 3), f"{where}.start_block", 2),
        epoch_len=_int(raw.get("epoch_len", 4), f"{where}.epoch_len", 2),
        submit_len=_int(raw.get("submit_len", 2), f"{where}.submit_len", 1),
        slots_per_epoch=_int(raw.get("slots_per_epoch", 4), f"{where}.slots_per_epoch", 1),
        certs=raw.get("certs", "auto"),
    )
    if spec.submit_len >= spec.epoch_len:
        raise ScenarioError(f"{where}: submit_len must be below epoch_len")
    if spec.certs not in ("auto", "manual"):
        raise ScenarioError(f"{where}.certs: expected 'auto' or 'manual'")
    if spec.mst_depth > 32:
        raise ScenarioError(f"{where}.mst_depth: at most 32")
    return spec


def scenario_from_dict(raw: Any) -> Scenario:
    raw = _mapping(raw, "scenario")
    if "version" not in raw:
        raise ScenarioError("missing version header")
    if raw["version"] != SCENARIO_VERSION:
        raise ScenarioError(f"unsupported scenario version {raw['version']!r}")
    unknown = set(raw) - {"version", "name", "seed", "mc", "sidechains", "stop", "events"}
    if unknown:
        raise ScenarioError(f"unknown top-level fields {sorted(unknown)}")
    mc_raw = _mapping(raw.get("mc"), "mc")
    allocations = {_name(k, "mc.allocations"): _int(v, f"mc.allocations.{k}", 1)
                   for k, v in _mapping(mc_raw.get("allocations"), "mc.allocations").items()}
    mc = McSpec(_int(mc_raw.get("ticks_per_block", 1), "mc.ticks_per_block", 1), allocations)
    scs = raw.get("sidechains") or []
    if not isinstance(scs, list):
        raise ScenarioError("sidechains: expected a list")
    sidechains = tuple(_parse_sidechain(s, i) for i, s in enumerate(scs))
    names = [s.name for s in sidechains]
    if len(set(names)) != len(names):
        raise ScenarioError("sidechain names must be unique")
    events_raw = raw.get("events") or []
    if not isinstance(events_raw, list):
        raise ScenarioError("events: expected a list")
    events = tuple(_parse_event(e, i, set(names)) for i, e in enumerate(events_raw))
    stop = _mapping(raw.get("stop"), "stop")
    if "ticks" not in stop:
        raise ScenarioError("stop.ticks is required")
    return Scenario(
        name=str(raw.get("name", "scenario")),
        seed=_seed(raw.get("seed", 0)),
        mc=mc,
        sidechains=sidechains,
        events=events,
        ticks=_int(stop["ticks"], "stop.ticks", 1),
    )


def parse_scenario(text: str) -> Scenario:
    if not text.strip():
        raise ScenarioError("empty scenario")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from None
    return scenario_from_dict(raw)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def dump_scenario(scenario: Scenario) -> str:
    """YAML text with the version header first; round-trips through parse_scenario."""
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None, width=120)


def scenario_json(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Random scenarios


def random_scenario(seed: int, max_blocks: int = 500, max_sidechains: int = 3,
                    min_blocks: int = 12) -> Scenario:
    """A random but well-formed scenario; the same seed always gives the same file."""
    rng = random.Random(seed)
    blocks = rng.randint(min(min_blocks, max_blocks), max_blocks)
    users = [f"u{i}" for i in range(rng.randint(2, 5))]
    allocations = {u: rng.randint(50, 500) for u in users}
    sidechains = []
    for i in range(rng.randint(1, max_sidechains)):
        epoch_len = rng.randint(3, 8)
        sidechains.append(SidechainSpec(
            name=f"sc{i}",
            stakers={f"f{i}": 10},
            mst_depth=rng.randint(4, 8),
            start_block=rng.randint(2, 6),
            epoch_len=epoch_len,
            submit_len=rng.randint(1, epoch_len - 1),
            slots_per_epoch=rng.randint(2, 6),
        ))
    events: list[Event] = []
    for tick in range(2, blocks + 1):
        if rng.random() < 0.35:
            continue
        sc = rng.choice(sidechains).name
        a, b = rng.sample(users, 2)
        roll = rng.random()
        if roll < 0.25:
            events.append(_ev(tick, "ft", sc=sc, sender=a, receiver=b, amount=rng.randint(1, 20),
                              malformed=rng.random() < 0.05))
        elif roll < 0.5:
            events.append(_ev(tick, "payment", sc=sc, sender=a, receiver=b, amount=rng.randint(1, 10)))
        elif roll < 0.65:
            events.append(_ev(tick, "bt", sc=sc, sender=a, receiver=b, amount=rng.randint(1, 8)))
        elif roll < 0.72:
            events.append(_ev(tick, "btr", sc=sc, owner=a, receiver=a, resubmit=rng.random() < 0.2))
        elif roll < 0.77:
            events.append(_ev(tick, "csw", sc=sc, owner=a, receiver=a))
        elif roll < 0.82:
            events.append(_ev(tick, "mc_transfer", sender=a, receiver=b, amount=rng.randint(1, 30)))
        elif roll < 0.87:
            events.append(_ev(tick, "skip", sc=sc, ticks=rng.randint(1, 3)))
        elif roll < 0.90:
            events.append(_ev(tick, "withhold" if rng.random() < 0.5 else "release", sc=sc))
        elif roll < 0.93 and tick > 8:
            events.append(_ev(tick, "fork", depth=rng.randint(1, 3), requeue=rng.random() < 0.7))
        elif roll < 0.96:
            events.append(_ev(tick, "cert", sc=sc, resubmit=True))
        else:
            events.append(_ev(tick, "cert", sc=sc, quality=rng.randint(0, 40)))
    return Scenario(f"random-{seed}", seed, McSpec(1, allocations), tuple(sidechains), tuple(events), blocks)


def _ev(at: int, kind: str, **given: Any) -> Event:
    _, optional = EVENT_FIELDS[kind]
    args = dict(optional)
    args.update(given)
    return Event(at, kind, args)
