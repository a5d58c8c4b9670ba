"""Deterministic scheduler driving one mainchain and its Latus sidechains.

Each tick: the tick's scripted events are turned into mempool items, the
mainchain mines if the tick is a block tick, then every sidechain forges the
tick's slot. Module invariants are checked after every tick and the run stops
at the first violation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from ..codec import encode
from ..crypto import NULL_ADDRESS, PrivateKey, Utxo, tagged_hash
from ..errors import InvalidBlock, InvariantViolation, Rejected, ZendooError
from ..latus.consensus import ScChain
from ..latus.types import BTTx, LatusParams, PaymentTx, ft_metadata, nullifier
from ..latus.withdrawals import (
    build_btr_proof,
    build_csw_proof,
    find_commitment,
    generate_wcert,
    sidechain_config,
)
from ..mainchain import (
    BackwardTransfer,
    ForwardTransfer,
    McBlock,
    McChain,
    McTransaction,
    Status,
    TxInput,
    TxOutput,
    WithdrawalCertificate,
    safeguard_violations,
)
from ..transition import LatusKeys
from .report import RunReport
from .scenario import Event, Scenario, SidechainSpec


class HarnessReason:
    """Reasons for events the harness could not even turn into a submission."""

    INSUFFICIENT_FUNDS = "insufficient-funds"
    NO_COMMITTED_UTXO = "no-committed-utxo"
    NO_CLOSED_EPOCH = "no-closed-epoch"
    CERT_UNAVAILABLE = "cert-unavailable"
    NOTHING_TO_RESUBMIT = "nothing-to-resubmit"
    FORK_TOO_DEEP = "fork-too-deep"
    NOT_REGISTERED = "sidechain-not-registered"


# Nonce ranges keep scripted fork blocks apart from regular ones.
_FORK_NONCE = 1 << 40


def actor_key(seed: int, name: str) -> PrivateKey:
    return PrivateKey.derive("actor", seed.to_bytes(8, "big"), name)


def ledger_id_for(seed: int, name: str) -> bytes:
    return tagged_hash("ledger-id", seed.to_bytes(8, "big"), name.encode())


def sidechain_params(scenario: Scenario, spec: SidechainSpec) -> LatusParams:
    stakes = tuple((actor_key(scenario.seed, n).address, s) for n, s in spec.stakers.items())
    return LatusParams(ledger_id_for(scenario.seed, spec.name), spec.mst_depth, spec.start_block,
                       spec.epoch_len, spec.submit_len, spec.slots_per_epoch, stakes)


@dataclass(frozen=True)
class _Tag:
    source: str
    kind: str
    sc: str | None
    tick: int


class _Sidechain:
    def __init__(self, spec: SidechainSpec, params: LatusParams, mc: McChain):
        self.spec = spec
        self.name = spec.name
        self.params = params
        self.keys = LatusKeys(params)
        self.chain = ScChain(params, mc)
        self.mempool: list[tuple[Any, _Tag]] = []
        self.withheld = False
        self.skip_until = 0
        self.last_cert: WithdrawalCertificate | None = None
        self.last_withdrawal: Any = None

    @property
    def ledger_id(self) -> bytes:
        return self.params.ledger_id


class Simulation:
    """One run of a scenario; ``records`` lists every block in arrival order."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario = scenario.with_seed(seed)
        self.seed = scenario.seed
        self.actors = {n: actor_key(self.seed, n) for n in scenario.actors()}
        self.owner = {k.address: k for k in self.actors.values()}
        allocations = [TxOutput(self.actors[n].address, a) for n, a in scenario.mc.allocations.items()]
        self.mc = McChain.create(allocations, nonce=self.seed)
        self.records: list[tuple[str, str | None, Any]] = [("mc", None, self.mc.block(self.mc.tip))]
        self.sidechains = {s.name: _Sidechain(s, sidechain_params(scenario, s), self.mc)
                           for s in scenario.sidechains}
        self.mempool: list[tuple[Any, _Tag]] = [
            (sidechain_config(sc.keys), _Tag("setup", "register", sc.name, 0)) for sc in self.sidechains.values()
        ]
        self.report = RunReport(scenario.name, self.seed)
        self.tick = 0
        self._by_tick: dict[int, list[tuple[int, Event]]] = {}
        for i, ev in enumerate(scenario.events):
            self._by_tick.setdefault(ev.at, []).append((i, ev))

    # ------------------------------------------------------------------ driver

    def run(self) -> RunReport:
        try:
            for tick in range(1, self.scenario.ticks + 1):
                self.step(tick)
        except InvariantViolation:
            pass
        self._finish()
        return self.report

    def step(self, tick: int) -> None:
        self.tick = tick
        for idx, ev in self._by_tick.get(tick, ()):
            self._handle(idx, ev)
        if tick % self.scenario.mc.ticks_per_block == 0:
            self._auto_certs()
            self._mine()
        for sc in self.sidechains.values():
            self._forge(sc)
        self._check_tick()
        self.report.ticks = tick

    # ------------------------------------------------------------- recording

    def _event(self, tag: _Tag, outcome: str, reason: str | None = None, detail: str = "", **extra: Any) -> None:
        entry = {"tick": self.tick, "source": tag.source, "kind": tag.kind, "sc": tag.sc,
                 "outcome": outcome, "reason": reason, "detail": detail}
        entry.update(extra)
        self.report.events.append(entry)

    def _reject(self, tag: _Tag, reason: str, detail: str = "") -> None:
        self._event(tag, "rejected", reason, detail)

    def _check(self, name: str, ok: bool, detail: str = "") -> None:
        self.report.checks[name] = self.report.checks.get(name, 0) + 1
        if not ok:
            self.report.violations.append({"tick": self.tick, "name": name, "detail": detail})
            raise InvariantViolation(f"{name}: {detail}")

    # ---------------------------------------------------------------- events

    def _handle(self, idx: int, ev: Event) -> None:
        tag = _Tag(f"event:{idx}", ev.kind, ev.args.get("sc"), self.tick)
        handler = getattr(self, f"_ev_{ev.kind}")
        try:
            handler(tag, ev.args)
        except Rejected as exc:
            self._reject(tag, exc.reason, exc.detail)

    def _ev_mc_transfer(self, tag: _Tag, a: dict) -> None:
        tx = self._mc_tx(a["sender"], [TxOutput(self.actors[a["receiver"]].address, a["amount"])], ())
        self.mempool.append((tx, tag))

    def _ev_ft(self, tag: _Tag, a: dict) -> None:
        sc = self.sidechains[a["sc"]]
        sender = self.actors[a["sender"]]
        # a malformed FT names the null receiver; the sidechain bounces it back to the payback address
        receiver = NULL_ADDRESS if a["malformed"] else self.actors[a["receiver"]].address
        meta = ft_metadata(receiver, sender.address)
        ft = ForwardTransfer(sc.ledger_id, meta, a["amount"])
        self.mempool.append((self._mc_tx(a["sender"], [], [ft]), tag))

    def _ev_payment(self, tag: _Tag, a: dict) -> None:
        sc = self.sidechains[a["sc"]]
        key = self.actors[a["sender"]]
        inputs, change = self._select_sc(sc, key.address, a["amount"])
        outs = [(self.actors[a["receiver"]].address, a["amount"])]
        if change:
            outs.append((key.address, change))
        sc.mempool.append((PaymentTx.create(inputs, [key] * len(inputs), outs), tag))

    def _ev_bt(self, tag: _Tag, a: dict) -> None:
        sc = self.sidechains[a["sc"]]
        key = self.actors[a["sender"]]
        receiver = self.actors[a["receiver"]].address
        amount = a["amount"]
        inputs, change = self._select_sc(sc, key.address, amount)
        if change:
            # split first so the transfer spends an exact output created in the same block
            split = PaymentTx.create(inputs, [key] * len(inputs), [(key.address, amount), (key.address, change)])
            sc.mempool.append((split, replace(tag, kind="bt-split")))
            inputs = [split.outputs[0]]
        sc.mempool.append((BTTx.create(inputs, [key] * len(inputs), [(receiver, amount)]), tag))

    def _ev_btr(self, tag: _Tag, a: dict) -> None:
        self._withdrawal(tag, a, "btr")

    def _ev_csw(self, tag: _Tag, a: dict) -> None:
        self._withdrawal(tag, a, "csw")

    def _ev_cert(self, tag: _Tag, a: dict) -> None:
        sc = self.sidechains[a["sc"]]
        if a["resubmit"]:
            if sc.last_cert is None:
                raise Rejected(HarnessReason.NOTHING_TO_RESUBMIT)
            self.mempool.append((sc.last_cert, tag))
            return
        epoch = a["epoch"] if a["epoch"] is not None else self._due_epoch(sc)
        if epoch is None or epoch < 0:
            raise Rejected(HarnessReason.NO_CLOSED_EPOCH)
        cert = self._make_cert(sc, epoch)
        if a["quality"] is not None:
            cert = replace(cert, quality=a["quality"])
        if a["ledger"] is not None:
            cert = replace(cert, ledger_id=ledger_id_for(self.seed, a["ledger"]))
        if a["extra_bt"] is not None:
            receiver = next(iter(self.actors.values())).address
            cert = replace(cert, bt_list=cert.bt_list + (BackwardTransfer(receiver, a["extra_bt"]),))
        if a["corrupt_proof"]:
            binding = bytes([cert.proof.public_binding[0] ^ 1]) + cert.proof.public_binding[1:]
            cert = replace(cert, proof=replace(cert.proof, public_binding=binding))
        sc.last_cert = cert
        self.mempool.append((cert, tag))

    def _ev_withhold(self, tag: _Tag, a: dict) -> None:
        self.sidechains[a["sc"]].withheld = True
        self._event(tag, "done")

    def _ev_release(self, tag: _Tag, a: dict) -> None:
        self.sidechains[a["sc"]].withheld = False
        self._event(tag, "done")

    def _ev_skip(self, tag: _Tag, a: dict) -> None:
        self.sidechains[a["sc"]].skip_until = self.tick + a["ticks"]
        self._event(tag, "done")

    def _ev_fork(self, tag: _Tag, a: dict) -> None:
        depth = a["depth"]
        active = self.mc.active_chain()
        if depth >= len(active) - 1:
            raise Rejected(HarnessReason.FORK_TOO_DEEP, f"chain height {len(active) - 1}")
        old_tips = {name: sc.chain.tip for name, sc in self.sidechains.items()}
        orphaned = [self.mc.block(h) for h in active[len(active) - depth:]]
        parent = active[len(active) - depth - 1]
        for i in range(depth + 1):
            block, _ = self.mc.mine([], parent_hash=parent, nonce=_FORK_NONCE + self.tick * 64 + i)
            self._record_mc(block, [])
            parent = block.hash
        self._check("mc-reorg", self.mc.tip == parent, "fork branch did not become the tip")
        requeued = 0
        if a["requeue"]:
            items = [(item, _Tag("requeue", _kind_of(item), self._sc_of(item), self.tick))
                     for block in orphaned for item in _body_items(block)]
            self.mempool[:0] = items
            requeued += len(items)
            for name, sc in self.sidechains.items():
                txs = _reverted_txs(sc.chain, old_tips[name])
                sc.mempool[:0] = [(tx, _Tag("requeue", type(tx).__name__, name, self.tick)) for tx in txs]
                requeued += len(txs)
        self._event(tag, "done", detail=f"orphaned {depth} blocks, requeued {requeued} items")

    def _sc_of(self, item: Any) -> str | None:
        lids = {getattr(item, "ledger_id", None)}
        lids.update(ft.ledger_id for ft in getattr(item, "forward_transfers", ()))
        for sc in self.sidechains.values():
            if sc.ledger_id in lids:
                return sc.name
        return None

    # ------------------------------------------------------------- builders

    def _mc_tx(self, sender: str, outputs: list[TxOutput], fts: list[ForwardTransfer]) -> McTransaction:
        key = self.actors[sender]
        need = sum(o.amount for o in outputs) + sum(f.amount for f in fts)
        state = self.mc.tip_state
        reserved = {i.outpoint for item, _ in self.mempool if isinstance(item, McTransaction) for i in item.inputs}
        chosen, total = [], 0
        for op, coin in state.coins_of(key.address):
            if op in reserved or coin.mature_height > state.height + 1:
                continue
            chosen.append(op)
            total += coin.output.amount
            if total >= need:
                break
        if total < need:
            raise Rejected(HarnessReason.INSUFFICIENT_FUNDS, f"{sender} has {total} < {need} on the mainchain")
        outs = list(outputs)
        if total > need:
            outs.append(TxOutput(key.address, total - need))
        draft = McTransaction(tuple(TxInput(op, b"") for op in chosen), tuple(outs), tuple(fts))
        sig = key.sign(draft.txid)
        return McTransaction(tuple(TxInput(op, sig) for op in chosen), draft.outputs, draft.forward_transfers)

    def _select_sc(self, sc: _Sidechain, addr: bytes, amount: int) -> tuple[list[Utxo], int]:
        """Owner UTXOs at the sidechain tip covering ``amount``, and the change."""
        reserved = {u for tx, _ in sc.mempool for u in getattr(tx, "inputs", ())}
        mine = [u for u in sc.chain.tip_state.mst.utxos() if u.addr == addr and u not in reserved]
        exact = [u for u in mine if u.amount == amount]
        if exact:
            return exact[:1], 0
        chosen, total = [], 0
        for u in sorted(mine, key=lambda u: (-u.amount, u.nonce)):
            chosen.append(u)
            total += u.amount
            if total >= amount:
                return chosen, total - amount
        raise Rejected(HarnessReason.INSUFFICIENT_FUNDS, f"{total} < {amount} on the sidechain")

    def _due_epoch(self, sc: _Sidechain) -> int | None:
        """Withdrawal epoch whose certificate the next MC block may carry."""
        h = self.mc.height + 1
        p = sc.params
        if h < p.start_block:
            return None
        epoch, index = divmod(h - p.start_block, p.epoch_len)
        return epoch - 1 if index < p.submit_len else epoch

    def _make_cert(self, sc: _Sidechain, epoch: int) -> WithdrawalCertificate:
        if sc.chain.closing_block(epoch) is None:
            raise Rejected(HarnessReason.NO_CLOSED_EPOCH, f"epoch {epoch} is not closed on the sidechain")
        try:
            return generate_wcert(sc.keys, sc.chain, epoch)
        except ZendooError as exc:
            raise Rejected(HarnessReason.CERT_UNAVAILABLE, str(exc)) from None

    def _withdrawal(self, tag: _Tag, a: dict, kind: str) -> None:
        sc = self.sidechains[a["sc"]]
        if a["resubmit"]:
            if sc.last_withdrawal is None:
                raise Rejected(HarnessReason.NOTHING_TO_RESUBMIT)
            self.mempool.append((sc.last_withdrawal, tag))
            return
        entry = self.mc.tip_state.sidechains.get(sc.ledger_id)
        if entry is None:
            raise Rejected(HarnessReason.NOT_REGISTERED)
        owner = self.actors[a["owner"]]
        pending = {getattr(item, "nullifier", None) for item, _ in self.mempool}
        seen: set[Utxo] = set()
        for utxo in self._withdrawal_candidates(sc, entry, owner.address, kind):
            if utxo in seen or (a["amount"] is not None and utxo.amount != a["amount"]):
                continue
            seen.add(utxo)
            null = nullifier(utxo)
            if null in entry.nullifiers or null in pending:
                continue
            build = build_btr_proof if kind == "btr" else build_csw_proof
            try:
                mst, epoch_id = find_commitment(sc.chain, self.mc, utxo)
                req = build(sc.keys, self.mc, utxo, owner, self.actors[a["receiver"]].address, mst, epoch_id)
            except ZendooError:
                # spent or refilled after its last certified state: not provably unspent
                continue
            sc.last_withdrawal = req
            self.mempool.append((req, tag))
            return
        raise Rejected(HarnessReason.NO_COMMITTED_UTXO, f"{a['owner']} has nothing withdrawable")

    def _withdrawal_candidates(self, sc: _Sidechain, entry: Any, addr: bytes, kind: str):
        if kind == "btr":
            yield from (u for u in sc.chain.tip_state.mst.utxos() if u.addr == addr)
            return
        # a ceased sidechain pays from its certified states, newest first
        for epoch_id in sorted(entry.certs, reverse=True):
            info = None
            rec = entry.certs[epoch_id]
            cert = next((c for c in self.mc.block(self.mc.tip_state.hashes[rec.height]).body.certificates
                         if c.ledger_id == sc.ledger_id), None)
            if cert is not None:
                info = sc.chain.info.get(cert.proofdata[0])
            if info is not None:
                yield from (u for u in info.state.mst.utxos() if u.addr == addr)

    # ------------------------------------------------------------ mainchain

    def _auto_certs(self) -> None:
        state = self.mc.tip_state
        pending = {item.ledger_id for item, _ in self.mempool if isinstance(item, WithdrawalCertificate)}
        for sc in self.sidechains.values():
            if sc.spec.certs != "auto" or sc.withheld or sc.ledger_id in pending:
                continue
            entry = state.sidechains.get(sc.ledger_id)
            if entry is None or entry.status is Status.CEASED:
                continue
            h = state.height + 1
            p = sc.params
            if h < p.start_block:
                continue
            epoch, index = divmod(h - p.start_block, p.epoch_len)
            if epoch < 1 or index >= p.submit_len or (epoch - 1) in entry.certs:
                continue
            tag = _Tag("auto", "cert", sc.name, self.tick)
            try:
                cert = self._make_cert(sc, epoch - 1)
            except Rejected as exc:
                if exc.reason != HarnessReason.NO_CLOSED_EPOCH:
                    self._reject(tag, exc.reason, exc.detail)
                continue
            sc.last_cert = cert
            self.mempool.append((cert, tag))

    def _mine(self) -> None:
        items = [item for item, _ in self.mempool]
        tags = {id(item): tag for item, tag in self.mempool}
        self.mempool = []
        block, rejected = self.mc.mine(items, nonce=self.tick)
        for item, verdict in rejected:
            self._reject(tags[id(item)], verdict.reason, verdict.detail)
        for item in _body_items(block):
            tag = tags[id(item)]
            self._event(tag, "accepted", mc_height=block.height)
        self._record_mc(block, rejected)

    def _record_mc(self, block: McBlock, rejected: list) -> None:
        self.records.append(("mc", None, block))
        state = self.mc.state(block.hash)
        summary = {
            "tick": self.tick,
            "height": block.height,
            "hash": block.hash.hex(),
            "parent": block.header.prev_block.hex(),
            "items": len(_body_items(block)),
            "rejected": len(rejected),
            "sidechains": {},
        }
        for sc in self.sidechains.values():
            entry = state.sidechains.get(sc.ledger_id)
            if entry is not None:
                summary["sidechains"][sc.name] = {"balance": entry.balance, "status": entry.status.value}
        self.report.blocks.append(summary)
        problems = safeguard_violations(state)
        self._check("mc-safeguard", not problems, "; ".join(problems))

    # ------------------------------------------------------------ sidechain

    def _forge(self, sc: _Sidechain) -> None:
        if self.tick < sc.skip_until:
            return
        chain = sc.chain
        parent = chain.tip
        slot = self.tick
        if slot <= chain.blocks[parent].slot:
            return
        key = self.owner.get(chain.leader(parent, slot))
        if key is None:
            return
        block, dropped = chain.forge(parent, slot, key, [tx for tx, _ in sc.mempool])
        tags = {id(tx): tag for tx, tag in sc.mempool}
        sc.mempool = []
        try:
            chain.add_block(block)
        except InvalidBlock as exc:
            self._check("sc-forge-valid", False, f"{sc.name}: {exc}")
        self.records.append(("sc", sc.name, block))
        for tx, err in dropped:
            self._reject(tags[id(tx)], err.reason, err.detail)
        for tx in block.txs:
            self._event(tags[id(tx)], "accepted", sc_height=block.height)
        info = chain.info[block.hash]
        forwarded = sum(ft.amount for ref in block.mc_refs if ref.forward_transfers is not None
                        for ft in ref.forward_transfers.fts)
        gained = info.state.value() - info.state_before.value()
        self._check("sc-conservation", gained == forwarded,
                    f"{sc.name} block {block.height}: value moved by {gained}, forwarded {forwarded}")

    # ------------------------------------------------------------ invariants

    def _check_tick(self) -> None:
        state = self.mc.tip_state
        for sc in self.sidechains.values():
            entry = state.sidechains.get(sc.ledger_id)
            tip = sc.chain.tip
            self._check("sc-tip-eligible", sc.chain.eligible(tip), sc.name)
            if entry is None:
                continue
            value = sc.chain.info[tip].state.mst.total()
            self._check("sc-value-backed", value <= entry.ft_total,
                        f"{sc.name}: {value} on the sidechain exceeds {entry.ft_total} forwarded")

    def _finish(self) -> None:
        state = self.mc.tip_state
        balances: dict[str, list[list[int]]] = {}
        for sc in self.sidechains.values():
            traj = []
            for h, bh in enumerate(state.hashes):
                entry = self.mc.state(bh).sidechains.get(sc.ledger_id)
                if entry is not None:
                    traj.append([h, entry.balance])
            balances[sc.name] = traj
        self.report.balances = balances
        final: dict[str, Any] = {"mc": {"height": state.height, "tip": state.tip.hex()}, "sidechains": {}}
        for sc in self.sidechains.values():
            entry = state.sidechains.get(sc.ledger_id)
            tip = sc.chain.tip
            sc_state = sc.chain.info[tip].state
            final["sidechains"][sc.name] = {
                "ledger_id": sc.ledger_id.hex(),
                "status": entry.status.value if entry else "unregistered",
                "balance": entry.balance if entry else 0,
                "ft_total": entry.ft_total if entry else 0,
                "cert_total": entry.cert_total if entry else 0,
                "csw_total": entry.csw_total if entry else 0,
                "certs": sorted(entry.certs) if entry else [],
                "nullifiers": len(entry.nullifiers) if entry else 0,
                "sc_height": sc.chain.blocks[tip].height,
                "sc_tip": tip.hex(),
                "state_digest": sc_state.digest.hex(),
                "sc_value": sc_state.mst.total(),
            }
        self.report.final = final


def _body_items(block: McBlock) -> list:
    b = block.body
    return [*b.registrations, *b.transactions, *b.btrs, *b.csws, *b.certificates]


def _kind_of(item: Any) -> str:
    return type(item).__name__


def _reverted_txs(chain: ScChain, old_tip: bytes) -> list:
    """Native txs on the chain to ``old_tip`` that are not on the current best chain."""
    keep = set(chain.chain())
    out = []
    for h in chain.chain(old_tip):
        if h not in keep:
            out.extend(chain.blocks[h].txs)
    return out


def run(scenario: Scenario, seed: int | None = None) -> RunReport:
    return Simulation(scenario, seed).run()


def state_fingerprint(sim: Simulation) -> bytes:
    """Digest over the MC tip and every sidechain tip state."""
    parts = [sim.mc.tip]
    for sc in sim.sidechains.values():
        parts.append(encode(sc.chain.tip_state))
    return tagged_hash("sim-fingerprint", *parts)
