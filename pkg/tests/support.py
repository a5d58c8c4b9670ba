"""Shared test fixtures: a mainchain with one registered Latus sidechain, and small oracles."""

from __future__ import annotations

import dataclasses
import enum
import random
from collections.abc import Iterator
from dataclasses import replace
from typing import Any

from zendoo.crypto import MerkleStateTree, PrivateKey, Utxo, mst_position, tagged_hash
from zendoo.latus import BTTx, LatusParams, PaymentTx, ScChain, ft_metadata
from zendoo.latus.types import BT_ACC_INIT, bt_acc_extend, state_digest
from zendoo.latus.withdrawals import generate_wcert, sidechain_config
from zendoo.mainchain import (
    ForwardTransfer,
    McChain,
    McTransaction,
    TxInput,
    TxOutput,
)
from zendoo.transition import LatusKeys

NAMES = ("alice", "bob", "carol", "dave", "forger")
KEYS = {name: PrivateKey.derive("tests", name) for name in NAMES}


def addr(name: str) -> bytes:
    return KEYS[name].address


class World:
    """One mainchain plus one sidechain; ``step`` mines an MC block and forges an SC block on it."""

    def __init__(self, name: str = "sc1", depth: int = 6, start: int = 3, epoch_len: int = 4,
                 submit_len: int = 2, slots: int = 4, csw: bool = True, btr: bool = True,
                 seed: bytes = b"latus"):
        self.owners = {k.address: k for k in KEYS.values()}
        self.mc = McChain.create([TxOutput(addr("alice"), 10_000)])
        self.params = LatusParams(tagged_hash("tests-ledger", name.encode()), depth, start, epoch_len,
                                  submit_len, slots, ((addr("forger"), 10),))
        self.keys = LatusKeys(self.params, seed)
        self.config = sidechain_config(self.keys)
        if not csw:
            self.config = replace(self.config, csw_vk=None)
        if not btr:
            self.config = replace(self.config, btr_vk=None)
        _, rejected = self.mc.mine([self.config], nonce=1)
        assert not rejected, rejected
        self.sc = ScChain(self.params, self.mc)
        self.slot = 0

    @property
    def lid(self) -> bytes:
        return self.params.ledger_id

    @property
    def entry(self):
        return self.mc.tip_state.sidechains[self.lid]

    # mainchain ---------------------------------------------------------------

    def ft_tx(self, receiver: str | bytes, amount: int, metadata: bytes | None = None,
              sender: str = "alice", ledger_id: bytes | None = None) -> McTransaction:
        to = addr(receiver) if isinstance(receiver, str) else receiver
        meta = ft_metadata(to, addr(sender)) if metadata is None else metadata
        return self.fts_tx([ForwardTransfer(ledger_id or self.lid, meta, amount)], sender)

    def fts_tx(self, fts: list[ForwardTransfer], sender: str = "alice") -> McTransaction:
        """One signed MC transaction carrying ``fts``, paid from a single coin of ``sender``."""
        key = KEYS[sender]
        height = self.mc.height + 1
        total = sum(ft.amount for ft in fts)
        op, coin = next((op, c) for op, c in self.mc.tip_state.coins_of(key.address)
                        if c.mature_height <= height and c.output.amount >= total)
        change = coin.output.amount - total
        outputs = (TxOutput(key.address, change),) if change else ()
        unsigned = McTransaction((TxInput(op, b""),), outputs, tuple(fts))
        return McTransaction((TxInput(op, key.sign(unsigned.txid)),), outputs, tuple(fts))

    def transfers(self, pairs: list[tuple[str, int]]) -> McTransaction:
        return self.fts_tx([ForwardTransfer(self.lid, ft_metadata(addr(r), addr("alice")), n) for r, n in pairs])

    def mine(self, *items: Any, parent: bytes | None = None, nonce: int | None = None):
        height = (self.mc.height if parent is None else self.mc.state(parent).height) + 1
        return self.mc.mine(list(items), parent_hash=parent, nonce=height if nonce is None else nonce)

    # sidechain ---------------------------------------------------------------

    def forge(self, txs=(), max_refs: int | None = None, parent: bytes | None = None):
        parent = self.sc.tip if parent is None else parent
        while True:
            self.slot += 1
            key = self.owners.get(self.sc.leader(parent, self.slot))
            if key is not None:
                break
        block, dropped = self.sc.forge(parent, self.slot, key, txs, max_refs)
        self.sc.add_block(block)
        return block, dropped

    def step(self, *items: Any, txs=()):
        """Mine one MC block holding ``items`` and forge one SC block; returns the rejections."""
        _, rejected = self.mine(*items)
        _, dropped = self.forge(txs)
        return rejected, dropped

    def advance_to(self, height: int) -> None:
        while self.mc.height < height:
            self.step()

    def utxos(self, owner: str) -> list[Utxo]:
        return [u for u in self.sc.tip_state.mst.utxos() if u.addr == addr(owner)]

    def pay(self, sender: str, receiver: str, amount: int) -> PaymentTx:
        utxo = next(u for u in self.utxos(sender) if u.amount >= amount)
        outputs = [(addr(receiver), amount)]
        if utxo.amount > amount:
            outputs.append((addr(sender), utxo.amount - amount))
        return PaymentTx.create([utxo], [KEYS[sender]], outputs)

    def bt(self, sender: str, receiver: str, utxo: Utxo | None = None) -> BTTx:
        utxo = utxo or self.utxos(sender)[0]
        return BTTx.create([utxo], [KEYS[sender]], [(addr(receiver), utxo.amount)])

    def cert(self, epoch: int, tip: bytes | None = None):
        return generate_wcert(self.keys, self.sc, epoch, tip)


# ---------------------------------------------------------------------------
# UTXOs at chosen slots


def utxo_at(slot: int, depth: int, amount: int = 1, owner: str = "alice", label: bytes = b"") -> Utxo:
    """Search nonces until the UTXO lands on ``slot``."""
    i = 0
    while True:
        u = Utxo(addr(owner), amount, tagged_hash("tests-nonce", label, i.to_bytes(8, "big")))
        if mst_position(u, depth) == slot:
            return u
        i += 1


def payment_to_slots(inputs: list[Utxo], signers: list[PrivateKey], shape: list[tuple[int, int]],
                     depth: int, label: str) -> tuple[PaymentTx, list[PrivateKey]]:
    """Payment whose outputs, given as (slot, amount), land on those slots; searches receiver keys."""
    i = 0
    while True:
        receivers = [PrivateKey.derive("tests-receiver", label, str(i), str(j)) for j in range(len(shape))]
        tx = PaymentTx.create(inputs, signers, [(k.address, amount) for k, (_, amount) in zip(receivers, shape)])
        if [mst_position(u, depth) for u in tx.outputs] == [slot for slot, _ in shape]:
            return tx, receivers
        i += 1


# ---------------------------------------------------------------------------
# Naive list-based replay of sidechain transactions


class ListLedger:
    """UTXO multiset as a plain list plus the epoch's transfers and touched slots."""

    def __init__(self, depth: int, utxos=()):
        self.depth = depth
        self.utxos: list[Utxo] = list(utxos)
        self.bts: list = []
        self.touched: set[int] = set()

    def reset(self) -> None:
        self.bts = []
        self.touched = set()

    def _remove(self, u: Utxo) -> None:
        self.utxos.remove(u)
        self.touched.add(mst_position(u, self.depth))

    def _add(self, u: Utxo) -> None:
        self.utxos.append(u)
        self.touched.add(mst_position(u, self.depth))

    def apply(self, tx: Any) -> None:
        kind = type(tx).__name__
        if kind == "PaymentTx":
            for u in tx.inputs:
                self._remove(u)
            for u in tx.outputs:
                self._add(u)
        elif kind == "BTTx":
            for u in tx.inputs:
                self._remove(u)
            self.bts.extend(tx.backward_transfers)
        elif kind == "FTTx":
            for u in tx.outputs:
                self._add(u)
            self.bts.extend(tx.rejected)
        elif kind == "BTRTx":
            for u in tx.inputs:
                self._remove(u)
            self.bts.extend(tx.backward_transfers)
        else:
            raise TypeError(kind)

    def digest(self) -> bytes:
        tree = MerkleStateTree(self.depth, {mst_position(u, self.depth): u for u in self.utxos})
        assert len(tree) == len(self.utxos), "two UTXOs share a slot"
        return state_digest(tree.root, bt_acc_extend(BT_ACC_INIT, self.bts), tuple(sorted(self.touched)))


# ---------------------------------------------------------------------------
# Single-field mutation of nested dataclasses


def _bump(value: Any) -> Iterator[Any]:
    if isinstance(value, bool):
        yield not value
    elif isinstance(value, enum.Enum):
        members = list(type(value))
        yield members[(members.index(value) + 1) % len(members)]
    elif isinstance(value, int):
        yield value + 1
        yield value - 1
        yield value ^ 1
    elif isinstance(value, bytes):
        if value:
            yield bytes([value[0] ^ 1]) + value[1:]
        else:
            yield b"\x01"


def field_paths(obj: Any, prefix: tuple = (), limit: int = 12) -> list[tuple]:
    """Paths to every scalar reachable from ``obj`` (dataclass fields and tuple items)."""
    out: list[tuple] = []
    if len(prefix) > limit:
        return out
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            if f.init:
                out.extend(field_paths(getattr(obj, f.name), prefix + (f.name,), limit))
    elif isinstance(obj, tuple):
        for i, item in enumerate(obj):
            out.extend(field_paths(item, prefix + (i,), limit))
        if obj:
            out.append(prefix + ("drop",))
    elif obj is not None and not isinstance(obj, dict):
        out.append(prefix)
    return out


def rebuild(obj: Any, path: tuple, leaf) -> Any:
    if not path:
        return leaf(obj)
    head, rest = path[0], path[1:]
    if head == "drop":
        return obj[:-1]
    if isinstance(obj, tuple):
        items = list(obj)
        items[head] = rebuild(items[head], rest, leaf)
        return tuple(items)
    return replace(obj, **{head: rebuild(getattr(obj, head), rest, leaf)})


def mutate(obj: Any, path: tuple) -> Any | None:
    """Copy of ``obj`` with the scalar at ``path`` changed; None when no valid value exists."""
    for attempt in range(3):
        def leaf(value, attempt=attempt):
            options = list(_bump(value))
            if attempt >= len(options):
                raise LookupError
            return options[attempt]
        try:
            return rebuild(obj, path, leaf)
        except LookupError:
            return None
        except (ValueError, TypeError):
            continue
    return None


def sample_paths(obj: Any, k: int, rng: random.Random) -> list[tuple]:
    paths = field_paths(obj)
    return paths if len(paths) <= k else rng.sample(paths, k)


# ---------------------------------------------------------------------------
# The depth-3 MST delta walk-through


@dataclasses.dataclass
class DeltaWalkthrough:
    mst0: MerkleStateTree
    utxo1: Utxo
    utxo2: Utxo
    utxo3: Utxo
    tx1: PaymentTx
    tx2: PaymentTx


def delta_walkthrough() -> DeltaWalkthrough:
    """MST0 holds utxo1, utxo2, utxo3 at slots 0, 4, 6; tx1 spends utxo1 into slots 1 and 2,
    tx2 spends utxo4 (slot 1) into utxo6 at slot 7."""
    u1 = utxo_at(0, 3, 5, "alice", b"utxo1")
    u2 = utxo_at(4, 3, 4, "bob", b"utxo2")
    u3 = utxo_at(6, 3, 7, "carol", b"utxo3")
    mst0 = MerkleStateTree(3, {0: u1, 4: u2, 6: u3})
    tx1, (k4, _) = payment_to_slots([u1], [KEYS["alice"]], [(1, 2), (2, 3)], 3, "tx1")
    tx2, _ = payment_to_slots([tx1.outputs[0]], [k4], [(7, 2)], 3, "tx2")
    return DeltaWalkthrough(mst0, u1, u2, u3, tx1, tx2)
