"""Latus sidechain data types: parameters, transactions, references, blocks and state."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any

from ..codec import encode, serializable
from ..crypto import (
    NULL_ADDRESS,
    MerkleProof,
    MerkleStateTree,
    MstDelta,
    Utxo,
    is_digest,
    tagged_hash,
)
from ..mainchain import (
    BackwardTransfer,
    CertSummary,
    ForwardTransfer,
    McBlockHeader,
    NeighborProof,
    WithdrawalSummary,
    _as_tuple,
    _check_int,
)
from ..proofsys import make_schema


@serializable
@dataclass(frozen=True)
class LatusParams:
    """Circuit and consensus parameters of one Latus sidechain."""

    ledger_id: bytes
    mst_depth: int
    start_block: int
    epoch_len: int
    submit_len: int
    slots_per_epoch: int
    genesis_stakes: tuple[tuple[bytes, int], ...]

    def __post_init__(self):
        if not is_digest(self.ledger_id):
            raise ValueError("ledger_id must be 32 bytes")
        _check_int(self.mst_depth, 1, "mst_depth")
        _check_int(self.start_block, 1, "start_block")
        _check_int(self.epoch_len, 2, "epoch_len")
        _check_int(self.submit_len, 1, "submit_len")
        if self.submit_len >= self.epoch_len:
            raise ValueError("submit_len must be below epoch_len")
        _check_int(self.slots_per_epoch, 1, "slots_per_epoch")
        stakes = tuple(tuple(x) for x in self.genesis_stakes)
        object.__setattr__(self, "genesis_stakes", stakes)
        if not stakes or any(not is_digest(a) or not isinstance(s, int) or s < 1 for a, s in stakes):
            raise ValueError("genesis stakes must be non-empty (address, stake >= 1) pairs")

    def epoch_last_height(self, epoch_id: int) -> int:
        return self.start_block + (epoch_id + 1) * self.epoch_len - 1

    def mc_epoch(self, mc_height: int) -> int:
        return (mc_height - self.start_block) // self.epoch_len

    def closes_epoch(self, mc_height: int) -> bool:
        return mc_height >= self.start_block and (mc_height - self.start_block + 1) % self.epoch_len == 0

    @cached_property
    def genesis(self) -> ScBlock:
        return ScBlock(tagged_hash("sc-genesis", encode(self)), 0, 0, 0, NULL_ADDRESS)


WCERT_SCHEMA = make_schema(("sb_last", "digest"), ("mst_root", "digest"), ("mst_delta", "bitvector"))
WITHDRAWAL_SCHEMA = make_schema(("utxo", "bytes"))


def nullifier(utxo: Utxo) -> bytes:
    return tagged_hash("nullifier", utxo.to_bytes())


def output_nonce(core: bytes, ordinal: int) -> bytes:
    return tagged_hash("utxo-nonce", core, ordinal.to_bytes(4, "big"))


def ft_metadata(receiver: bytes, payback: bytes) -> bytes:
    return receiver + payback


def parse_ft_metadata(meta: bytes) -> tuple[bytes | None, bytes]:
    """(receiver, payback); receiver is None when the metadata is malformed."""
    payback = meta[32:64] if len(meta) >= 64 else NULL_ADDRESS
    if len(meta) != 64 or meta[:32] == NULL_ADDRESS:
        return None, payback
    return meta[:32], payback


# ---------------------------------------------------------------------------
# Transactions


@serializable
@dataclass(frozen=True)
class PaymentTx:
    inputs: tuple[Utxo, ...]
    signatures: tuple[bytes, ...]
    outputs: tuple[Utxo, ...]

    def __post_init__(self):
        _as_tuple(self, "inputs", Utxo)
        _as_tuple(self, "signatures", bytes)
        _as_tuple(self, "outputs", Utxo)

    @cached_property
    def core(self) -> bytes:
        """Signing message and nonce seed: inputs plus (addr, amount) of each output."""
        shape = tuple((o.addr, o.amount) for o in self.outputs)
        return tagged_hash("sc-payment", encode((self.inputs, shape)))

    @classmethod
    def create(cls, inputs, keys, outputs: list[tuple[bytes, int]]) -> PaymentTx:
        """Build and sign a payment; ``keys`` holds one signing key per input."""
        inputs = tuple(inputs)
        shape = tuple((a, n) for a, n in outputs)
        core = tagged_hash("sc-payment", encode((inputs, shape)))
        outs = tuple(Utxo(a, n, output_nonce(core, j)) for j, (a, n) in enumerate(shape))
        return cls(inputs, tuple(k.sign(core) for k in keys), outs)


@serializable
@dataclass(frozen=True)
class BTTx:
    inputs: tuple[Utxo, ...]
    signatures: tuple[bytes, ...]
    backward_transfers: tuple[BackwardTransfer, ...]

    def __post_init__(self):
        _as_tuple(self, "inputs", Utxo)
        _as_tuple(self, "signatures", bytes)
        _as_tuple(self, "backward_transfers", BackwardTransfer)

    @cached_property
    def core(self) -> bytes:
        return tagged_hash("sc-bt", encode((self.inputs, self.backward_transfers)))

    @classmethod
    def create(cls, inputs, keys, transfers: list[tuple[bytes, int]]) -> BTTx:
        inputs = tuple(inputs)
        bts = tuple(BackwardTransfer(a, n) for a, n in transfers)
        core = tagged_hash("sc-bt", encode((inputs, bts)))
        return cls(inputs, tuple(k.sign(core) for k in keys), bts)


@serializable
@dataclass(frozen=True)
class FTTx:
    mcid: bytes
    fts: tuple[ForwardTransfer, ...]
    outputs: tuple[Utxo, ...]
    rejected: tuple[BackwardTransfer, ...]

    def __post_init__(self):
        _as_tuple(self, "fts", ForwardTransfer)
        _as_tuple(self, "outputs", Utxo)
        _as_tuple(self, "rejected", BackwardTransfer)

    @cached_property
    def core(self) -> bytes:
        return ft_core(self.mcid, self.fts)


def ft_core(mcid: bytes, fts: tuple[ForwardTransfer, ...]) -> bytes:
    return tagged_hash("sc-ft", mcid, encode(tuple(fts)))


@serializable
@dataclass(frozen=True)
class BTRTx:
    mcid: bytes
    btrs: tuple[WithdrawalSummary, ...]
    inputs: tuple[Utxo, ...]
    backward_transfers: tuple[BackwardTransfer, ...]

    def __post_init__(self):
        _as_tuple(self, "btrs", WithdrawalSummary)
        _as_tuple(self, "inputs", Utxo)
        _as_tuple(self, "backward_transfers", BackwardTransfer)


ScTransaction = PaymentTx | FTTx | BTTx | BTRTx
NATIVE_TXS = (PaymentTx, BTTx)


# ---------------------------------------------------------------------------
# Mainchain references and blocks

@serializable
@dataclass(frozen=True)
class McBlockReference:
    header: McBlockHeader
    mproof: MerkleProof | None = None
    proof_of_no_data: tuple[NeighborProof, ...] | None = None
    forward_transfers: FTTx | None = None
    bt_requests: BTRTx | None = None
    wcert: CertSummary | None = None

    @property
    def mcid(self) -> bytes:
        return self.header.hash

    def sync_txs(self) -> list:
        return [tx for tx in (self.forward_transfers, self.bt_requests) if tx is not None]


@serializable
@dataclass(frozen=True)
class ScBlock:
    parent: bytes
    height: int
    epoch: int
    slot: int
    forger: bytes
    mc_refs: tuple[McBlockReference, ...] = ()
    txs: tuple = ()
    signature: bytes = b""

    def __post_init__(self):
        _as_tuple(self, "mc_refs", McBlockReference)
        _as_tuple(self, "txs")

    @cached_property
    def signing_digest(self) -> bytes:
        body = (self.parent, self.height, self.epoch, self.slot, self.forger, self.mc_refs, self.txs)
        return tagged_hash("sc-block-sig", encode(body))

    @cached_property
    def hash(self) -> bytes:
        return tagged_hash("sc-block", encode(self))

    def sync_and_native_txs(self) -> list:
        out = []
        for ref in self.mc_refs:
            out.extend(ref.sync_txs())
        out.extend(self.txs)
        return out


# ---------------------------------------------------------------------------
# State

BT_ACC_INIT = tagged_hash("bt-acc")


def bt_acc_extend(acc: bytes, bts) -> bytes:
    for bt in bts:
        acc = tagged_hash("bt-acc", acc, encode(bt))
    return acc


def state_digest(mst_root: bytes, bt_acc: bytes, touched: tuple[int, ...]) -> bytes:
    return tagged_hash("sc-state", mst_root, bt_acc, tagged_hash("touched", encode(touched)))


@serializable
@dataclass(frozen=True)
class StateView:
    """What a state digest commits to, minus the full tree and transfer list."""

    mst_root: bytes
    bt_acc: bytes
    touched: tuple[int, ...]

    def __post_init__(self):
        _as_tuple(self, "touched", int)
        if list(self.touched) != sorted(set(self.touched)):
            raise ValueError("touched slots must be sorted and unique")

    @cached_property
    def digest(self) -> bytes:
        return state_digest(self.mst_root, self.bt_acc, self.touched)

    def reset(self) -> StateView:
        return StateView(self.mst_root, BT_ACC_INIT, ())


@serializable
@dataclass(frozen=True)
class ScState:
    mst: MerkleStateTree
    backward_transfers: tuple[BackwardTransfer, ...] = ()
    touched: tuple[int, ...] = ()

    def __post_init__(self):
        _as_tuple(self, "backward_transfers", BackwardTransfer)
        _as_tuple(self, "touched", int)

    @classmethod
    def genesis(cls, depth: int) -> ScState:
        return cls(MerkleStateTree(depth))

    @cached_property
    def bt_acc(self) -> bytes:
        return bt_acc_extend(BT_ACC_INIT, self.backward_transfers)

    @cached_property
    def view(self) -> StateView:
        return StateView(self.mst.root, self.bt_acc, self.touched)

    @property
    def digest(self) -> bytes:
        return self.view.digest

    @property
    def delta(self) -> MstDelta:
        return MstDelta.from_slots(self.mst.depth, self.touched)

    def reset(self) -> ScState:
        return ScState(self.mst)

    def holdings(self) -> dict[bytes, int]:
        out: dict[bytes, int] = {}
        for u in self.mst.slots.values():
            out[u.addr] = out.get(u.addr, 0) + u.amount
        return out

    def value(self) -> int:
        return self.mst.total() + sum(bt.amount for bt in self.backward_transfers)


def withdrawal_message(kind: str, ledger_id: bytes, utxo: Utxo, receiver: bytes) -> bytes:
    """What a UTXO owner signs to authorise a mainchain-managed withdrawal."""
    return tagged_hash("withdrawal-auth", kind.encode(), ledger_id, utxo.to_bytes(), receiver)


def is_txlike(obj: Any) -> bool:
    return isinstance(obj, (PaymentTx, FTTx, BTTx, BTRTx))
