"""State update rules for the four Latus transaction types.

The rules are written against a small store interface (``get``, ``insert``,
``remove``, ``depth``), so the same code runs on a full MST, on a
path-witnessed partial tree inside the transition predicates, and on a
recording wrapper that collects the slots a witness has to reveal.
"""

from __future__ import annotations

from typing import Any

from ..crypto import Utxo, mst_position, verify_signature
from ..errors import CodecError, MerkleError, Rejected
from ..mainchain import BackwardTransfer, ForwardTransfer, WithdrawalSummary
from .types import (
    BTRTx,
    BTTx,
    FTTx,
    PaymentTx,
    ScState,
    ft_core,
    nullifier,
    output_nonce,
    parse_ft_metadata,
)


class TxReason:
    MISSING_INPUT = "missing-input"
    BAD_SIGNATURE = "bad-signature"
    VALUE_IMBALANCE = "value-imbalance"
    SLOT_COLLISION = "slot-collision"
    NONCE_MISMATCH = "nonce-mismatch"
    SYNC_MISMATCH = "sync-mismatch"
    MALFORMED = "malformed"


def _spend(store: Any, inputs: tuple[Utxo, ...], signatures: tuple[bytes, ...],
           message: bytes, touched: set[int]) -> Any:
    if not inputs:
        raise Rejected(TxReason.MALFORMED, "transaction has no inputs")
    if len(signatures) != len(inputs):
        raise Rejected(TxReason.BAD_SIGNATURE, "one signature per input is required")
    for utxo, sig in zip(inputs, signatures):
        if not verify_signature(utxo.addr, message, sig):
            raise Rejected(TxReason.BAD_SIGNATURE, f"input owned by {utxo.addr.hex()[:16]}")
    for utxo in inputs:
        slot = mst_position(utxo, store.depth)
        if store.get(slot) != utxo:
            raise Rejected(TxReason.MISSING_INPUT, f"slot {slot}")
        store = store.remove(utxo)
        touched.add(slot)
    return store


def _create(store: Any, utxo: Utxo, touched: set[int]) -> Any:
    slot = mst_position(utxo, store.depth)
    if store.get(slot) is not None:
        raise Rejected(TxReason.SLOT_COLLISION, f"slot {slot}")
    touched.add(slot)
    return store.insert(utxo)


def _payment(store: Any, tx: PaymentTx) -> tuple[Any, tuple, set[int]]:
    touched: set[int] = set()
    if not tx.outputs:
        raise Rejected(TxReason.MALFORMED, "payment has no outputs")
    if sum(u.amount for u in tx.inputs) != sum(u.amount for u in tx.outputs):
        raise Rejected(TxReason.VALUE_IMBALANCE, "inputs and outputs differ")
    for j, out in enumerate(tx.outputs):
        if out.nonce != output_nonce(tx.core, j):
            raise Rejected(TxReason.NONCE_MISMATCH, f"output {j}")
    store = _spend(store, tx.inputs, tx.signatures, tx.core, touched)
    for out in tx.outputs:
        store = _create(store, out, touched)
    return store, (), touched


def _bt(store: Any, tx: BTTx) -> tuple[Any, tuple, set[int]]:
    touched: set[int] = set()
    if not tx.backward_transfers:
        raise Rejected(TxReason.MALFORMED, "no backward transfers")
    if sum(u.amount for u in tx.inputs) != sum(bt.amount for bt in tx.backward_transfers):
        raise Rejected(TxReason.VALUE_IMBALANCE, "inputs and transfers differ")
    store = _spend(store, tx.inputs, tx.signatures, tx.core, touched)
    return store, tx.backward_transfers, touched


def _sync_ft(store: Any, mcid: bytes, fts: tuple[ForwardTransfer, ...]):
    """Deterministic FT outcome: (store, outputs, rejected, touched)."""
    core = ft_core(mcid, fts)
    outputs: list[Utxo] = []
    rejected: list[BackwardTransfer] = []
    touched: set[int] = set()
    for j, ft in enumerate(fts):
        receiver, payback = parse_ft_metadata(ft.receiver_metadata)
        if receiver is None:
            rejected.append(BackwardTransfer(payback, ft.amount))
            continue
        utxo = Utxo(receiver, ft.amount, output_nonce(core, j))
        slot = mst_position(utxo, store.depth)
        if store.get(slot) is not None:
            rejected.append(BackwardTransfer(payback, ft.amount))
            continue
        store = store.insert(utxo)
        touched.add(slot)
        outputs.append(utxo)
    return store, tuple(outputs), tuple(rejected), touched


def _btr_target(btr: WithdrawalSummary) -> Utxo | None:
    if len(btr.proofdata) != 1 or not isinstance(btr.proofdata[0], bytes):
        return None
    try:
        return Utxo.from_bytes(btr.proofdata[0])
    except (CodecError, ValueError):
        return None


def _sync_btr(store: Any, btrs: tuple[WithdrawalSummary, ...]):
    """A request consumes its UTXO only if it is still unspent and matches."""
    inputs: list[Utxo] = []
    bts: list[BackwardTransfer] = []
    touched: set[int] = set()
    for btr in btrs:
        utxo = _btr_target(btr)
        if utxo is None or utxo.amount != btr.amount or nullifier(utxo) != btr.nullifier:
            continue
        slot = mst_position(utxo, store.depth)
        if store.get(slot) != utxo:
            continue
        store = store.remove(utxo)
        touched.add(slot)
        inputs.append(utxo)
        bts.append(BackwardTransfer(btr.receiver, btr.amount))
    return store, tuple(inputs), tuple(bts), touched


def _ft(store: Any, tx: FTTx) -> tuple[Any, tuple, set[int]]:
    if not tx.fts:
        raise Rejected(TxReason.MALFORMED, "no forward transfers")
    store, outputs, rejected, touched = _sync_ft(store, tx.mcid, tx.fts)
    if outputs != tx.outputs or rejected != tx.rejected:
        raise Rejected(TxReason.SYNC_MISMATCH, "FTTx outputs do not follow from its transfers")
    return store, rejected, touched


def _btr(store: Any, tx: BTRTx) -> tuple[Any, tuple, set[int]]:
    if not tx.btrs:
        raise Rejected(TxReason.MALFORMED, "no backward transfer requests")
    store, inputs, bts, touched = _sync_btr(store, tx.btrs)
    if inputs != tx.inputs or bts != tx.backward_transfers:
        raise Rejected(TxReason.SYNC_MISMATCH, "BTRTx does not follow from its requests")
    return store, bts, touched


_RULES = {PaymentTx: _payment, BTTx: _bt, FTTx: _ft, BTRTx: _btr}


def update_store(store: Any, tx: Any) -> tuple[Any, tuple[BackwardTransfer, ...], set[int]]:
    """Apply ``tx`` to a store; returns (store, appended BTs, slots changed).

    A store that cannot answer a lookup (an unwitnessed slot) surfaces as
    a MerkleError, which callers treat as an invalid transition.
    """
    rule = _RULES.get(type(tx))
    if rule is None:
        raise Rejected(TxReason.MALFORMED, f"unknown transaction type {type(tx).__name__}")
    return rule(store, tx)


def apply_tx(state: ScState, tx: Any) -> ScState:
    mst, bts, touched = update_store(state.mst, tx)
    return ScState(
        mst,
        state.backward_transfers + tuple(bts),
        tuple(sorted(set(state.touched) | touched)),
    )


def apply_payment(state: ScState, tx: PaymentTx) -> ScState:
    _require_type(tx, PaymentTx)
    return apply_tx(state, tx)


def apply_fttx(state: ScState, tx: FTTx) -> ScState:
    _require_type(tx, FTTx)
    return apply_tx(state, tx)


def apply_bttx(state: ScState, tx: BTTx) -> ScState:
    _require_type(tx, BTTx)
    return apply_tx(state, tx)


def apply_btrtx(state: ScState, tx: BTRTx) -> ScState:
    _require_type(tx, BTRTx)
    return apply_tx(state, tx)


def _require_type(tx: Any, cls: type) -> None:
    if not isinstance(tx, cls):
        raise Rejected(TxReason.MALFORMED, f"expected {cls.__name__}")


def build_fttx(mcid: bytes, fts, state: ScState) -> FTTx:
    fts = tuple(fts)
    _, outputs, rejected, _ = _sync_ft(state.mst, mcid, fts)
    return FTTx(mcid, fts, outputs, rejected)


def build_btrtx(mcid: bytes, btrs, state: ScState) -> BTRTx:
    btrs = tuple(b.summary() if hasattr(b, "summary") else b for b in btrs)
    _, inputs, bts, _ = _sync_btr(state.mst, btrs)
    return BTRTx(mcid, btrs, inputs, bts)


def try_apply(state: ScState, tx: Any) -> tuple[ScState, Rejected | None]:
    """Apply ``tx`` if valid; otherwise return the state unchanged with the reason."""
    try:
        return apply_tx(state, tx), None
    except Rejected as exc:
        return state, exc
    except MerkleError as exc:
        return state, Rejected(TxReason.MALFORMED, str(exc))
