"""Mainchain block references: construction, verification and application."""

from __future__ import annotations

from typing import Any

from ..crypto import MerkleProof, mht_verify
from ..mainchain import (
    McBlock,
    McBlockHeader,
    ScLeaf,
    prove_sc_absence,
    prove_sc_membership,
    sc_activity,
    txs_hash,
    verify_sc_absence,
    wcert_hash,
)
from .transactions import apply_tx, build_btrtx, build_fttx
from .types import (
    BTRTx,
    FTTx,
    McBlockReference,
    ScState,
    ft_core,
    output_nonce,
    parse_ft_metadata,
)


def make_mc_reference(block: McBlock, ledger_id: bytes, state: ScState) -> McBlockReference:
    """Reference to ``block`` for one sidechain; sync txs are built against ``state``."""
    activity = sc_activity(block.body).get(ledger_id)
    if activity is None:
        return McBlockReference(block.header, proof_of_no_data=prove_sc_absence(block.body, ledger_id))
    fts, btrs, cert = activity
    _, mproof = prove_sc_membership(block.body, ledger_id)
    mcid = block.hash
    fttx = None
    if fts:
        fttx = build_fttx(mcid, fts, state)
        state = apply_tx(state, fttx)
    btrtx = build_btrtx(mcid, btrs, state) if btrs else None
    summary = cert.summary() if cert is not None else None
    return McBlockReference(block.header, mproof, None, fttx, btrtx, summary)


def _ft_alignment_ok(tx: FTTx) -> bool:
    """Each FT maps, in order, to either the next output or the next rejected transfer."""
    core = ft_core(tx.mcid, tx.fts)
    outs = list(tx.outputs)
    rejected = list(tx.rejected)
    for j, ft in enumerate(tx.fts):
        receiver, payback = parse_ft_metadata(ft.receiver_metadata)
        if outs and receiver is not None and outs[0].addr == receiver \
                and outs[0].amount == ft.amount and outs[0].nonce == output_nonce(core, j):
            outs.pop(0)
        elif rejected and rejected[0].receiver == payback and rejected[0].amount == ft.amount:
            rejected.pop(0)
        else:
            return False
    return not outs and not rejected


def _btr_alignment_ok(tx: BTRTx) -> bool:
    """Consumed inputs and their transfers pair up with a subsequence of the requests."""
    if len(tx.inputs) != len(tx.backward_transfers):
        return False
    k = 0
    for btr in tx.btrs:
        if k < len(tx.inputs):
            utxo, bt = tx.inputs[k], tx.backward_transfers[k]
            if btr.proofdata == (utxo.to_bytes(),) and bt.receiver == btr.receiver \
                    and bt.amount == btr.amount == utxo.amount:
                k += 1
    return k == len(tx.inputs)


def verify_mc_reference(ref: Any, ledger_id: bytes, block_hash: bytes | None = None) -> bool:
    """Structural check of a reference against its header.

    When ``block_hash`` is given, the header must hash to it; without it a
    reference that proves absence says nothing about which block it is for.
    """
    try:
        return _verify(ref, ledger_id, block_hash)
    except (AttributeError, TypeError, ValueError):
        return False


def _verify(ref: Any, ledger_id: bytes, block_hash: bytes | None) -> bool:
    if not isinstance(ref, McBlockReference) or not isinstance(ref.header, McBlockHeader):
        return False
    mcid = ref.header.hash
    if block_hash is not None and mcid != block_hash:
        return False
    fttx, btrtx = ref.forward_transfers, ref.bt_requests
    if (ref.mproof is None) == (ref.proof_of_no_data is None):
        return False
    if ref.proof_of_no_data is not None:
        if fttx is not None or btrtx is not None or ref.wcert is not None:
            return False
        return verify_sc_absence(ref.header.sc_txs_commitment, ledger_id, ref.proof_of_no_data)
    if fttx is not None:
        if not isinstance(fttx, FTTx) or fttx.mcid != mcid or not fttx.fts:
            return False
        if any(ft.ledger_id != ledger_id for ft in fttx.fts) or not _ft_alignment_ok(fttx):
            return False
    if btrtx is not None:
        if not isinstance(btrtx, BTRTx) or btrtx.mcid != mcid or not btrtx.btrs:
            return False
        if any(b.ledger_id != ledger_id or b.kind != "BtrRequest" for b in btrtx.btrs):
            return False
        if not _btr_alignment_ok(btrtx):
            return False
    if ref.wcert is not None and ref.wcert.ledger_id != ledger_id:
        return False
    fts = fttx.fts if fttx is not None else ()
    btrs = btrtx.btrs if btrtx is not None else ()
    if not (fts or btrs or ref.wcert is not None):
        return False
    leaf = ScLeaf(ledger_id, txs_hash(fts, btrs), wcert_hash(ref.wcert))
    if not isinstance(ref.mproof, MerkleProof):
        return False
    return mht_verify(ref.header.sc_txs_commitment, leaf.digest, ref.mproof)


def apply_reference(state: ScState, ref: McBlockReference) -> ScState:
    for tx in ref.sync_txs():
        state = apply_tx(state, tx)
    return state
