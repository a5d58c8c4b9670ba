"""Recursive Base/Merge proofs of sidechain state transitions.

Two levels of transitions are proved:

* transaction level: endpoints are sidechain state digests, one Base proof
  per transaction kind, merged pairwise;
* block level: endpoints are chain points, which add to the state digest the
  sidechain tip, the last referenced mainchain block, the withdrawal epoch and
  the previous certificate seen in this epoch. A block proof wraps the merged
  transaction proofs of its body.

An epoch proof is the balanced merge of its block proofs; the WCert
predicate checks it against the certificate's public input.
"""

from __future__ import annotations

import weakref
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any

from .codec import encode, serializable
from .crypto import (
    ZERO_DIGEST,
    MerkleProof,
    MstDelta,
    PartialStateTree,
    RecordingTree,
    Utxo,
    is_digest,
    tagged_hash,
)
from .errors import MerkleError, Rejected, UnsatisfiedError
from .latus.consensus import (
    RefCursor,
    ScChain,
    check_native_txs,
    check_references,
    check_signature,
)
from .latus.transactions import apply_tx, update_store
from .latus.types import (
    BT_ACC_INIT,
    BTRTx,
    BTTx,
    FTTx,
    LatusParams,
    PaymentTx,
    ScBlock,
    ScState,
    StateView,
    bt_acc_extend,
)
from .mainchain import BackwardTransfer, bt_list_root
from .proofsys import (
    KeyPair,
    Statement,
    StatementProof,
    VerifyingKey,
    mh_proofdata,
    prove,
    register_predicate,
    require,
    setup,
    verify,
)

TX_STATEMENTS = {
    PaymentTx: Statement.BASE_PAYMENT,
    FTTx: Statement.BASE_FT,
    BTTx: Statement.BASE_BT,
    BTRTx: Statement.BASE_BTR,
}
TX_KINDS = frozenset(TX_STATEMENTS.values())
BLOCK_KINDS = frozenset({Statement.BASE_BLOCK})
LATUS_STATEMENTS = tuple(TX_KINDS | BLOCK_KINDS | {Statement.MERGE, Statement.WCERT,
                                                    Statement.BTR, Statement.CSW})


@serializable
@dataclass(frozen=True)
class TransitionProof:
    kind: Statement
    s_from: bytes
    s_to: bytes
    proof: StatementProof


@serializable
@dataclass(frozen=True)
class SlotPath:
    slot: int
    utxo: Utxo | None
    proof: MerkleProof


@serializable
@dataclass(frozen=True)
class BaseWitness:
    tx: Any
    view: StateView
    paths: tuple[SlotPath, ...]


@serializable
@dataclass(frozen=True)
class MergeWitness:
    left: TransitionProof
    right: TransitionProof


@serializable
@dataclass(frozen=True)
class ChainPoint:
    """Block-level transition endpoint."""

    view_digest: bytes
    sc_hash: bytes
    sc_height: int
    mc_hash: bytes
    mc_height: int
    wepoch: int
    closed: bool
    anchor_block: bytes = ZERO_DIGEST
    anchor_root: bytes = ZERO_DIGEST

    @cached_property
    def digest(self) -> bytes:
        return tagged_hash("chain-point", encode(self))


@serializable
@dataclass(frozen=True)
class BlockWitness:
    block: ScBlock
    p_from: ChainPoint
    view: StateView
    p_to: ChainPoint
    body: TransitionProof | None


@serializable
@dataclass(frozen=True)
class WcertWitness:
    epoch_proof: TransitionProof
    p_from: ChainPoint
    p_to: ChainPoint
    view_before: StateView
    view_after: StateView
    bt_list: tuple[BackwardTransfer, ...]
    proofdata: tuple


class LatusKeys:
    """Key pairs of every Latus circuit, all bound to the same parameters and seed."""

    def __init__(self, params: LatusParams, seed: bytes = b"latus"):
        self.params = params
        self.seed = seed
        self.pairs: dict[Statement, KeyPair] = {s: setup(s, seed, params) for s in LATUS_STATEMENTS}

    def pk(self, statement: Statement):
        return self.pairs[statement].pk

    def vk(self, statement: Statement) -> VerifyingKey:
        return self.pairs[statement].vk


def sibling_vk(vk: VerifyingKey, statement: Statement) -> VerifyingKey:
    return VerifyingKey(statement, vk.seed, vk.params)


def verify_transition(vk: VerifyingKey, s_from: bytes, s_to: bytes, proof: Any) -> bool:
    if not isinstance(proof, TransitionProof) or not isinstance(vk, VerifyingKey):
        return False
    if proof.kind is not vk.statement or proof.s_from != s_from or proof.s_to != s_to:
        return False
    return verify(vk, (s_from, s_to), proof.proof)


def _child_ok(vk: VerifyingKey, child: Any, kinds: frozenset) -> bool:
    if not isinstance(child, TransitionProof) or child.kind not in kinds | {Statement.MERGE}:
        return False
    return verify_transition(sibling_vk(vk, child.kind), child.s_from, child.s_to, child)


def _level(proof: TransitionProof) -> frozenset:
    """The kinds a proof's leaves may have; Merge proofs take their left leaf's level."""
    p = proof
    while p.kind is Statement.MERGE:
        p = p.proof.witness.left
    return TX_KINDS if p.kind in TX_KINDS else BLOCK_KINDS


def transition_leaves(proof: TransitionProof) -> list:
    """Leaf witnesses in order: transactions for tx-level proofs, blocks for block-level ones."""
    out = []
    stack = [proof]
    while stack:
        p = stack.pop()
        w = p.proof.witness
        if p.kind is Statement.MERGE:
            stack.append(w.right)
            stack.append(w.left)
        elif p.kind is Statement.BASE_BLOCK:
            out.append(w.block)
        else:
            out.append(w.tx)
    return out


# ---------------------------------------------------------------------------
# predicates


def _two_digests(pi: Any) -> tuple[bytes, bytes]:
    require(isinstance(pi, tuple) and len(pi) == 2 and all(is_digest(x) for x in pi),
            "public input must be (s_from, s_to)")
    return pi


def _base_predicate(statement: Statement):
    def predicate(vk: VerifyingKey, pi: Any, w: Any) -> bool:
        s_from, s_to = _two_digests(pi)
        params: LatusParams = vk.params
        require(isinstance(w, BaseWitness) and isinstance(w.view, StateView), "bad witness")
        require(TX_STATEMENTS.get(type(w.tx)) is statement, "transaction kind does not match circuit")
        require(w.view.digest == s_from, "witness view does not match s_from")
        require(isinstance(w.paths, tuple) and all(isinstance(p, SlotPath) for p in w.paths), "bad paths")
        slots = [p.slot for p in w.paths]
        require(len(set(slots)) == len(slots), "duplicate slot path")
        store = PartialStateTree.from_paths(params.mst_depth, w.view.mst_root,
                                            [(p.slot, p.utxo, p.proof) for p in w.paths])
        store, bts, touched = update_store(store, w.tx)
        after = StateView(store.root, bt_acc_extend(w.view.bt_acc, bts),
                          tuple(sorted(set(w.view.touched) | touched)))
        require(after.digest == s_to, "resulting state does not match s_to")
        return True
    return predicate


def _merge_predicate(vk: VerifyingKey, pi: Any, w: Any) -> bool:
    s_from, s_to = _two_digests(pi)
    require(isinstance(w, MergeWitness), "bad witness")
    left, right = w.left, w.right
    require(isinstance(left, TransitionProof) and isinstance(right, TransitionProof), "bad children")
    require(left.s_from == s_from and right.s_to == s_to, "outer endpoints differ")
    require(left.s_to == right.s_from, "children are not adjacent")
    kinds = _level(left)
    require(_level(right) == kinds, "children are on different levels")
    require(_child_ok(vk, left, kinds) and _child_ok(vk, right, kinds), "child proof invalid")
    return True


def _anchor_fields(proofdata: Any) -> tuple[bytes, bytes] | None:
    if isinstance(proofdata, tuple) and len(proofdata) == 3 \
            and is_digest(proofdata[0]) and is_digest(proofdata[1]):
        return proofdata[0], proofdata[1]
    return None


def advance_point(params: LatusParams, p: ChainPoint, block: ScBlock, end_view: bytes) -> ChainPoint:
    """Chain point after ``block``; raises Rejected when its references do not continue ``p``."""
    cursor = check_references(params, block.mc_refs, RefCursor(p.mc_hash, p.mc_height, p.wepoch, p.closed))
    anchor = (ZERO_DIGEST, ZERO_DIGEST) if p.closed else (p.anchor_block, p.anchor_root)
    for ref in block.mc_refs:
        cert = ref.wcert
        if cert is not None and cert.epoch_id == cursor.wepoch - 1:
            fields = _anchor_fields(cert.proofdata)
            if fields is not None:
                anchor = fields
    return ChainPoint(end_view, block.hash, block.height, cursor.last_hash, cursor.last_height,
                      cursor.wepoch, cursor.closed, *anchor)


def _block_predicate(vk: VerifyingKey, pi: Any, w: Any) -> bool:
    s_from, s_to = _two_digests(pi)
    params: LatusParams = vk.params
    require(isinstance(w, BlockWitness) and isinstance(w.block, ScBlock), "bad witness")
    p_from, p_to, block = w.p_from, w.p_to, w.block
    require(isinstance(p_from, ChainPoint) and isinstance(p_to, ChainPoint), "bad points")
    require(p_from.digest == s_from and p_to.digest == s_to, "points do not match endpoints")
    require(block.parent == p_from.sc_hash and block.height == p_from.sc_height + 1,
            "block does not extend the starting point")
    require(block.epoch == block.slot // params.slots_per_epoch, "epoch and slot disagree")
    check_signature(block)
    check_native_txs(block)
    require(isinstance(w.view, StateView) and w.view.digest == p_from.view_digest, "view mismatch")
    start = w.view.reset() if p_from.closed else w.view
    txs = block.sync_and_native_txs()
    if not txs:
        require(w.body is None, "unexpected body proof")
        end = start.digest
    else:
        body = w.body
        require(isinstance(body, TransitionProof), "missing body proof")
        require(body.s_from == start.digest, "body does not start at the block's start state")
        require(_child_ok(vk, body, TX_KINDS), "body proof invalid")
        leaves = transition_leaves(body)
        require(len(leaves) == len(txs) and all(a == b for a, b in zip(leaves, txs)),
                "body does not process exactly the block's transactions")
        end = body.s_to
    require(advance_point(params, p_from, block, end) == p_to, "end point mismatch")
    return True


def genesis_point(params: LatusParams, boundary: bytes) -> ChainPoint:
    """Starting point of epoch 0; ``boundary`` is the MC block right before the start height."""
    view = ScState.genesis(params.mst_depth).view
    return ChainPoint(view.digest, params.genesis.hash, 0, boundary, params.start_block - 1, 0, False)


def check_epoch_structure(params: LatusParams, p_from: ChainPoint, p_to: ChainPoint) -> None:
    """The points bracket exactly one full withdrawal epoch."""
    require(p_to.closed, "epoch is not closed")
    require(p_to.mc_height == params.epoch_last_height(p_to.wepoch), "epoch end height")
    if p_from.sc_height == 0:
        require(p_to.wepoch == 0, "genesis can only start epoch 0")
        require(p_from == genesis_point(params, p_from.mc_hash), "bad genesis point")
    else:
        require(p_from.closed and p_to.wepoch == p_from.wepoch + 1, "epochs are not consecutive")
        require(p_from.mc_height == params.epoch_last_height(p_from.wepoch), "epoch start height")
        require(p_to.anchor_block == p_from.sc_hash,
                "epoch does not continue the block certified for the previous epoch")


def wcert_proofdata(params: LatusParams, p_to: ChainPoint, view_after: StateView) -> tuple:
    delta = MstDelta.from_slots(params.mst_depth, view_after.touched)
    return (p_to.sc_hash, view_after.mst_root, delta)


def _wcert_predicate(vk: VerifyingKey, pi: Any, w: Any) -> bool:
    params: LatusParams = vk.params
    require(isinstance(pi, tuple) and len(pi) == 5, "public input shape")
    quality, bt_root, prev_last, last, mh = pi
    require(isinstance(w, WcertWitness), "bad witness")
    p_from, p_to = w.p_from, w.p_to
    require(isinstance(p_from, ChainPoint) and isinstance(p_to, ChainPoint), "bad points")
    ep = w.epoch_proof
    require(isinstance(ep, TransitionProof) and ep.s_from == p_from.digest and ep.s_to == p_to.digest,
            "epoch proof endpoints")
    require(_child_ok(vk, ep, BLOCK_KINDS), "epoch proof invalid")
    check_epoch_structure(params, p_from, p_to)
    require(p_from.mc_hash == prev_last, "epoch does not start after the previous epoch's last MC block")
    require(p_to.mc_hash == last, "epoch does not end at its last MC block")
    if p_from.sc_height > 0:
        require(isinstance(w.view_before, StateView) and w.view_before.digest == p_from.view_digest,
                "starting view mismatch")
        require(w.view_before.mst_root == p_to.anchor_root,
                "starting MST differs from the previously certified one")
    require(quality == p_to.sc_height, "quality must be the height of the last block")
    va = w.view_after
    require(isinstance(va, StateView) and va.digest == p_to.view_digest, "final view mismatch")
    require(isinstance(w.bt_list, tuple) and all(isinstance(b, BackwardTransfer) for b in w.bt_list),
            "bad transfer list")
    require(bt_acc_extend(BT_ACC_INIT, w.bt_list) == va.bt_acc, "transfer list differs from the state")
    require(bt_list_root(w.bt_list) == bt_root, "transfer list root mismatch")
    require(w.proofdata == wcert_proofdata(params, p_to, va), "proofdata mismatch")
    require(mh_proofdata(w.proofdata) == mh, "proofdata root mismatch")
    return True


for _statement in TX_STATEMENTS.values():
    register_predicate(_statement, _base_predicate(_statement))
register_predicate(Statement.MERGE, _merge_predicate)
register_predicate(Statement.BASE_BLOCK, _block_predicate)
register_predicate(Statement.WCERT, _wcert_predicate)


# ---------------------------------------------------------------------------
# provers


def prove_base(keys: LatusKeys, tx: Any, state_before: ScState,
               state_after: ScState | None = None) -> TransitionProof:
    statement = TX_STATEMENTS.get(type(tx))
    if statement is None:
        raise UnsatisfiedError(f"no Base statement for {type(tx).__name__}")
    mst = state_before.mst
    recorder = RecordingTree(mst)
    try:
        update_store(recorder, tx)
        after = apply_tx(state_before, tx)
    except (Rejected, MerkleError) as exc:
        raise UnsatisfiedError(f"invalid transition: {exc}") from None
    if state_after is not None and state_after.digest != after.digest:
        raise UnsatisfiedError("state_after does not follow from the transaction")
    paths = tuple(SlotPath(s, mst.get(s), mst.prove(s)) for s in sorted(recorder.log))
    pi = (state_before.digest, after.digest)
    proof = prove(keys.pk(statement), pi, BaseWitness(tx, state_before.view, paths))
    return TransitionProof(statement, pi[0], pi[1], proof)


def prove_merge(keys: LatusKeys, left: TransitionProof, right: TransitionProof) -> TransitionProof:
    if left.s_to != right.s_from:
        raise UnsatisfiedError("cannot merge non-adjacent transitions")
    pi = (left.s_from, right.s_to)
    proof = prove(keys.pk(Statement.MERGE), pi, MergeWitness(left, right))
    return TransitionProof(Statement.MERGE, pi[0], pi[1], proof)


def fold(keys: LatusKeys, proofs: Sequence[TransitionProof]) -> TransitionProof:
    """Balanced binary merge of adjacent transitions."""
    if not proofs:
        raise UnsatisfiedError("nothing to merge")
    if len(proofs) == 1:
        return proofs[0]
    mid = (len(proofs) + 1) // 2
    return prove_merge(keys, fold(keys, proofs[:mid]), fold(keys, proofs[mid:]))


def prove_block(keys: LatusKeys, block: ScBlock, p_from: ChainPoint,
                state_before: ScState) -> tuple[TransitionProof, ChainPoint, ScState]:
    """Proof for one block; ``state_before`` is the state after the parent (not yet reset)."""
    if state_before.digest != p_from.view_digest:
        raise UnsatisfiedError("state does not match the starting point")
    state = state_before.reset() if p_from.closed else state_before
    leaves = []
    for tx in block.sync_and_native_txs():
        leaves.append(prove_base(keys, tx, state))
        state = apply_tx(state, tx)
    body = fold(keys, leaves) if leaves else None
    try:
        p_to = advance_point(keys.params, p_from, block, state.digest)
    except Rejected as exc:
        raise UnsatisfiedError(f"invalid block: {exc}") from None
    pi = (p_from.digest, p_to.digest)
    proof = prove(keys.pk(Statement.BASE_BLOCK), pi,
                  BlockWitness(block, p_from, state_before.view, p_to, body))
    return TransitionProof(Statement.BASE_BLOCK, pi[0], pi[1], proof), p_to, state


@dataclass(frozen=True)
class EpochTransition:
    proof: TransitionProof
    p_from: ChainPoint
    p_to: ChainPoint
    state_before: ScState
    state_after: ScState


def prove_blocks(keys: LatusKeys, blocks: Sequence[ScBlock], p_from: ChainPoint,
                 state_before: ScState) -> EpochTransition:
    if not blocks:
        raise UnsatisfiedError("no blocks to prove")
    proofs = []
    point, state = p_from, state_before
    for block in blocks:
        proof, point, state = prove_block(keys, block, point, state)
        proofs.append(proof)
    return EpochTransition(fold(keys, proofs), p_from, point, state_before, state)


_POINTS: weakref.WeakKeyDictionary[ScChain, dict] = weakref.WeakKeyDictionary()


def chain_boundary(chain: ScChain, tip: bytes) -> bytes:
    """Hash of the MC block right before the sidechain start, as seen by the chain to ``tip``."""
    for h in chain.chain(tip)[1:]:
        refs = chain.blocks[h].mc_refs
        if refs:
            return refs[0].header.prev_block
    active = chain.mc.active_chain()
    height = chain.params.start_block - 1
    if height < len(active):
        return active[height]
    raise UnsatisfiedError("the mainchain has not reached the sidechain start")


def chain_point(chain: ScChain, block_hash: bytes) -> ChainPoint:
    """Chain point after ``block_hash``; points are memoised per chain."""
    memo = _POINTS.setdefault(chain, {})
    boundary = chain_boundary(chain, block_hash)
    point = genesis_point(chain.params, boundary)
    for h in chain.chain(block_hash)[1:]:
        key = (h, boundary)
        if key not in memo:
            memo[key] = advance_point(chain.params, point, chain.blocks[h], chain.info[h].state.digest)
        point = memo[key]
    return point


def prove_epoch(keys: LatusKeys, chain: ScChain, wepoch: int, tip: bytes | None = None) -> EpochTransition:
    """Proof that the chain to ``tip`` moves from the end of ``wepoch - 1`` to the end of ``wepoch``."""
    closing = chain.closing_block(wepoch, tip)
    if closing is None:
        raise UnsatisfiedError(f"withdrawal epoch {wepoch} is not closed on this chain")
    blocks = chain.epoch_blocks(wepoch, closing)
    parent = blocks[0].parent
    p_from = chain_point(chain, parent)
    result = prove_blocks(keys, blocks, p_from, chain.state(parent))
    check_epoch_structure(keys.params, result.p_from, result.p_to)
    return result
