"""Base, Merge, block and epoch transition proofs."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import KEYS, World, addr

from zendoo.crypto import MerkleStateTree, Utxo, mst_position
from zendoo.errors import UnsatisfiedError
from zendoo.latus import BTTx, LatusParams, PaymentTx, ScState, apply_tx
from zendoo.latus.types import StateView
from zendoo.mainchain import verify_wcert
from zendoo.proofsys import Statement, StatementProof, public_binding
from zendoo.transition import (
    BaseWitness,
    LatusKeys,
    MergeWitness,
    TransitionProof,
    chain_point,
    fold,
    genesis_point,
    prove_base,
    prove_block,
    prove_blocks,
    prove_epoch,
    prove_merge,
    sibling_vk,
    transition_leaves,
    verify_transition,
)

PARAMS = LatusParams(b"\x01" * 32, 8, 3, 4, 2, 4, ((addr("forger"), 1),))
KEYRING = LatusKeys(PARAMS)


def vk_for(proof: TransitionProof, keys: LatusKeys = KEYRING):
    return keys.vk(proof.kind)


def coin(owner: str, amount: int, label: bytes) -> Utxo:
    return Utxo(addr(owner), amount, label.ljust(32, b"\x00"))


def funded(*utxos: Utxo) -> ScState:
    return ScState(MerkleStateTree(8, {mst_position(u, 8): u for u in utxos}))


def payment_chain(n: int) -> tuple[ScState, list]:
    """``n`` payments passing one coin back and forth between alice and bob."""
    u = coin("alice", 9, b"start")
    state = funded(u)
    start = state
    owner, txs = "alice", []
    for _ in range(n):
        nxt = "bob" if owner == "alice" else "alice"
        tx = PaymentTx.create([u], [KEYS[owner]], [(addr(nxt), 9)])
        txs.append(tx)
        state = apply_tx(state, tx)
        u, owner = tx.outputs[0], nxt
    return start, txs


def base_proofs(n: int) -> list[TransitionProof]:
    state, txs = payment_chain(n)
    out = []
    for tx in txs:
        out.append(prove_base(KEYRING, tx, state))
        state = apply_tx(state, tx)
    return out


# state digests ----------------------------------------------------------------------------


@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32),
       st.sets(st.integers(0, 255), max_size=6), st.integers(0, 2))
def test_state_digest_binds_every_field(root, acc, touched, which):
    view = StateView(root, acc, tuple(sorted(touched)))
    assert view.digest == StateView(root, acc, tuple(sorted(touched))).digest
    flip = bytes([root[0] ^ 1]) + root[1:]
    changed = [
        StateView(flip, acc, view.touched),
        StateView(root, bytes([acc[0] ^ 1]) + acc[1:], view.touched),
        StateView(root, acc, tuple(sorted(set(touched) ^ {256}))),
    ][which]
    assert changed.digest != view.digest


# base proofs ---------------------------------------------------------------------------------


def test_valid_payment_transition_verifies():
    state, (tx,) = payment_chain(1)
    proof = prove_base(KEYRING, tx, state, apply_tx(state, tx))
    assert proof.kind is Statement.BASE_PAYMENT
    assert proof.s_from == state.digest and proof.s_to == apply_tx(state, tx).digest
    assert verify_transition(vk_for(proof), proof.s_from, proof.s_to, proof)


def test_backward_transfer_transition_verifies():
    u = coin("alice", 4, b"bt")
    state = funded(u)
    tx = BTTx.create([u], [KEYS["alice"]], [(addr("carol"), 4)])
    proof = prove_base(KEYRING, tx, state)
    assert proof.kind is Statement.BASE_BT
    assert verify_transition(vk_for(proof), proof.s_from, proof.s_to, proof)


def test_transaction_mutated_after_proving_fails():
    state, (tx,) = payment_chain(1)
    proof = prove_base(KEYRING, tx, state)
    w = proof.proof.witness
    other = PaymentTx.create(tx.inputs, [KEYS["alice"]], [(addr("carol"), 9)])
    forged = replace(proof, proof=replace(proof.proof, witness=replace(w, tx=other)))
    assert not verify_transition(vk_for(proof), proof.s_from, proof.s_to, forged)
    # a payment witness cannot pass under the transfer circuit either
    as_bt = replace(proof, kind=Statement.BASE_BT)
    assert not verify_transition(KEYRING.vk(Statement.BASE_BT), proof.s_from, proof.s_to, as_bt)


def test_invalid_or_missing_transaction_is_not_provable():
    state, (tx,) = payment_chain(1)
    with pytest.raises(UnsatisfiedError):
        prove_base(KEYRING, None, state)
    with pytest.raises(UnsatisfiedError):
        prove_base(KEYRING, tx, ScState.genesis(8))
    with pytest.raises(UnsatisfiedError):
        prove_base(KEYRING, tx, state, state)


def test_hand_built_base_proof_with_wrong_endpoint_fails():
    state, (tx,) = payment_chain(1)
    vk = KEYRING.vk(Statement.BASE_PAYMENT)
    pi = (state.digest, state.digest)
    witness = BaseWitness(tx, state.view, ())
    proof = TransitionProof(Statement.BASE_PAYMENT, *pi, StatementProof(vk.digest, public_binding(vk, pi), witness))
    assert not verify_transition(vk, *pi, proof)


# merge ------------------------------------------------------------------------------------------


def test_merge_of_two_bases():
    a, b = base_proofs(2)
    merged = prove_merge(KEYRING, a, b)
    assert (merged.s_from, merged.s_to) == (a.s_from, b.s_to)
    assert verify_transition(KEYRING.vk(Statement.MERGE), a.s_from, b.s_to, merged)
    assert transition_leaves(merged) == [a.proof.witness.tx, b.proof.witness.tx]


def test_merge_needs_adjacent_endpoints():
    a, _, c = base_proofs(3)
    with pytest.raises(UnsatisfiedError):
        prove_merge(KEYRING, a, c)
    with pytest.raises(UnsatisfiedError):
        fold(KEYRING, [])


def test_forged_merge_of_non_adjacent_children_fails():
    a, _, c = base_proofs(3)
    vk = KEYRING.vk(Statement.MERGE)
    pi = (a.s_from, c.s_to)
    proof = TransitionProof(Statement.MERGE, *pi, StatementProof(vk.digest, public_binding(vk, pi),
                                                                   MergeWitness(a, c)))
    assert not verify_transition(vk, *pi, proof)


def test_fold_shape_does_not_change_the_result():
    proofs = base_proofs(7)
    balanced = fold(KEYRING, proofs)
    left = proofs[0]
    for p in proofs[1:]:
        left = prove_merge(KEYRING, left, p)
    right = proofs[-1]
    for p in reversed(proofs[:-1]):
        right = prove_merge(KEYRING, p, right)
    vk = KEYRING.vk(Statement.MERGE)
    for tree in (balanced, left, right):
        assert (tree.s_from, tree.s_to) == (proofs[0].s_from, proofs[-1].s_to)
        assert verify_transition(vk, tree.s_from, tree.s_to, tree)
        assert transition_leaves(tree) == [p.proof.witness.tx for p in proofs]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.data())
def test_any_merge_tree_verifies(n, data):
    proofs = base_proofs(n)
    items = list(proofs)
    while len(items) > 1:
        i = data.draw(st.integers(0, len(items) - 2))
        items[i:i + 2] = [prove_merge(KEYRING, items[i], items[i + 1])]
    top = items[0]
    assert (top.s_from, top.s_to) == (proofs[0].s_from, proofs[-1].s_to)
    assert verify_transition(vk_for(top), top.s_from, top.s_to, top)


def test_swapped_endpoints_and_foreign_key_fail():
    a, b = base_proofs(2)
    merged = prove_merge(KEYRING, a, b)
    vk = KEYRING.vk(Statement.MERGE)
    assert not verify_transition(vk, merged.s_to, merged.s_from, merged)
    foreign = LatusKeys(PARAMS, b"someone else")
    assert not verify_transition(foreign.vk(Statement.MERGE), merged.s_from, merged.s_to, merged)
    assert not verify_transition(vk, merged.s_from, merged.s_to, "proof")


# blocks and epochs ---------------------------------------------------------------------------------


def epoch_world() -> World:
    w = World()
    w.advance_to(2)
    w.step(w.transfers([("bob", 5), ("carol", 3)]))
    w.step(txs=[w.pay("bob", "dave", 2), w.bt("carol", "alice")])
    w.advance_to(6)
    return w


def block_inputs(w: World, block_hash: bytes):
    block = w.sc.blocks[block_hash]
    return block, chain_point(w.sc, block.parent), w.sc.state(block.parent)


def test_block_with_one_reference_and_no_transactions():
    w = World()
    w.advance_to(2)
    w.step()
    block, p_from, before = block_inputs(w, w.sc.tip)
    assert len(block.mc_refs) == 1 and not block.sync_and_native_txs()
    proof, p_to, after = prove_block(w.keys, block, p_from, before)
    assert proof.proof.witness.body is None
    assert verify_transition(w.keys.vk(Statement.BASE_BLOCK), p_from.digest, p_to.digest, proof)
    assert p_to.view_digest == after.digest == w.sc.tip_state.digest


def test_block_with_payment_and_transfer_merges_two_bases():
    w = epoch_world()
    block = next(b for b in w.sc.epoch_blocks(0) if len(b.txs) == 2)
    _, p_from, before = block_inputs(w, block.hash)
    proof, p_to, after = prove_block(w.keys, block, p_from, before)
    body = proof.proof.witness.body
    assert body.kind is Statement.MERGE
    assert [type(t).__name__ for t in transition_leaves(body)] == ["PaymentTx", "BTTx"]
    assert after.digest == w.sc.state(block.hash).digest
    assert verify_transition(w.keys.vk(Statement.BASE_BLOCK), p_from.digest, p_to.digest, proof)


def test_block_with_swapped_references_is_not_provable():
    w = World()
    w.advance_to(2)
    w.mine()
    w.mine()
    block, _ = w.forge()
    assert len(block.mc_refs) == 2
    _, p_from, before = block_inputs(w, block.hash)
    swapped = replace(block, mc_refs=tuple(reversed(block.mc_refs)))
    with pytest.raises(UnsatisfiedError):
        prove_block(w.keys, swapped, p_from, before)


def test_epoch_proof_matches_chain_states():
    w = epoch_world()
    ep = prove_epoch(w.keys, w.sc, 0)
    closing = w.sc.closing_block(0)
    assert ep.p_to.sc_hash == closing
    assert ep.p_to.view_digest == w.sc.state(closing).digest
    assert ep.state_after.digest == w.sc.state(closing).digest
    vk = sibling_vk(w.keys.vk(Statement.MERGE), ep.proof.kind)
    assert verify_transition(vk, ep.p_from.digest, ep.p_to.digest, ep.proof)
    assert len(transition_leaves(ep.proof)) == len(w.sc.epoch_blocks(0))


def test_first_epoch_starts_at_genesis():
    w = epoch_world()
    ep = prove_epoch(w.keys, w.sc, 0)
    assert ep.p_from == genesis_point(w.params, w.mc.tip_state.hashes[w.params.start_block - 1])
    assert ep.p_from.view_digest == ScState.genesis(w.params.mst_depth).digest


def test_epoch_missing_a_reference_is_not_provable():
    w = epoch_world()
    blocks = w.sc.epoch_blocks(0)
    i = next(i for i, b in enumerate(blocks) if b.mc_refs)
    dropped = list(blocks)
    dropped[i] = replace(blocks[i], mc_refs=blocks[i].mc_refs[1:])
    parent = blocks[0].parent
    with pytest.raises(UnsatisfiedError):
        prove_blocks(w.keys, dropped, chain_point(w.sc, parent), w.sc.state(parent))


def test_unclosed_epoch_is_not_provable():
    w = World()
    w.advance_to(4)
    with pytest.raises(UnsatisfiedError):
        prove_epoch(w.keys, w.sc, 0)


def test_second_epoch_continues_the_first():
    w = epoch_world()
    w.step(w.cert(0))
    w.step(txs=[w.pay("dave", "bob", 2)])
    w.advance_to(10)
    first = prove_epoch(w.keys, w.sc, 0)
    second = prove_epoch(w.keys, w.sc, 1)
    assert second.p_from == first.p_to
    assert second.p_to.anchor_block == w.sc.closing_block(0)
    cert = w.cert(1)
    assert verify_wcert(w.mc.tip_state, cert)
