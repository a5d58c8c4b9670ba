"""Mainchain registry, epoch schedule, certificates, withdrawals and fork choice."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import KEYS, World, addr

from zendoo.crypto import NULL_LEAF, hash_leaf, hash_node, mht_build, tagged_hash
from zendoo.errors import InvalidBlock, Rejected, UnsatisfiedError
from zendoo.latus import ft_metadata
from zendoo.latus.withdrawals import (
    build_btr_proof,
    build_csw_proof,
    generate_wcert,
    sidechain_config,
)
from zendoo.mainchain import (
    EMPTY_SCTX_COMMITMENT,
    NO_WCERT,
    BackwardTransfer,
    ForwardTransfer,
    McBlockBody,
    McChain,
    McState,
    McTransaction,
    Reason,
    ScLeaf,
    SidechainConfig,
    Status,
    TxOutput,
    WithdrawalCertificate,
    apply_forward_transfer,
    apply_wcert,
    build_sctx_commitment,
    check_ceased,
    epoch_of,
    prove_sc_absence,
    register_sidechain,
    safeguard_violations,
    sc_leaves,
    txs_hash,
    verify_sc_absence,
    verify_wcert,
)
from zendoo.proofsys import Statement, setup
from zendoo.transition import LatusKeys


def config(lid: bytes, start: int = 100, epoch_len: int = 10, submit_len: int = 3, **kw) -> SidechainConfig:
    return SidechainConfig(lid, start, epoch_len, submit_len, setup(Statement.WCERT, lid).vk, **kw)


LID = tagged_hash("lid", b"one")


# registry and schedule --------------------------------------------------------


def test_fresh_registration_is_active_with_zero_balance():
    state = register_sidechain(McState.pre_genesis(), config(LID), height=0)
    entry = state.entry(LID)
    assert entry.status is Status.ACTIVE and entry.balance == 0 and not entry.nullifiers


def test_duplicate_ledger_id_is_rejected():
    state = register_sidechain(McState.pre_genesis(), config(LID), height=0)
    with pytest.raises(Rejected) as exc:
        register_sidechain(state, config(LID, start=200), height=1)
    assert exc.value.reason == Reason.DUPLICATE_LEDGER


@pytest.mark.parametrize("kw", [
    {"epoch_len": 1, "submit_len": 1},
    {"epoch_len": 4, "submit_len": 4},
    {"epoch_len": 4, "submit_len": 0},
    {"start": 0},
])
def test_invalid_parameters_are_rejected(kw):
    with pytest.raises(Rejected) as exc:
        register_sidechain(McState.pre_genesis(), config(LID, **kw), height=0)
    assert exc.value.reason == Reason.BAD_CONFIG


def test_start_block_must_be_in_the_future():
    with pytest.raises(Rejected) as exc:
        register_sidechain(McState.pre_genesis(), config(LID, start=5), height=5)
    assert exc.value.reason == Reason.BAD_CONFIG


def test_wrong_key_kind_is_rejected():
    bad = replace(config(LID), csw_vk=setup(Statement.BTR, LID).vk)
    assert bad.problems()


def test_epoch_schedule():
    cfg = config(LID, start=100, epoch_len=10)
    assert epoch_of(cfg, 100) == (0, 0)
    assert epoch_of(cfg, 119) == (1, 9)
    with pytest.raises(ValueError):
        epoch_of(cfg, 99)
    assert cfg.epoch_last_height(0) == 109
    assert cfg.epoch_last_height(-1) == 99
    assert cfg.window_close_height(0) == 113


@given(st.integers(1, 500), st.integers(2, 30), st.integers(0, 2000))
def test_epoch_of_matches_division(start, epoch_len, offset):
    cfg = config(LID, start=start, epoch_len=epoch_len, submit_len=1)
    epoch, index = epoch_of(cfg, start + offset)
    assert epoch * epoch_len + index == offset and 0 <= index < epoch_len
    assert cfg.epoch_last_height(epoch - 1) < start + offset <= cfg.epoch_last_height(epoch)


# forward transfers -------------------------------------------------------------


def test_forward_transfers_raise_the_balance():
    state = register_sidechain(McState.pre_genesis(), config(LID, start=1), height=0)
    state = apply_forward_transfer(state, ForwardTransfer(LID, b"", 5), height=1)
    assert state.entry(LID).balance == 5
    state = register_sidechain(McState.pre_genesis(), config(LID, start=1), height=0)
    for amount in (2, 3):
        state = apply_forward_transfer(state, ForwardTransfer(LID, b"", amount), height=1)
    assert state.entry(LID).balance == 5 and state.entry(LID).ft_total == 5


def test_forward_transfer_errors():
    state = register_sidechain(McState.pre_genesis(), config(LID, start=10), height=0)
    with pytest.raises(Rejected) as exc:
        apply_forward_transfer(state, ForwardTransfer(tagged_hash("lid", b"x"), b"", 1), height=1)
    assert exc.value.reason == Reason.UNKNOWN_SIDECHAIN
    with pytest.raises(Rejected) as exc:
        apply_forward_transfer(state, ForwardTransfer(LID, b"", 1), height=1)
    assert exc.value.reason == Reason.NOT_STARTED
    with pytest.raises(ValueError):
        ForwardTransfer(LID, b"", 0)


def test_forward_transfer_to_ceased_sidechain_is_rejected():
    w = World()
    w.advance_to(2)
    w.step(w.transfers([("bob", 5)]))
    w.advance_to(8)
    assert w.entry.status is Status.ACTIVE
    # no certificate for epoch 0 by index submit_len of epoch 1
    w.step()
    assert w.entry.status is Status.CEASED
    rejected, _ = w.step(w.ft_tx("bob", 1))
    assert [v.reason for _, v in rejected] == [Reason.CEASED]
    assert w.entry.balance == 5


def test_forward_transfer_coins_leave_the_sender():
    w = World()
    w.advance_to(2)
    before = w.mc.tip_state.balance_of(addr("alice"))
    w.step(w.ft_tx("bob", 7))
    assert w.mc.tip_state.balance_of(addr("alice")) == before - 7


# certificates -------------------------------------------------------------------


def certified_world(amounts=(5,)) -> World:
    w = World()
    w.advance_to(2)
    w.step(w.transfers([("bob", a) for a in amounts]))
    return w


def test_honest_certificate_is_accepted_and_pays_out():
    w = certified_world()
    u = w.utxos("bob")[0]
    w.step(txs=[w.bt("bob", "carol", u)])
    w.advance_to(6)
    cert = w.cert(0)
    assert cert.bt_list == (BackwardTransfer(addr("carol"), 5),)
    assert verify_wcert(w.mc.tip_state, cert)
    rejected, _ = w.step(cert)
    assert not rejected
    assert w.entry.balance == 0 and w.entry.last_cert.epoch_id == 0
    # payouts mature once the submission window closes
    state = w.mc.tip_state
    assert state.balance_of(addr("carol")) == 0
    assert state.balance_of(addr("carol"), at_height=w.config.window_close_height(0)) == 5


def test_safeguard_rejects_overdrawn_certificate():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    greedy = replace(cert, bt_list=(BackwardTransfer(addr("carol"), 6),))
    verdict = verify_wcert(w.mc.tip_state, greedy)
    assert verdict.reason == Reason.SAFEGUARD


def test_certificate_payout_reduces_balance():
    w = certified_world(amounts=(3, 2))
    u = next(u for u in w.utxos("bob") if u.amount == 3)
    w.step(txs=[w.bt("bob", "dave", u)])
    w.advance_to(6)
    w.step(w.cert(0))
    assert w.entry.balance == 2 and w.entry.cert_total == 3


def test_window_and_epoch_rules():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    state = w.mc.tip_state
    # height 6 is still inside epoch 0
    assert verify_wcert(state, cert, height=6).reason == Reason.EPOCH_MISMATCH
    assert verify_wcert(state, cert, height=7)
    assert verify_wcert(state, cert, height=8)
    w.step(cert)
    better = replace(cert, quality=cert.quality + 1)
    # index submit_len of the next epoch: closed before quality is considered
    assert verify_wcert(w.mc.tip_state, better, height=9).reason == Reason.WINDOW_CLOSED
    assert verify_wcert(w.mc.tip_state, cert, height=11).reason == Reason.EPOCH_MISMATCH


def test_quality_rules_and_replacement():
    w = certified_world(amounts=(4,))
    w.step(txs=[w.bt("bob", "carol")])
    w.mine()
    w.mine()
    # two sidechain branches close epoch 0; the second is one block taller
    fork = w.sc.tip
    short, _ = w.forge(parent=fork)
    pad, _ = w.forge(parent=fork, max_refs=0)
    tall, _ = w.forge(parent=pad.hash)
    first = w.cert(0, tip=short.hash)
    better = w.cert(0, tip=tall.hash)
    assert better.quality == first.quality + 1
    assert first.bt_list == better.bt_list == (BackwardTransfer(addr("carol"), 4),)
    _, rejected = w.mine(first)
    assert not rejected
    payouts = w.entry.certs[0].payouts
    # equal quality: the first one stays
    assert verify_wcert(w.mc.tip_state, replace(first)).reason == Reason.QUALITY_EQUAL
    lower = replace(first, quality=first.quality - 1)
    assert verify_wcert(w.mc.tip_state, lower).reason == Reason.QUALITY_LOWER
    _, rejected = w.mine(better)
    assert not rejected
    assert w.entry.certs[0].cert_hash == better.hash
    assert not set(payouts) & set(w.mc.tip_state.utxos)
    assert w.entry.balance == 0 and w.entry.cert_total == 4
    carol = [c for _, c in w.mc.tip_state.coins_of(addr("carol"))]
    assert [c.output.amount for c in carol] == [4]
    assert not safeguard_violations(w.mc.tip_state)


def test_tampered_certificate_fails_the_proof():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    for bad in (replace(cert, quality=cert.quality + 1),
                replace(cert, bt_list=(BackwardTransfer(addr("carol"), 1),)),
                replace(cert, proof=None)):
        assert verify_wcert(w.mc.tip_state, bad).reason == Reason.BAD_PROOF


def test_certificate_for_another_sidechain_key_fails():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    foreign = generate_wcert(LatusKeys(w.params, b"other-seed"), w.sc, 0)
    assert foreign.bt_list == cert.bt_list
    assert verify_wcert(w.mc.tip_state, replace(cert, proof=foreign.proof)).reason == Reason.BAD_PROOF


def test_unknown_sidechain_certificate():
    w = certified_world()
    w.advance_to(6)
    cert = replace(w.cert(0), ledger_id=tagged_hash("lid", b"nobody"))
    assert verify_wcert(w.mc.tip_state, cert).reason == Reason.UNKNOWN_SIDECHAIN


def test_proofdata_schema_is_enforced():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    assert verify_wcert(w.mc.tip_state, replace(cert, proofdata=cert.proofdata[:-1])).reason == Reason.PROOFDATA


def test_one_certificate_per_sidechain_per_block():
    w = certified_world()
    w.advance_to(6)
    cert = w.cert(0)
    body = McBlockBody(certificates=(cert, replace(cert, quality=cert.quality + 1)))
    with pytest.raises(Rejected) as exc:
        build_sctx_commitment(body)
    assert exc.value.reason == Reason.CERT_PER_BLOCK


def test_apply_wcert_state_helper():
    w = certified_world()
    w.advance_to(6)
    state = apply_wcert(w.mc.tip_state, w.cert(0))
    assert 0 in state.entry(w.lid).certs


# cessation ------------------------------------------------------------------------


def test_cessation_timing_and_monotonicity():
    w = World()
    w.advance_to(6)
    w.step(w.cert(0))
    entry = w.entry
    state = w.mc.tip_state
    assert check_ceased(state, entry, 8) is Status.ACTIVE
    # epoch 1 (heights 7..10) has no certificate: due by height 12
    assert check_ceased(state, entry, 12) is Status.ACTIVE
    assert check_ceased(state, entry, 13) is Status.CEASED
    w.advance_to(12)
    assert w.entry.status is Status.ACTIVE
    w.step()
    assert w.entry.status is Status.CEASED
    late = w.cert(1)
    rejected, _ = w.step(late)
    assert [v.reason for _, v in rejected] == [Reason.CEASED]
    w.advance_to(20)
    assert w.entry.status is Status.CEASED


def test_certificate_at_first_window_block_keeps_active():
    w = World()
    w.advance_to(6)
    w.step(w.cert(0))
    assert w.mc.height == 7
    w.advance_to(12)
    assert w.entry.status is Status.ACTIVE


# BTR and CSW ----------------------------------------------------------------------


def withdrawal_world(csw: bool = True, btr: bool = True) -> World:
    w = World(csw=csw, btr=btr)
    w.advance_to(2)
    w.step(w.transfers([("bob", 5), ("carol", 6)]))
    w.advance_to(6)
    return w


def test_btr_without_certificate_is_rejected():
    w = withdrawal_world()
    u = w.utxos("bob")[0]
    with pytest.raises(UnsatisfiedError):
        build_btr_proof(w.keys, w.mc, u, KEYS["bob"], addr("bob"), w.sc.tip_state.mst, 0)


def test_honest_btr_and_replay():
    w = withdrawal_world()
    w.step(w.cert(0))
    u = w.utxos("bob")[0]
    btr = build_btr_proof(w.keys, w.mc, u, KEYS["bob"], addr("dave"), w.sc.tip_state.mst, 0)
    before = w.mc.tip_state.balance_of(addr("dave"))
    rejected, _ = w.step(btr)
    assert not rejected
    assert btr.nullifier in w.entry.nullifiers
    # no direct payment on the mainchain
    assert w.mc.tip_state.balance_of(addr("dave")) == before
    rejected, _ = w.step(replace(btr))
    assert [v.reason for _, v in rejected] == [Reason.NULLIFIER_USED]


def test_btr_anchored_at_a_stale_certificate_fails():
    w = withdrawal_world()
    w.step(w.cert(0))
    u = w.utxos("bob")[0]
    stale = build_btr_proof(w.keys, w.mc, u, KEYS["bob"], addr("bob"), w.sc.tip_state.mst, 0)
    w.advance_to(10)
    w.step(w.cert(1))
    rejected, _ = w.step(stale)
    assert [v.reason for _, v in rejected] == [Reason.BAD_PROOF]


def test_btr_disabled_when_key_is_null():
    w = withdrawal_world(btr=False)
    w.step(w.cert(0))
    u = w.utxos("bob")[0]
    ref = withdrawal_world()
    ref.step(ref.cert(0))
    btr = build_btr_proof(ref.keys, ref.mc, ref.utxos("bob")[0], KEYS["bob"], addr("bob"), ref.sc.tip_state.mst, 0)
    rejected, _ = w.step(replace(btr, ledger_id=w.lid))
    assert [v.reason for _, v in rejected] == [Reason.DISABLED]
    assert u in w.sc.tip_state.mst


def cease(w: World) -> None:
    w.step(w.cert(0))
    w.advance_to(13)
    assert w.entry.status is Status.CEASED


def test_csw_on_active_sidechain_is_rejected():
    w = withdrawal_world()
    w.step(w.cert(0))
    u = w.utxos("bob")[0]
    csw = build_csw_proof(w.keys, w.mc, u, KEYS["bob"], addr("bob"), w.sc.tip_state.mst, 0)
    rejected, _ = w.step(csw)
    assert [v.reason for _, v in rejected] == [Reason.STILL_ACTIVE]


def test_csw_pays_once_after_cessation():
    w = withdrawal_world()
    w.step(w.cert(0))
    committed_before = w.sc.tip_state.mst
    cease(w)
    u = next(x for x in committed_before.utxos() if x.addr == addr("carol"))
    csw = build_csw_proof(w.keys, w.mc, u, KEYS["carol"], addr("dave"), committed_before, 0)
    before = w.mc.tip_state.balance_of(addr("dave"))
    _, rejected = w.mine(csw)
    assert not rejected
    assert w.mc.tip_state.balance_of(addr("dave")) == before + 6
    assert w.entry.balance == 5 and w.entry.csw_total == 6
    _, rejected = w.mine(replace(csw))
    assert [v.reason for _, v in rejected] == [Reason.NULLIFIER_USED]
    assert not safeguard_violations(w.mc.tip_state)


def test_csw_disabled_when_key_is_null():
    w = withdrawal_world(csw=False)
    w.step(w.cert(0))
    mst = w.sc.tip_state.mst
    cease(w)
    u = w.utxos("bob")[0]
    # any request will do: the null key rejects before the proof is looked at
    ref_keys = LatusKeys(w.params, b"latus")
    csw = build_csw_proof(ref_keys, w.mc, u, KEYS["bob"], addr("bob"), mst, 0)
    _, rejected = w.mine(csw)
    assert [v.reason for _, v in rejected] == [Reason.DISABLED]


def test_csw_for_unknown_sidechain():
    w = withdrawal_world()
    w.step(w.cert(0))
    mst = w.sc.tip_state.mst
    cease(w)
    csw = build_csw_proof(w.keys, w.mc, w.utxos("bob")[0], KEYS["bob"], addr("bob"), mst, 0)
    _, rejected = w.mine(replace(csw, ledger_id=tagged_hash("lid", b"nobody")))
    assert [v.reason for _, v in rejected] == [Reason.UNKNOWN_SIDECHAIN]


def test_csw_with_wrong_receiver_fails_the_proof():
    w = withdrawal_world()
    w.step(w.cert(0))
    mst = w.sc.tip_state.mst
    cease(w)
    csw = build_csw_proof(w.keys, w.mc, w.utxos("bob")[0], KEYS["bob"], addr("bob"), mst, 0)
    _, rejected = w.mine(replace(csw, receiver=addr("dave")))
    assert [v.reason for _, v in rejected] == [Reason.BAD_PROOF]


# commitment -------------------------------------------------------------------------


def test_empty_body_has_fixed_commitment():
    assert build_sctx_commitment(McBlockBody()) == EMPTY_SCTX_COMMITMENT
    assert verify_sc_absence(EMPTY_SCTX_COMMITMENT, LID, ())


def body_with_fts(*lids: bytes) -> McBlockBody:
    fts = tuple(ForwardTransfer(lid, b"m", i + 1) for i, lid in enumerate(lids))
    return McBlockBody(transactions=(McTransaction(outputs=(), forward_transfers=fts),))


def two_sidechain_body() -> tuple[McBlockBody, bytes, bytes]:
    a, b = tagged_hash("lid", b"a"), tagged_hash("lid", b"b")
    return body_with_fts(b, a), min(a, b), max(a, b)


def test_two_sidechain_commitment_shape():
    body, first, second = two_sidechain_body()
    leaves = sc_leaves(body)
    assert [leaf.ledger_id for leaf in leaves] == [first, second]
    sc1, sc2 = (leaf.digest for leaf in leaves)
    assert build_sctx_commitment(body) == hash_node(hash_leaf(sc1), hash_leaf(sc2))


def test_three_sidechains_pad_with_the_null_leaf():
    lids = sorted(tagged_hash("lid", bytes([i])) for i in range(3))
    leaves = [leaf.digest for leaf in sc_leaves(body_with_fts(*lids))]
    expected = hash_node(hash_node(hash_leaf(leaves[0]), hash_leaf(leaves[1])),
                         hash_node(hash_leaf(leaves[2]), hash_leaf(NULL_LEAF)))
    assert build_sctx_commitment(body_with_fts(*lids)) == expected


def test_sidechain_leaf_commits_to_transfers_and_certificate():
    body, first, _ = two_sidechain_body()
    leaf = sc_leaves(body)[0]
    fts = [ft for ft in body.forward_transfers() if ft.ledger_id == first]
    assert leaf.txs_hash == txs_hash(fts, [])
    assert leaf.wcert_hash == NO_WCERT


def test_commitment_uses_ledger_id_order():
    body, _, _ = two_sidechain_body()
    leaves = sc_leaves(body)
    canonical = build_sctx_commitment(body)
    assert canonical == mht_build([leaf.digest for leaf in leaves]).root
    assert canonical != mht_build([leaf.digest for leaf in reversed(leaves)]).root


def test_absence_proofs():
    body, first, second = two_sidechain_body()
    root = build_sctx_commitment(body)
    for probe in (b"\x00" * 32, b"\xff" * 32, tagged_hash("lid", b"c")):
        if probe in (first, second):
            continue
        proofs = prove_sc_absence(body, probe)
        assert verify_sc_absence(root, probe, proofs)
        assert not verify_sc_absence(root, first, proofs)
    with pytest.raises(ValueError):
        prove_sc_absence(body, first)
    assert isinstance(sc_leaves(body)[0], ScLeaf)


# chain and fork choice ---------------------------------------------------------------


def test_linear_extension_and_header_checks():
    mc = McChain.create([TxOutput(addr("alice"), 100)])
    block, _ = mc.mine([], nonce=1)
    assert mc.tip == block.hash and mc.height == 1
    with pytest.raises(InvalidBlock) as exc:
        mc.extend_chain(block)
    assert exc.value.reason == Reason.DUPLICATE_BLOCK
    orphan = replace(block, header=replace(block.header, prev_block=b"\x01" * 32, nonce=9))
    with pytest.raises(InvalidBlock) as exc:
        mc.extend_chain(orphan)
    assert exc.value.reason == Reason.UNKNOWN_PARENT
    bad = mc.build_block(mc.tip, [], nonce=2)[0]
    bad = replace(bad, header=replace(bad.header, sc_txs_commitment=b"\x02" * 32))
    with pytest.raises(InvalidBlock) as exc:
        mc.extend_chain(bad)
    assert exc.value.reason == Reason.BAD_COMMITMENT
    tall = mc.build_block(mc.tip, [], nonce=3)[0]
    tall = replace(tall, header=replace(tall.header, height=5))
    with pytest.raises(InvalidBlock) as exc:
        mc.extend_chain(tall)
    assert exc.value.reason == Reason.BAD_HEIGHT


def test_longer_fork_wins_and_drops_orphaned_certificate():
    w = World()
    w.advance_to(6)
    fork_point = w.mc.tip
    cert_block, _ = w.mine(w.cert(0))
    assert 0 in w.entry.certs
    a, _ = w.mine(parent=fork_point, nonce=101)
    assert w.mc.tip == cert_block.hash  # tie: first seen stays
    b, _ = w.mine(parent=a.hash, nonce=102)
    assert w.mc.tip == b.hash
    assert not w.mc.on_active_chain(cert_block.hash)
    assert 0 not in w.entry.certs


def test_arrival_order_does_not_change_the_winner():
    mc = McChain.create([TxOutput(addr("alice"), 100)])
    g = mc.tip
    a1 = mc.build_block(g, [], nonce=1)[0]
    mc.extend_chain(a1)
    b1 = mc.build_block(g, [], nonce=2)[0]
    mc.extend_chain(b1)
    b2 = mc.build_block(b1.hash, [], nonce=3)[0]
    mc.extend_chain(b2)
    other = McChain(mc.block(g))
    for blk in (b1, b2, a1):
        other.extend_chain(blk)
    assert mc.tip == other.tip == b2.hash
    assert mc.tip_state.hashes == other.tip_state.hashes


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 9)), min_size=1, max_size=12))
def test_safeguard_holds_along_random_funding(plan):
    w = World(depth=4)
    for nonce, amount in plan:
        w.mine(w.ft_tx(addr("bob"), amount), nonce=1000 + nonce + 100 * w.mc.height)
        if w.entry.status is Status.CEASED:
            break
    state = w.mc.tip_state
    assert not safeguard_violations(state)
    assert w.entry.balance >= 0


def test_register_through_blocks():
    mc = McChain.create([TxOutput(addr("alice"), 100)])
    keys = LatusKeys(World().params, b"x")
    cfg = sidechain_config(keys)
    _, rejected = mc.mine([cfg])
    assert not rejected
    _, rejected = mc.mine([cfg])
    assert [v.reason for _, v in rejected] == [Reason.DUPLICATE_LEDGER]
    assert mc.tip_state.entry(cfg.ledger_id).status is Status.ACTIVE


def test_metadata_is_opaque_to_the_mainchain():
    w = World()
    w.advance_to(2)
    rejected, _ = w.step(w.ft_tx("bob", 2, metadata=b"anything at all"))
    assert not rejected
    assert w.entry.balance == 2
    assert ft_metadata(addr("bob"), addr("alice")) != b"anything at all"


def test_certificate_fields_are_validated():
    with pytest.raises(ValueError):
        WithdrawalCertificate(LID, -1, 0, (), ())
    with pytest.raises(ValueError):
        BackwardTransfer(addr("bob"), 0)
