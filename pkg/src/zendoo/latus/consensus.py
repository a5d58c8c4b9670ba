"""Latus block validation, slot leader selection and fork choice.

Time is split into slots; ``slots_per_epoch`` slots make a consensus epoch.
The leader of a slot is drawn by stake from a distribution that lags two
consensus epochs, seeded by the hash of the last block before the epoch.
Withdrawal epochs are unrelated to consensus epochs: they follow the
mainchain heights of the referenced blocks.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Any

from ..codec import encode
from ..crypto import PrivateKey, tagged_hash, verify_signature
from ..errors import InvalidBlock, MerkleError, Rejected
from ..mainchain import McChain
from .references import make_mc_reference, verify_mc_reference
from .transactions import apply_tx, try_apply
from .types import NATIVE_TXS, LatusParams, McBlockReference, ScBlock, ScState


class ScReason:
    UNKNOWN_PARENT = "unknown-parent"
    DUPLICATE = "duplicate-block"
    BAD_HEIGHT = "bad-height"
    BAD_SLOT = "bad-slot"
    WRONG_LEADER = "wrong-leader"
    BAD_SIGNATURE = "bad-signature"
    BAD_REFERENCE = "bad-reference"
    UNKNOWN_MC_BLOCK = "unknown-mc-block"
    NOT_CONTIGUOUS = "refs-not-contiguous"
    WRONG_EPOCH = "ref-outside-epoch"
    CLOSING_NOT_LAST = "closing-ref-not-last"
    BAD_TX = "bad-transaction"


def slot_leader(stakes: Sequence[tuple[bytes, int]], rand: bytes, slot: int) -> bytes:
    """Stake-weighted draw for one slot; ``stakes`` are (address, amount) pairs."""
    table = sorted((a, s) for a, s in stakes if s > 0)
    total = sum(s for _, s in table)
    if total == 0:
        raise ValueError("no stake")
    ticket = int.from_bytes(tagged_hash("slot-leader", rand, slot.to_bytes(8, "big")), "big") % total
    for addr, stake in table:
        if ticket < stake:
            return addr
        ticket -= stake
    raise AssertionError("unreachable")


def select_slot_leaders(stakes: Sequence[tuple[bytes, int]], rand: bytes, k: int, epoch: int) -> list[bytes]:
    return [slot_leader(stakes, rand, s) for s in range(epoch * k, (epoch + 1) * k)]


def stake_table(params: LatusParams, state: ScState | None) -> tuple[tuple[bytes, int], ...]:
    stakes = dict(params.genesis_stakes)
    if state is not None:
        for addr, amount in state.holdings().items():
            stakes[addr] = stakes.get(addr, 0) + amount
    return tuple(sorted(stakes.items()))


@dataclass
class RefCursor:
    """Position of the reference chain: last referenced MC block and the epoch being filled."""

    last_hash: bytes | None
    last_height: int
    wepoch: int
    closed: bool = False


def check_references(params: LatusParams, refs: Sequence[McBlockReference], cursor: RefCursor) -> RefCursor:
    """Validate ``refs`` as the continuation of ``cursor``; raises Rejected."""
    last_hash, last_height = cursor.last_hash, cursor.last_height
    wepoch = cursor.wepoch + 1 if cursor.closed else cursor.wepoch
    closed = False
    for i, ref in enumerate(refs):
        if not verify_mc_reference(ref, params.ledger_id):
            raise Rejected(ScReason.BAD_REFERENCE, f"reference {i}")
        header = ref.header
        if header.height != last_height + 1 or (last_hash is not None and header.prev_block != last_hash):
            raise Rejected(ScReason.NOT_CONTIGUOUS, f"reference {i} at height {header.height}")
        if header.height < params.start_block or params.mc_epoch(header.height) != wepoch:
            raise Rejected(ScReason.WRONG_EPOCH, f"reference {i}")
        if params.closes_epoch(header.height):
            if i != len(refs) - 1:
                raise Rejected(ScReason.CLOSING_NOT_LAST)
            closed = True
        last_hash, last_height = header.hash, header.height
    return RefCursor(last_hash, last_height, wepoch, closed)


def apply_block_txs(state: ScState, block: ScBlock) -> ScState:
    """Sync txs of every reference, then the native txs; any failure rejects the block."""
    for tx in block.sync_and_native_txs():
        try:
            state = apply_tx(state, tx)
        except Rejected as exc:
            raise Rejected(ScReason.BAD_TX, f"{type(tx).__name__}: {exc}") from None
        except MerkleError as exc:
            raise Rejected(ScReason.BAD_TX, str(exc)) from None
    return state


def check_native_txs(block: ScBlock) -> None:
    if not all(isinstance(tx, NATIVE_TXS) for tx in block.txs):
        raise Rejected(ScReason.BAD_TX, "only payments and backward transfers may be forged freely")


def check_signature(block: ScBlock) -> None:
    if not verify_signature(block.forger, block.signing_digest, block.signature):
        raise Rejected(ScReason.BAD_SIGNATURE)


@dataclass
class BlockInfo:
    state: ScState
    cursor: RefCursor
    arrival: int
    state_before: ScState | None = None


class ScChain:
    """Block tree of one Latus sidechain, evaluated against a mainchain view."""

    def __init__(self, params: LatusParams, mc: McChain):
        self.params = params
        self.mc = mc
        genesis = params.genesis
        self.genesis = genesis.hash
        self.blocks: dict[bytes, ScBlock] = {self.genesis: genesis}
        self.info: dict[bytes, BlockInfo] = {
            self.genesis: BlockInfo(ScState.genesis(params.mst_depth),
                                    RefCursor(None, params.start_block - 1, 0), 0)
        }
        self.children: dict[bytes, list[bytes]] = {self.genesis: []}
        self.leaves: dict[bytes, None] = {self.genesis: None}
        self._rand: dict[tuple[bytes, int], bytes] = {}
        self._stakes: dict[tuple[bytes, int], tuple] = {}
        self._tip_key: tuple | None = None
        self._tip = self.genesis

    # consensus -----------------------------------------------------------

    def _ancestor_before(self, block_hash: bytes, epoch: int) -> bytes:
        """Latest block on the chain ending at ``block_hash`` whose consensus epoch is below ``epoch``."""
        h = block_hash
        while True:
            b = self.blocks[h]
            if b.epoch < epoch or b.height == 0:
                return h
            h = b.parent

    def epoch_randomness(self, parent_hash: bytes, epoch: int) -> bytes:
        key = (parent_hash, epoch)
        if key not in self._rand:
            self._rand[key] = self._ancestor_before(parent_hash, epoch)
        return self._rand[key]

    def epoch_stakes(self, parent_hash: bytes, epoch: int) -> tuple[tuple[bytes, int], ...]:
        key = (parent_hash, epoch)
        if key not in self._stakes:
            if epoch < 2:
                self._stakes[key] = stake_table(self.params, None)
            else:
                anchor = self._ancestor_before(parent_hash, epoch - 1)
                self._stakes[key] = stake_table(self.params, self.info[anchor].state)
        return self._stakes[key]

    def leader(self, parent_hash: bytes, slot: int) -> bytes:
        epoch = slot // self.params.slots_per_epoch
        stakes = self.epoch_stakes(parent_hash, epoch)
        return slot_leader(stakes, self.epoch_randomness(parent_hash, epoch), slot)

    # validation ----------------------------------------------------------

    def _validate(self, block: ScBlock) -> BlockInfo:
        if not isinstance(block, ScBlock):
            raise InvalidBlock(ScReason.BAD_HEIGHT, "not a sidechain block")
        h = block.hash
        if h in self.blocks:
            raise InvalidBlock(ScReason.DUPLICATE)
        parent = self.blocks.get(block.parent)
        if parent is None:
            raise InvalidBlock(ScReason.UNKNOWN_PARENT)
        if block.height != parent.height + 1:
            raise InvalidBlock(ScReason.BAD_HEIGHT)
        if block.slot <= parent.slot or block.epoch != block.slot // self.params.slots_per_epoch:
            raise InvalidBlock(ScReason.BAD_SLOT)
        if block.forger != self.leader(block.parent, block.slot):
            raise InvalidBlock(ScReason.WRONG_LEADER)
        try:
            check_signature(block)
            check_native_txs(block)
            for ref in block.mc_refs:
                known = self.mc.blocks.get(ref.header.hash)
                if known is None:
                    raise Rejected(ScReason.UNKNOWN_MC_BLOCK)
            pinfo = self.info[block.parent]
            cursor = check_references(self.params, block.mc_refs, pinfo.cursor)
            start = pinfo.state.reset() if pinfo.cursor.closed else pinfo.state
            state = apply_block_txs(start, block)
        except InvalidBlock:
            raise
        except Rejected as exc:
            raise InvalidBlock(exc.reason, exc.detail) from None
        return BlockInfo(state, cursor, len(self.info), start)

    def add_block(self, block: ScBlock) -> bool:
        """Validate and store ``block``; returns True if it is the new tip."""
        info = self._validate(block)
        h = block.hash
        self.blocks[h] = block
        self.info[h] = info
        self.children[h] = []
        self.children[block.parent].append(h)
        self.leaves.pop(block.parent, None)
        self.leaves[h] = None
        return self.tip == h

    # fork choice -----------------------------------------------------------

    def eligible(self, block_hash: bytes) -> bool:
        """All referenced MC blocks lie on the mainchain's active chain."""
        last = self.info[block_hash].cursor.last_hash
        return last is None or self.mc.on_active_chain(last)

    @property
    def tip(self) -> bytes:
        # the answer only changes when a block arrives here or the MC tip moves
        key = (self.mc.tip, len(self.info))
        if self._tip_key != key:
            self._tip = self._choose_tip()
            self._tip_key = key
        return self._tip

    def _choose_tip(self) -> bytes:
        active = self.mc.tip_state.hashes

        def eligible(h: bytes) -> bool:
            cur = self.info[h].cursor
            if cur.last_hash is None:
                return True
            return cur.last_height < len(active) and active[cur.last_height] == cur.last_hash

        best = None
        best_key = None
        for leaf in self.leaves:
            h = leaf
            while not eligible(h):
                h = self.blocks[h].parent
            key = (self.blocks[h].height, -self.info[h].arrival)
            if best_key is None or key > best_key:
                best, best_key = h, key
        return best

    @property
    def tip_state(self) -> ScState:
        return self.info[self.tip].state

    def state(self, block_hash: bytes) -> ScState:
        return self.info[block_hash].state

    def chain(self, tip: bytes | None = None) -> list[bytes]:
        """Block hashes from genesis to ``tip`` (default: current tip)."""
        h = self.tip if tip is None else tip
        out = []
        while True:
            out.append(h)
            if h == self.genesis:
                break
            h = self.blocks[h].parent
        out.reverse()
        return out

    def epoch_blocks(self, wepoch: int, tip: bytes | None = None) -> list[ScBlock]:
        """Blocks of withdrawal epoch ``wepoch`` on the chain to ``tip``."""
        return [self.blocks[h] for h in self.chain(tip)[1:] if self.info[h].cursor.wepoch == wepoch]

    def closing_block(self, wepoch: int, tip: bytes | None = None) -> bytes | None:
        for h in self.chain(tip):
            cur = self.info[h].cursor
            if cur.closed and cur.wepoch == wepoch:
                return h
        return None

    # forging ---------------------------------------------------------------

    def pending_mc_blocks(self, parent_hash: bytes, limit: int | None = None) -> list[bytes]:
        """Active-chain MC blocks the next block after ``parent_hash`` may reference."""
        cursor = self.info[parent_hash].cursor
        active = self.mc.active_chain()
        if cursor.last_hash is not None and not self.mc.on_active_chain(cursor.last_hash):
            return []
        out = []
        height = cursor.last_height + 1
        while height < len(active) and (limit is None or len(out) < limit):
            out.append(active[height])
            if self.params.closes_epoch(height):
                break
            height += 1
        return out

    def forge(self, parent_hash: bytes, slot: int, key: PrivateKey, txs: Sequence[Any] = (),
              max_refs: int | None = None) -> tuple[ScBlock, list]:
        """Build and sign a block.

        Txs that do not apply on top of the references are left out and
        returned as (tx, Rejected) pairs.
        """
        pinfo = self.info[parent_hash]
        parent = self.blocks[parent_hash]
        state = pinfo.state.reset() if pinfo.cursor.closed else pinfo.state
        refs = []
        for mc_hash in self.pending_mc_blocks(parent_hash, max_refs):
            ref = make_mc_reference(self.mc.block(mc_hash), self.params.ledger_id, state)
            for tx in ref.sync_txs():
                state = apply_tx(state, tx)
            refs.append(ref)
        kept, dropped = [], []
        for tx in txs:
            if not isinstance(tx, NATIVE_TXS):
                dropped.append((tx, Rejected(ScReason.BAD_TX, "not a native transaction")))
                continue
            new_state, err = try_apply(state, tx)
            if err is None:
                kept.append(tx)
                state = new_state
            else:
                dropped.append((tx, err))
        block = ScBlock(parent_hash, parent.height + 1, slot // self.params.slots_per_epoch, slot,
                        key.address, tuple(refs), tuple(kept))
        digest = block.signing_digest
        signed = replace(block, signature=key.sign(digest))
        signed.__dict__["signing_digest"] = digest  # the signature is not part of what is signed
        return signed, dropped


def fingerprint(chain: ScChain) -> bytes:
    """Digest of the tip state, for replay comparisons."""
    return tagged_hash("sc-fingerprint", encode(chain.tip_state))
