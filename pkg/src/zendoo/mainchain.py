"""Mainchain node: UTXO ledger, sidechain registry, certificates, BTR/CSW and fork choice.

Every block's resulting state is kept, so switching to a heavier branch is a
pointer move and the registry on the new tip is exactly what replaying that
branch from genesis produces.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any

from .codec import encode, serializable
from .crypto import (
    NULL_LEAF,
    ZERO_DIGEST,
    MerkleProof,
    is_digest,
    merkle_root,
    mht_build,
    mht_prove,
    mht_verify,
    tagged_hash,
    verify_signature,
)
from .errors import InvalidBlock, Rejected
from .proofsys import Statement, VerifyingKey, matches_schema, mh_proofdata, verify


class Reason:
    UNKNOWN_SIDECHAIN = "unknown-sidechain"
    NOT_STARTED = "sidechain-not-started"
    CEASED = "sidechain-ceased"
    STILL_ACTIVE = "sidechain-active"
    EPOCH_MISMATCH = "epoch-mismatch"
    WINDOW_CLOSED = "window-closed"
    QUALITY_LOWER = "quality-lower"
    QUALITY_EQUAL = "quality-equal"
    PROOFDATA = "proofdata-schema"
    SAFEGUARD = "safeguard"
    BAD_PROOF = "bad-proof"
    DUPLICATE_LEDGER = "duplicate-ledger-id"
    BAD_CONFIG = "invalid-config"
    NULLIFIER_USED = "nullifier-used"
    NO_CERT = "no-certificate"
    DISABLED = "withdrawal-disabled"
    MISSING_INPUT = "missing-input"
    IMMATURE = "immature-input"
    BAD_SIGNATURE = "bad-signature"
    VALUE = "value-imbalance"
    DOUBLE_SPEND = "double-spend"
    DUPLICATE_OUTPUT = "duplicate-output"
    MALFORMED = "malformed"
    CERT_PER_BLOCK = "duplicate-cert-in-block"
    UNKNOWN_PARENT = "unknown-parent"
    BAD_HEIGHT = "bad-height"
    BAD_COMMITMENT = "bad-sctx-commitment"
    BAD_BODY_ROOT = "bad-body-root"
    DUPLICATE_BLOCK = "duplicate-block"


def _check_int(value: Any, low: int, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ValueError(f"{name} must be an integer >= {low}")


def _check_digest(value: Any, name: str) -> None:
    if not is_digest(value):
        raise ValueError(f"{name} must be a 32-byte digest")


def _as_tuple(obj: Any, name: str, kind: type | None = None) -> None:
    value = getattr(obj, name)
    if isinstance(value, list):
        value = tuple(value)
        object.__setattr__(obj, name, value)
    if not isinstance(value, tuple):
        raise ValueError(f"{name} must be a sequence")
    if kind is not None and not all(isinstance(v, kind) for v in value):
        raise ValueError(f"{name} must hold {kind.__name__} values")


# ---------------------------------------------------------------------------
# Transactions and cross-chain operations


@serializable
@dataclass(frozen=True)
class ForwardTransfer:
    ledger_id: bytes
    receiver_metadata: bytes
    amount: int

    def __post_init__(self):
        _check_digest(self.ledger_id, "ledger_id")
        if not isinstance(self.receiver_metadata, bytes):
            raise ValueError("receiver_metadata must be bytes")
        _check_int(self.amount, 1, "amount")


@serializable
@dataclass(frozen=True)
class BackwardTransfer:
    receiver: bytes
    amount: int

    def __post_init__(self):
        _check_digest(self.receiver, "receiver")
        _check_int(self.amount, 1, "amount")


@serializable
@dataclass(frozen=True)
class OutPoint:
    txid: bytes
    index: int

    def __post_init__(self):
        _check_digest(self.txid, "txid")
        _check_int(self.index, 0, "index")


@serializable
@dataclass(frozen=True)
class TxInput:
    outpoint: OutPoint
    signature: bytes


@serializable
@dataclass(frozen=True)
class TxOutput:
    address: bytes
    amount: int

    def __post_init__(self):
        _check_digest(self.address, "address")
        _check_int(self.amount, 1, "amount")


@serializable
@dataclass(frozen=True)
class McTransaction:
    inputs: tuple[TxInput, ...] = ()
    outputs: tuple[TxOutput, ...] = ()
    forward_transfers: tuple[ForwardTransfer, ...] = ()

    def __post_init__(self):
        _as_tuple(self, "inputs", TxInput)
        _as_tuple(self, "outputs", TxOutput)
        _as_tuple(self, "forward_transfers", ForwardTransfer)

    @cached_property
    def txid(self) -> bytes:
        """Identifier and signing message; signatures are not covered."""
        spent = tuple(i.outpoint for i in self.inputs)
        return tagged_hash("mc-tx", encode((spent, self.outputs, self.forward_transfers)))


@serializable
@dataclass(frozen=True)
class WithdrawalCertificate:
    ledger_id: bytes
    epoch_id: int
    quality: int
    bt_list: tuple[BackwardTransfer, ...]
    proofdata: tuple
    proof: Any = None

    def __post_init__(self):
        _check_digest(self.ledger_id, "ledger_id")
        _check_int(self.epoch_id, 0, "epoch_id")
        _check_int(self.quality, -(1 << 63), "quality")
        _as_tuple(self, "bt_list", BackwardTransfer)
        _as_tuple(self, "proofdata")

    @cached_property
    def hash(self) -> bytes:
        return tagged_hash("wcert", encode(self))

    @property
    def total(self) -> int:
        return sum(bt.amount for bt in self.bt_list)

    def summary(self) -> CertSummary:
        # memoised like the cached properties: the value is frozen
        cached = self.__dict__.get("_summary")
        if cached is None:
            cached = self.__dict__["_summary"] = CertSummary(
                self.ledger_id, self.epoch_id, self.quality, self.bt_list, self.proofdata, proof_digest(self.proof))
        return cached


def proof_digest(proof: Any) -> bytes:
    return tagged_hash("proof", encode(proof))


@serializable
@dataclass(frozen=True)
class CertSummary:
    """A certificate with its proof replaced by the proof's digest.

    This is what the commitment tree and sidechain references carry, so a
    certificate proof never has to embed the proofs of earlier certificates.
    """

    ledger_id: bytes
    epoch_id: int
    quality: int
    bt_list: tuple[BackwardTransfer, ...]
    proofdata: tuple
    proof_digest: bytes

    def __post_init__(self):
        _as_tuple(self, "bt_list", BackwardTransfer)
        _as_tuple(self, "proofdata")


@dataclass(frozen=True)
class _Withdrawal:
    ledger_id: bytes
    receiver: bytes
    amount: int
    nullifier: bytes
    proofdata: tuple
    proof: Any = None

    def __post_init__(self):
        _check_digest(self.ledger_id, "ledger_id")
        _check_digest(self.receiver, "receiver")
        _check_int(self.amount, 1, "amount")
        _check_digest(self.nullifier, "nullifier")
        _as_tuple(self, "proofdata")

    @cached_property
    def hash(self) -> bytes:
        return tagged_hash(type(self).__name__, encode(self))

    def summary(self) -> WithdrawalSummary:
        cached = self.__dict__.get("_summary")
        if cached is None:
            cached = self.__dict__["_summary"] = WithdrawalSummary(
                type(self).__name__, self.ledger_id, self.receiver, self.amount, self.nullifier,
                self.proofdata, proof_digest(self.proof))
        return cached


@serializable
@dataclass(frozen=True)
class BtrRequest(_Withdrawal):
    pass


@serializable
@dataclass(frozen=True)
class CswRequest(_Withdrawal):
    pass


@serializable
@dataclass(frozen=True)
class WithdrawalSummary:
    kind: str
    ledger_id: bytes
    receiver: bytes
    amount: int
    nullifier: bytes
    proofdata: tuple
    proof_digest: bytes

    def __post_init__(self):
        _as_tuple(self, "proofdata")


@serializable
@dataclass(frozen=True)
class SidechainConfig:
    ledger_id: bytes
    start_block: int
    epoch_len: int
    submit_len: int
    wcert_vk: VerifyingKey
    btr_vk: VerifyingKey | None = None
    csw_vk: VerifyingKey | None = None
    wcert_proofdata: tuple = ()
    btr_proofdata: tuple = ()
    csw_proofdata: tuple = ()

    def __post_init__(self):
        for name in ("wcert_proofdata", "btr_proofdata", "csw_proofdata"):
            _as_tuple(self, name)

    def problems(self) -> list[str]:
        out = []
        if not is_digest(self.ledger_id):
            out.append("ledger_id must be 32 bytes")
        if isinstance(self.epoch_len, bool) or not isinstance(self.epoch_len, int) or self.epoch_len < 2:
            out.append("epoch_len must be >= 2")
        elif isinstance(self.submit_len, bool) or not isinstance(self.submit_len, int) \
                or not 1 <= self.submit_len < self.epoch_len:
            out.append("submit_len must be in [1, epoch_len)")
        if isinstance(self.start_block, bool) or not isinstance(self.start_block, int) or self.start_block < 1:
            out.append("start_block must be >= 1")
        for name, statement in (("wcert_vk", Statement.WCERT), ("btr_vk", Statement.BTR),
                                ("csw_vk", Statement.CSW)):
            vk = getattr(self, name)
            if vk is None and name != "wcert_vk":
                continue
            if not isinstance(vk, VerifyingKey) or vk.statement is not statement:
                out.append(f"{name} must be a {statement.name} verifying key")
        return out

    def epoch_of(self, mc_height: int) -> tuple[int, int]:
        if mc_height < self.start_block:
            raise ValueError(f"height {mc_height} precedes sidechain start {self.start_block}")
        return divmod(mc_height - self.start_block, self.epoch_len)

    def epoch_last_height(self, epoch_id: int) -> int:
        """MC height of the last block of ``epoch_id`` (``start_block - 1`` for epoch -1)."""
        return self.start_block + (epoch_id + 1) * self.epoch_len - 1

    def window_close_height(self, epoch_id: int) -> int:
        """First MC height at which certificates for ``epoch_id`` are no longer accepted."""
        return self.epoch_last_height(epoch_id) + 1 + self.submit_len


@serializable
@dataclass(frozen=True)
class McBlockHeader:
    prev_block: bytes
    height: int
    sc_txs_commitment: bytes
    body_root: bytes
    nonce: int = 0

    @cached_property
    def hash(self) -> bytes:
        return tagged_hash("mc-header", encode(self))


@serializable
@dataclass(frozen=True)
class McBlockBody:
    registrations: tuple[SidechainConfig, ...] = ()
    transactions: tuple[McTransaction, ...] = ()
    certificates: tuple[WithdrawalCertificate, ...] = ()
    btrs: tuple[BtrRequest, ...] = ()
    csws: tuple[CswRequest, ...] = ()

    def __post_init__(self):
        _as_tuple(self, "registrations", SidechainConfig)
        _as_tuple(self, "transactions", McTransaction)
        _as_tuple(self, "certificates", WithdrawalCertificate)
        _as_tuple(self, "btrs", BtrRequest)
        _as_tuple(self, "csws", CswRequest)

    @cached_property
    def root(self) -> bytes:
        return tagged_hash("mc-body", encode(self))

    def forward_transfers(self) -> list[ForwardTransfer]:
        return [ft for tx in self.transactions for ft in tx.forward_transfers]


@serializable
@dataclass(frozen=True)
class McBlock:
    header: McBlockHeader
    body: McBlockBody

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def height(self) -> int:
        return self.header.height


# ---------------------------------------------------------------------------
# SCTxsCommitment

EMPTY_SCTX_COMMITMENT = tagged_hash("sctx-empty")
NO_WCERT = tagged_hash("no-wcert")


@serializable
@dataclass(frozen=True)
class ScLeaf:
    """Per-sidechain leaf of the commitment tree."""

    ledger_id: bytes
    txs_hash: bytes
    wcert_hash: bytes

    @property
    def digest(self) -> bytes:
        return tagged_hash("sc-leaf", self.ledger_id, self.txs_hash, self.wcert_hash)


def ft_hash(fts: Sequence[ForwardTransfer]) -> bytes:
    return merkle_root([tagged_hash("ft", encode(ft)) for ft in fts])


def _summary(obj: Any) -> Any:
    return obj.summary() if hasattr(obj, "summary") else obj


def btr_hash(btrs: Sequence[BtrRequest | WithdrawalSummary]) -> bytes:
    return merkle_root([tagged_hash("btr", encode(_summary(b))) for b in btrs])


def wcert_hash(cert: WithdrawalCertificate | CertSummary | None) -> bytes:
    return NO_WCERT if cert is None else tagged_hash("wcert-leaf", encode(_summary(cert)))


def txs_hash(fts: Sequence[ForwardTransfer], btrs: Sequence[BtrRequest]) -> bytes:
    return tagged_hash("sc-txs", ft_hash(fts), btr_hash(btrs))


def bt_list_root(bts: Sequence[BackwardTransfer]) -> bytes:
    return merkle_root([tagged_hash("bt", encode(bt)) for bt in bts])


def sc_activity(body: McBlockBody) -> dict[bytes, tuple[list, list, WithdrawalCertificate | None]]:
    """Group the block's FTs, BTRs and certificate by sidechain, in block order."""
    groups: dict[bytes, tuple[list, list, list]] = {}

    def group(ledger_id: bytes) -> tuple[list, list, list]:
        return groups.setdefault(ledger_id, ([], [], []))

    for ft in body.forward_transfers():
        group(ft.ledger_id)[0].append(ft)
    for btr in body.btrs:
        group(btr.ledger_id)[1].append(btr)
    for cert in body.certificates:
        certs = group(cert.ledger_id)[2]
        if certs:
            raise Rejected(Reason.CERT_PER_BLOCK, "only one certificate per sidechain per block")
        certs.append(cert)
    return {k: (v[0], v[1], v[2][0] if v[2] else None) for k, v in groups.items()}


def sc_leaves(body: McBlockBody) -> list[ScLeaf]:
    activity = sc_activity(body)
    return [
        ScLeaf(lid, txs_hash(fts, btrs), wcert_hash(cert))
        for lid, (fts, btrs, cert) in sorted(activity.items())
    ]


def build_sctx_commitment(body: McBlockBody) -> bytes:
    leaves = sc_leaves(body)
    if not leaves:
        return EMPTY_SCTX_COMMITMENT
    return mht_build([leaf.digest for leaf in leaves]).root


@serializable
@dataclass(frozen=True)
class NeighborProof:
    """A committed leaf next to an absent id; ``leaf`` None stands for padding."""

    leaf: ScLeaf | None
    proof: MerkleProof


def prove_sc_membership(body: McBlockBody, ledger_id: bytes) -> tuple[ScLeaf, MerkleProof] | None:
    leaves = sc_leaves(body)
    for i, leaf in enumerate(leaves):
        if leaf.ledger_id == ledger_id:
            return leaf, mht_prove(mht_build([x.digest for x in leaves]), i)
    return None


def prove_sc_absence(body: McBlockBody, ledger_id: bytes) -> tuple[NeighborProof, ...]:
    """Adjacent-leaf proof that ``ledger_id`` has no leaf in the commitment."""
    leaves = sc_leaves(body)
    if not leaves:
        return ()
    ids = [leaf.ledger_id for leaf in leaves]
    if ledger_id in ids:
        raise ValueError("sidechain has activity in this block")
    tree = mht_build([leaf.digest for leaf in leaves])
    after = sum(1 for x in ids if x < ledger_id)
    out = []
    if after > 0:
        out.append(NeighborProof(leaves[after - 1], mht_prove(tree, after - 1)))
    if after < len(leaves):
        out.append(NeighborProof(leaves[after], mht_prove(tree, after)))
    elif len(leaves) < len(tree.levels[0]):
        # the predecessor is the last real leaf; show the padding right after it
        siblings = []
        pos = after
        for level in tree.levels[:-1]:
            siblings.append(level[pos ^ 1])
            pos //= 2
        out.append(NeighborProof(None, MerkleProof(after, tuple(siblings))))
    return tuple(out)


def verify_sc_absence(commitment: bytes, ledger_id: bytes, proofs: Any) -> bool:
    if commitment == EMPTY_SCTX_COMMITMENT:
        return proofs == ()
    if not isinstance(proofs, tuple) or not 1 <= len(proofs) <= 2:
        return False
    for p in proofs:
        if not isinstance(p, NeighborProof) or not isinstance(p.proof, MerkleProof):
            return False
        if p.leaf is not None and not isinstance(p.leaf, ScLeaf):
            return False
        digest = NULL_LEAF if p.leaf is None else p.leaf.digest
        if not mht_verify(commitment, digest, p.proof):
            return False
    depth = len(proofs[0].proof.siblings)
    if any(len(p.proof.siblings) != depth for p in proofs):
        return False
    first = proofs[0]
    if len(proofs) == 2:
        pred, succ = proofs
        return (
            pred.leaf is not None
            and pred.leaf.ledger_id < ledger_id
            and succ.proof.leaf_index == pred.proof.leaf_index + 1
            and (succ.leaf is None or ledger_id < succ.leaf.ledger_id)
        )
    if first.leaf is None:
        return False
    if ledger_id < first.leaf.ledger_id:
        return first.proof.leaf_index == 0
    # a lone predecessor must fill the last position of the tree
    return ledger_id > first.leaf.ledger_id and first.proof.leaf_index == (1 << depth) - 1


# ---------------------------------------------------------------------------
# Ledger state


@serializable
class Status(enum.Enum):
    ACTIVE = "active"
    CEASED = "ceased"


@dataclass(frozen=True)
class CertRecord:
    epoch_id: int
    cert_hash: bytes
    height: int
    quality: int
    total: int
    payouts: tuple[OutPoint, ...]


@dataclass(frozen=True)
class SidechainEntry:
    config: SidechainConfig
    balance: int = 0
    status: Status = Status.ACTIVE
    certs: Mapping[int, CertRecord] = field(default_factory=dict)
    last_cert: CertRecord | None = None
    nullifiers: frozenset = frozenset()
    ft_total: int = 0
    cert_total: int = 0
    csw_total: int = 0

    @property
    def ledger_id(self) -> bytes:
        return self.config.ledger_id


@dataclass(frozen=True)
class Coin:
    output: TxOutput
    mature_height: int = 0


@dataclass(frozen=True)
class McState:
    """Ledger state after the block at ``height``; ``hashes[h]`` is the chain's block at h."""

    height: int
    hashes: tuple[bytes, ...]
    sidechains: Mapping[bytes, SidechainEntry]
    utxos: Mapping[OutPoint, Coin]

    @classmethod
    def pre_genesis(cls) -> McState:
        return cls(-1, (), {}, {})

    @property
    def tip(self) -> bytes:
        return self.hashes[-1] if self.hashes else ZERO_DIGEST

    def hash_at(self, height: int) -> bytes:
        if not 0 <= height < len(self.hashes):
            raise IndexError(f"no block at height {height}")
        return self.hashes[height]

    def entry(self, ledger_id: bytes) -> SidechainEntry | None:
        return self.sidechains.get(ledger_id)

    def balance_of(self, address: bytes, at_height: int | None = None) -> int:
        h = self.height + 1 if at_height is None else at_height
        return sum(c.output.amount for c in self.utxos.values()
                   if c.output.address == address and c.mature_height <= h)

    def coins_of(self, address: bytes) -> list[tuple[OutPoint, Coin]]:
        found = [(op, c) for op, c in self.utxos.items() if c.output.address == address]
        found.sort(key=lambda item: (item[1].mature_height, encode(item[0])))
        return found


def epoch_of(entry: SidechainEntry | SidechainConfig, mc_height: int) -> tuple[int, int]:
    config = entry.config if isinstance(entry, SidechainEntry) else entry
    return config.epoch_of(mc_height)


def check_ceased(state: McState, entry: SidechainEntry, mc_height: int) -> Status:
    """Status of ``entry`` once the block at ``mc_height`` is being processed."""
    if entry.status is Status.CEASED:
        return Status.CEASED
    cfg = entry.config
    if mc_height < cfg.start_block:
        return Status.ACTIVE
    epoch, index = cfg.epoch_of(mc_height)
    last_due = epoch - 1 if index >= cfg.submit_len else epoch - 2
    for j in range(last_due + 1):
        if j not in entry.certs:
            return Status.CEASED
    return Status.ACTIVE


@dataclass(frozen=True)
class Verdict:
    reason: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.reason is None

    @property
    def ok(self) -> bool:
        return self.reason is None


ACCEPT = Verdict()


def wcert_public_input(cert: WithdrawalCertificate, config: SidechainConfig,
                       hashes: Sequence[bytes]) -> tuple:
    prev_last = hashes[config.epoch_last_height(cert.epoch_id - 1)]
    last = hashes[config.epoch_last_height(cert.epoch_id)]
    return (cert.quality, bt_list_root(cert.bt_list), prev_last, last, mh_proofdata(cert.proofdata))


def withdrawal_public_input(anchor_hash: bytes, req: _Withdrawal) -> tuple:
    return (anchor_hash, req.nullifier, req.receiver, req.amount, mh_proofdata(req.proofdata))


class _Ledger:
    """Mutable working copy used while one block body is applied."""

    def __init__(self, state: McState, height: int):
        self.base = state
        self.height = height
        self.hashes = state.hashes
        self.sidechains = state.sidechains
        self.utxos = state.utxos
        self._own_sc = False
        self._own_utxo = False
        self.certified: set[bytes] = set()
        for entry in state.sidechains.values():
            if entry.status is Status.ACTIVE and check_ceased(state, entry, height) is Status.CEASED:
                self._put(replace(entry, status=Status.CEASED))

    def _put(self, entry: SidechainEntry) -> None:
        if not self._own_sc:
            self.sidechains = dict(self.sidechains)
            self._own_sc = True
        self.sidechains[entry.ledger_id] = entry

    def _coins(self) -> dict:
        if not self._own_utxo:
            self.utxos = dict(self.utxos)
            self._own_utxo = True
        return self.utxos

    def freeze(self, block_hash: bytes | None = None) -> McState:
        if block_hash is None:
            return McState(self.base.height, self.hashes, self.sidechains, self.utxos)
        return McState(self.height, self.hashes + (block_hash,), self.sidechains, self.utxos)

    def _active(self, ledger_id: bytes) -> SidechainEntry:
        entry = self.sidechains.get(ledger_id)
        if entry is None:
            raise Rejected(Reason.UNKNOWN_SIDECHAIN)
        if entry.status is Status.CEASED:
            raise Rejected(Reason.CEASED)
        if self.height < entry.config.start_block:
            raise Rejected(Reason.NOT_STARTED)
        return entry

    # registrations -------------------------------------------------------

    def check_registration(self, config: SidechainConfig) -> None:
        if not isinstance(config, SidechainConfig):
            raise Rejected(Reason.MALFORMED)
        problems = config.problems()
        if problems:
            raise Rejected(Reason.BAD_CONFIG, "; ".join(problems))
        if config.ledger_id in self.sidechains:
            raise Rejected(Reason.DUPLICATE_LEDGER)
        if config.start_block <= self.height:
            raise Rejected(Reason.BAD_CONFIG, "start_block must be in the future")

    def register(self, config: SidechainConfig) -> None:
        self.check_registration(config)
        self._put(SidechainEntry(config))

    # transactions --------------------------------------------------------

    def check_transaction(self, tx: McTransaction) -> None:
        if not isinstance(tx, McTransaction):
            raise Rejected(Reason.MALFORMED)
        if not tx.inputs and self.height != 0:
            raise Rejected(Reason.MALFORMED, "only the genesis block may mint")
        txid = tx.txid
        seen = set()
        total_in = 0
        for inp in tx.inputs:
            if inp.outpoint in seen:
                raise Rejected(Reason.DOUBLE_SPEND)
            seen.add(inp.outpoint)
            coin = self.utxos.get(inp.outpoint)
            if coin is None:
                raise Rejected(Reason.MISSING_INPUT)
            if coin.mature_height > self.height:
                raise Rejected(Reason.IMMATURE)
            if not verify_signature(coin.output.address, txid, inp.signature):
                raise Rejected(Reason.BAD_SIGNATURE)
            total_in += coin.output.amount
        spent = sum(o.amount for o in tx.outputs) + sum(ft.amount for ft in tx.forward_transfers)
        if tx.inputs and total_in < spent:
            raise Rejected(Reason.VALUE)
        for j in range(len(tx.outputs)):
            if OutPoint(txid, j) in self.utxos:
                raise Rejected(Reason.DUPLICATE_OUTPUT)
        for ft in tx.forward_transfers:
            self._active(ft.ledger_id)

    def transaction(self, tx: McTransaction) -> None:
        self.check_transaction(tx)
        coins = self._coins()
        for inp in tx.inputs:
            del coins[inp.outpoint]
        for j, out in enumerate(tx.outputs):
            coins[OutPoint(tx.txid, j)] = Coin(out)
        for ft in tx.forward_transfers:
            self.forward_transfer(ft)

    def forward_transfer(self, ft: ForwardTransfer) -> None:
        entry = self._active(ft.ledger_id)
        self._put(replace(entry, balance=entry.balance + ft.amount,
                          ft_total=entry.ft_total + ft.amount))

    # certificates --------------------------------------------------------

    def check_wcert(self, cert: WithdrawalCertificate) -> None:
        if not isinstance(cert, WithdrawalCertificate):
            raise Rejected(Reason.MALFORMED)
        entry = self._active(cert.ledger_id)
        cfg = entry.config
        epoch, index = cfg.epoch_of(self.height)
        if cert.epoch_id != epoch - 1:
            raise Rejected(Reason.EPOCH_MISMATCH, f"expected epoch {epoch - 1}")
        if index >= cfg.submit_len:
            raise Rejected(Reason.WINDOW_CLOSED)
        if cert.ledger_id in self.certified:
            raise Rejected(Reason.CERT_PER_BLOCK)
        prev = entry.certs.get(cert.epoch_id)
        if prev is not None:
            if cert.quality < prev.quality:
                raise Rejected(Reason.QUALITY_LOWER)
            if cert.quality == prev.quality:
                raise Rejected(Reason.QUALITY_EQUAL)
        if not matches_schema(cfg.wcert_proofdata, cert.proofdata):
            raise Rejected(Reason.PROOFDATA)
        available = entry.balance + (prev.total if prev else 0)
        if cert.total > available:
            raise Rejected(Reason.SAFEGUARD, f"{cert.total} > {available}")
        public_input = wcert_public_input(cert, cfg, self.hashes)
        if not verify(cfg.wcert_vk, public_input, cert.proof):
            raise Rejected(Reason.BAD_PROOF)

    def wcert(self, cert: WithdrawalCertificate) -> None:
        self.check_wcert(cert)
        entry = self.sidechains[cert.ledger_id]
        coins = self._coins()
        balance = entry.balance
        cert_total = entry.cert_total
        prev = entry.certs.get(cert.epoch_id)
        if prev is not None:
            for op in prev.payouts:
                del coins[op]
            balance += prev.total
            cert_total -= prev.total
        mature = entry.config.window_close_height(cert.epoch_id)
        payouts = []
        for j, bt in enumerate(cert.bt_list):
            op = OutPoint(cert.hash, j)
            coins[op] = Coin(TxOutput(bt.receiver, bt.amount), mature)
            payouts.append(op)
        record = CertRecord(cert.epoch_id, cert.hash, self.height, cert.quality,
                            cert.total, tuple(payouts))
        certs = dict(entry.certs)
        certs[cert.epoch_id] = record
        self._put(replace(entry, balance=balance - cert.total, cert_total=cert_total + cert.total,
                          certs=certs, last_cert=record))
        self.certified.add(cert.ledger_id)

    # mainchain managed withdrawals ----------------------------------------

    def _anchor(self, entry: SidechainEntry) -> bytes:
        if entry.last_cert is None:
            raise Rejected(Reason.NO_CERT)
        return self.hashes[entry.last_cert.height]

    def check_btr(self, btr: BtrRequest) -> None:
        if not isinstance(btr, BtrRequest):
            raise Rejected(Reason.MALFORMED)
        entry = self._active(btr.ledger_id)
        cfg = entry.config
        if cfg.btr_vk is None:
            raise Rejected(Reason.DISABLED)
        if btr.nullifier in entry.nullifiers:
            raise Rejected(Reason.NULLIFIER_USED)
        anchor = self._anchor(entry)
        if not matches_schema(cfg.btr_proofdata, btr.proofdata):
            raise Rejected(Reason.PROOFDATA)
        if not verify(cfg.btr_vk, withdrawal_public_input(anchor, btr), btr.proof):
            raise Rejected(Reason.BAD_PROOF)

    def btr(self, btr: BtrRequest) -> None:
        self.check_btr(btr)
        entry = self.sidechains[btr.ledger_id]
        self._put(replace(entry, nullifiers=entry.nullifiers | {btr.nullifier}))

    def check_csw(self, csw: CswRequest) -> None:
        if not isinstance(csw, CswRequest):
            raise Rejected(Reason.MALFORMED)
        entry = self.sidechains.get(csw.ledger_id)
        if entry is None:
            raise Rejected(Reason.UNKNOWN_SIDECHAIN)
        if entry.status is not Status.CEASED:
            raise Rejected(Reason.STILL_ACTIVE)
        cfg = entry.config
        if cfg.csw_vk is None:
            raise Rejected(Reason.DISABLED)
        if csw.nullifier in entry.nullifiers:
            raise Rejected(Reason.NULLIFIER_USED)
        anchor = self._anchor(entry)
        if csw.amount > entry.balance:
            raise Rejected(Reason.SAFEGUARD, f"{csw.amount} > {entry.balance}")
        if not matches_schema(cfg.csw_proofdata, csw.proofdata):
            raise Rejected(Reason.PROOFDATA)
        if not verify(cfg.csw_vk, withdrawal_public_input(anchor, csw), csw.proof):
            raise Rejected(Reason.BAD_PROOF)

    def csw(self, csw: CswRequest) -> None:
        self.check_csw(csw)
        entry = self.sidechains[csw.ledger_id]
        self._coins()[OutPoint(csw.hash, 0)] = Coin(TxOutput(csw.receiver, csw.amount))
        self._put(replace(entry, balance=entry.balance - csw.amount,
                          csw_total=entry.csw_total + csw.amount,
                          nullifiers=entry.nullifiers | {csw.nullifier}))

    def apply_item(self, item: Any) -> None:
        if isinstance(item, SidechainConfig):
            self.register(item)
        elif isinstance(item, McTransaction):
            self.transaction(item)
        elif isinstance(item, WithdrawalCertificate):
            self.wcert(item)
        elif isinstance(item, BtrRequest):
            self.btr(item)
        elif isinstance(item, CswRequest):
            self.csw(item)
        else:
            raise Rejected(Reason.MALFORMED, f"unsupported item {type(item).__name__}")


# Body sections in application order.
_SECTIONS = (
    ("registrations", SidechainConfig),
    ("transactions", McTransaction),
    ("btrs", BtrRequest),
    ("csws", CswRequest),
    ("certificates", WithdrawalCertificate),
)


def apply_body(state: McState, body: McBlockBody, height: int) -> _Ledger:
    """Apply every item of ``body`` strictly; raises Rejected on the first bad item."""
    ledger = _Ledger(state, height)
    for name, _ in _SECTIONS:
        for item in getattr(body, name):
            ledger.apply_item(item)
    return ledger


def _verdict(fn, *args) -> Verdict:
    try:
        fn(*args)
    except Rejected as exc:
        return Verdict(exc.reason, exc.detail)
    return ACCEPT


def _next(state: McState, height: int | None) -> _Ledger:
    return _Ledger(state, state.height + 1 if height is None else height)


# The state-level helpers below treat the operation as part of the block at
# ``height`` (default: the block after ``state``).

def register_sidechain(state: McState, config: SidechainConfig, height: int | None = None) -> McState:
    ledger = _next(state, height)
    ledger.register(config)
    return ledger.freeze()


def apply_forward_transfer(state: McState, ft: ForwardTransfer, height: int | None = None) -> McState:
    ledger = _next(state, height)
    ledger.forward_transfer(ft)
    return ledger.freeze()


def verify_wcert(state: McState, cert: WithdrawalCertificate, height: int | None = None) -> Verdict:
    return _verdict(_next(state, height).check_wcert, cert)


def apply_wcert(state: McState, cert: WithdrawalCertificate, height: int | None = None) -> McState:
    ledger = _next(state, height)
    ledger.wcert(cert)
    return ledger.freeze()


def verify_btr(state: McState, btr: BtrRequest, height: int | None = None) -> Verdict:
    return _verdict(_next(state, height).check_btr, btr)


def apply_btr(state: McState, btr: BtrRequest, height: int | None = None) -> McState:
    ledger = _next(state, height)
    ledger.btr(btr)
    return ledger.freeze()


def verify_csw(state: McState, csw: CswRequest, height: int | None = None) -> Verdict:
    return _verdict(_next(state, height).check_csw, csw)


def apply_csw(state: McState, csw: CswRequest, height: int | None = None) -> McState:
    ledger = _next(state, height)
    ledger.csw(csw)
    return ledger.freeze()


def safeguard_violations(state: McState) -> list[str]:
    out = []
    for lid, e in sorted(state.sidechains.items()):
        if e.balance < 0:
            out.append(f"{lid.hex()[:12]}: negative balance {e.balance}")
        if e.balance != e.ft_total - e.cert_total - e.csw_total:
            out.append(f"{lid.hex()[:12]}: balance {e.balance} does not match flows")
    return out


# ---------------------------------------------------------------------------
# Chain with fork choice


def _section_of(item: Any) -> str:
    for name, cls in _SECTIONS:
        if isinstance(item, cls):
            return name
    raise Rejected(Reason.MALFORMED, f"unsupported item {type(item).__name__}")


def make_block(parent: McState, body: McBlockBody, nonce: int = 0) -> McBlock:
    header = McBlockHeader(parent.tip, parent.height + 1, build_sctx_commitment(body), body.root, nonce)
    return McBlock(header, body)


class McChain:
    """Block tree with per-block states; the tip is the longest chain, first seen on ties."""

    def __init__(self, genesis: McBlock):
        self.blocks: dict[bytes, McBlock] = {}
        self.states: dict[bytes, McState] = {}
        self.arrival: dict[bytes, int] = {}
        self.tip = b""
        if genesis.header.prev_block != ZERO_DIGEST or genesis.height != 0:
            raise InvalidBlock(Reason.BAD_HEIGHT, "genesis must be at height 0 with a zero parent")
        self._accept(genesis, McState.pre_genesis())

    @classmethod
    def create(cls, allocations: Iterable[TxOutput], nonce: int = 0) -> McChain:
        outputs = tuple(allocations)
        body = McBlockBody(transactions=(McTransaction(outputs=outputs),) if outputs else ())
        return cls(make_block(McState.pre_genesis(), body, nonce))

    @property
    def genesis(self) -> bytes:
        return self.tip_state.hashes[0]

    @property
    def tip_state(self) -> McState:
        return self.states[self.tip]

    @property
    def height(self) -> int:
        return self.tip_state.height

    def state(self, block_hash: bytes) -> McState:
        return self.states[block_hash]

    def block(self, block_hash: bytes) -> McBlock:
        return self.blocks[block_hash]

    def active_chain(self) -> tuple[bytes, ...]:
        return self.tip_state.hashes

    def on_active_chain(self, block_hash: bytes) -> bool:
        block = self.blocks.get(block_hash)
        if block is None:
            return False
        hashes = self.tip_state.hashes
        return block.height < len(hashes) and hashes[block.height] == block_hash

    def _accept(self, block: McBlock, parent: McState) -> bool:
        try:
            ledger = apply_body(parent, block.body, block.height)
        except Rejected as exc:
            raise InvalidBlock(exc.reason, exc.detail) from None
        h = block.hash
        self.blocks[h] = block
        self.states[h] = ledger.freeze(h)
        self.arrival[h] = len(self.arrival)
        if not self.tip or block.height > self.states[self.tip].height:
            self.tip = h
            return True
        return False

    def check_header(self, block: McBlock) -> McState:
        header = block.header
        if block.hash in self.blocks:
            raise InvalidBlock(Reason.DUPLICATE_BLOCK)
        parent = self.states.get(header.prev_block)
        if parent is None:
            raise InvalidBlock(Reason.UNKNOWN_PARENT)
        if header.height != parent.height + 1:
            raise InvalidBlock(Reason.BAD_HEIGHT)
        if header.body_root != block.body.root:
            raise InvalidBlock(Reason.BAD_BODY_ROOT)
        try:
            commitment = build_sctx_commitment(block.body)
        except Rejected as exc:
            raise InvalidBlock(exc.reason, exc.detail) from None
        if header.sc_txs_commitment != commitment:
            raise InvalidBlock(Reason.BAD_COMMITMENT)
        return parent

    def extend_chain(self, block: McBlock) -> bool:
        """Validate and store ``block``; returns True when it became the new tip."""
        return self._accept(block, self.check_header(block))

    def fork_choice(self) -> bytes:
        return self.tip

    def build_block(self, parent_hash: bytes, items: Sequence[Any], nonce: int = 0
                    ) -> tuple[McBlock, list[tuple[Any, Verdict]]]:
        """Assemble a valid block from candidate items, dropping the ones that fail."""
        parent = self.states[parent_hash]
        ledger = _Ledger(parent, parent.height + 1)
        grouped: dict[str, list] = {name: [] for name, _ in _SECTIONS}
        rejected: list[tuple[Any, Verdict]] = []
        for item in items:
            try:
                grouped[_section_of(item)].append(item)
            except Rejected as exc:
                rejected.append((item, Verdict(exc.reason, exc.detail)))
        accepted: dict[str, list] = {name: [] for name, _ in _SECTIONS}
        for name, _ in _SECTIONS:
            for item in grouped[name]:
                try:
                    ledger.apply_item(item)
                except Rejected as exc:
                    rejected.append((item, Verdict(exc.reason, exc.detail)))
                else:
                    accepted[name].append(item)
        body = McBlockBody(**{k: tuple(v) for k, v in accepted.items()})
        return make_block(parent, body, nonce), rejected

    def mine(self, items: Sequence[Any] = (), parent_hash: bytes | None = None, nonce: int = 0
             ) -> tuple[McBlock, list[tuple[Any, Verdict]]]:
        block, rejected = self.build_block(self.tip if parent_hash is None else parent_hash, items, nonce)
        self.extend_chain(block)
        return block, rejected
