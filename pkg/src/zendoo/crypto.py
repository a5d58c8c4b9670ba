"""Hashing, Merkle hash trees, the fixed-depth Merkle state tree and MST deltas.

All digests are SHA-256 with explicit domain prefixes so that a leaf, an
internal node, a UTXO, a slot position and the other hashed objects can never
collide with each other across contexts.
"""

from __future__ import annotations

import functools
import hashlib
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .codec import serializable
from .errors import CollisionError, DepthMismatchError, MerkleError, NotFoundError

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)
NULL_ADDRESS = bytes(DIGEST_SIZE)
MAX_MST_DEPTH = 24
MAX_PROOF_LENGTH = 64

_LEAF_PREFIX = b"\x00zendoo/leaf"
_NODE_PREFIX = b"\x01zendoo/node"
_UTXO_PREFIX = b"\x02zendoo/utxo"
_POSITION_PREFIX = b"\x03zendoo/mst-position"


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@functools.cache
def _tag_prefix(tag: str) -> bytes:
    raw = tag.encode()
    return b"\xfezendoo/tag" + len(raw).to_bytes(2, "big") + raw


def tagged_hash(tag: str, *parts: bytes) -> bytes:
    """Hash ``parts`` under a domain tag; every part is length-prefixed."""
    chunks = [_tag_prefix(tag)]
    for part in parts:
        chunks.append(len(part).to_bytes(4, "big"))
        chunks.append(part)
    return hashlib.sha256(b"".join(chunks)).digest()


def hash_leaf(leaf: bytes) -> bytes:
    return hashlib.sha256(_LEAF_PREFIX + leaf).digest()


def hash_node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(_NODE_PREFIX + left + right).digest()


def is_digest(value: object) -> bool:
    return isinstance(value, bytes) and len(value) == DIGEST_SIZE


NULL_LEAF = tagged_hash("null-leaf")
EMPTY_ROOT = tagged_hash("empty-tree")


def _empty_levels(n: int) -> tuple[bytes, ...]:
    levels = [hash_leaf(NULL_LEAF)]
    for _ in range(n):
        levels.append(hash_node(levels[-1], levels[-1]))
    return tuple(levels)


# EMPTY_SUBTREE[k] is the root of a subtree of height k whose leaves are all empty.
EMPTY_SUBTREE = _empty_levels(MAX_PROOF_LENGTH)


# ---------------------------------------------------------------------------
# Variable-size Merkle hash trees


@serializable
@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[bytes, ...]


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[bytes, ...]
    levels: tuple[tuple[bytes, ...], ...]

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def mht_build(leaves: Sequence[bytes]) -> MerkleTree:
    """Build a tree over leaf digests, padding with NULL_LEAF to a power of two."""
    leaves = tuple(leaves)
    if not leaves:
        raise MerkleError("cannot build a Merkle tree without leaves")
    for leaf in leaves:
        if not is_digest(leaf):
            raise MerkleError("leaves must be 32-byte digests")
    width = 1
    while width < len(leaves):
        width *= 2
    level = tuple(hash_leaf(x) for x in leaves + (NULL_LEAF,) * (width - len(leaves)))
    levels = [level]
    while len(level) > 1:
        level = tuple(hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2))
        levels.append(level)
    return MerkleTree(leaves, tuple(levels))


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Root of ``leaves``; the empty sequence maps to EMPTY_ROOT."""
    if not leaves:
        return EMPTY_ROOT
    return mht_build(leaves).root


def mht_prove(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexError(f"leaf index {index} out of range")
    siblings = []
    pos = index
    for level in tree.levels[:-1]:
        siblings.append(level[pos ^ 1])
        pos //= 2
    return MerkleProof(index, tuple(siblings))


def root_from_path(leaf: bytes, index: int, siblings: Sequence[bytes]) -> bytes:
    node = hash_leaf(leaf)
    for sibling in siblings:
        node = hash_node(sibling, node) if index & 1 else hash_node(node, sibling)
        index >>= 1
    return node


def _well_formed(leaf: object, proof: object) -> bool:
    if not is_digest(leaf) or not isinstance(proof, MerkleProof):
        return False
    siblings = proof.siblings
    if not isinstance(siblings, tuple) or len(siblings) > MAX_PROOF_LENGTH:
        return False
    index = proof.leaf_index
    if isinstance(index, bool) or not isinstance(index, int):
        return False
    if not 0 <= index < (1 << len(siblings)):
        return False
    return all(is_digest(s) for s in siblings)


def mht_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    if not is_digest(root) or not _well_formed(leaf, proof):
        return False
    return root_from_path(leaf, proof.leaf_index, proof.siblings) == root


# ---------------------------------------------------------------------------
# UTXOs and the Merkle state tree


@serializable
@dataclass(frozen=True)
class Utxo:
    addr: bytes
    amount: int
    nonce: bytes

    def __post_init__(self):
        if not is_digest(self.addr) or not is_digest(self.nonce):
            raise ValueError("utxo addr and nonce must be 32 bytes")
        if isinstance(self.amount, bool) or not isinstance(self.amount, int):
            raise ValueError("utxo amount must be an integer")
        if not 1 <= self.amount < 1 << 64:
            raise ValueError("utxo amount must be in [1, 2^64)")

    def to_bytes(self) -> bytes:
        return self.addr + self.amount.to_bytes(8, "big") + self.nonce

    def digest(self) -> bytes:
        return hashlib.sha256(_UTXO_PREFIX + self.to_bytes()).digest()

    @classmethod
    def from_bytes(cls, raw: bytes) -> Utxo:
        if not isinstance(raw, bytes) or len(raw) != 72:
            raise ValueError("utxo encoding must be 72 bytes")
        return cls(raw[:32], int.from_bytes(raw[32:40], "big"), raw[40:])


def mst_position(utxo: Utxo, depth: int) -> int:
    """Slot of ``utxo``: the low ``depth`` bits of a tagged hash of its fields."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    h = hashlib.sha256(_POSITION_PREFIX + utxo.to_bytes()).digest()
    return int.from_bytes(h, "big") & ((1 << depth) - 1)


@serializable
@dataclass(frozen=True)
class MerkleStateTree:
    """Fixed-depth tree of 2^depth UTXO slots. Operations return new trees."""

    depth: int
    slots: Mapping[int, Utxo] = field(default_factory=dict)
    _nodes: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.depth, bool) or not isinstance(self.depth, int):
            raise ValueError("depth must be an integer")
        if not 1 <= self.depth <= MAX_MST_DEPTH:
            raise ValueError(f"depth must be in [1, {MAX_MST_DEPTH}]")
        slots = dict(self.slots)
        for index, utxo in slots.items():
            if not isinstance(utxo, Utxo):
                raise ValueError("slots must hold Utxo values")
            if mst_position(utxo, self.depth) != index:
                raise ValueError(f"utxo stored at slot {index} belongs elsewhere")
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "_nodes", self._build(slots))

    def _build(self, slots: Mapping[int, Utxo]) -> dict:
        nodes: dict = {}
        layer = {i: hash_leaf(u.digest()) for i, u in slots.items()}
        for level in range(self.depth + 1):
            for index, value in layer.items():
                nodes[level, index] = value
            if level == self.depth:
                break
            parents = {}
            for index in layer:
                p = index >> 1
                if p in parents:
                    continue
                left = layer.get(2 * p, EMPTY_SUBTREE[level])
                right = layer.get(2 * p + 1, EMPTY_SUBTREE[level])
                parents[p] = hash_node(left, right)
            layer = parents
        return nodes

    @classmethod
    def empty(cls, depth: int) -> MerkleStateTree:
        return cls(depth)

    @property
    def root(self) -> bytes:
        return self._nodes.get((self.depth, 0), EMPTY_SUBTREE[self.depth])

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    def __len__(self) -> int:
        return len(self.slots)

    def __contains__(self, utxo: object) -> bool:
        if not isinstance(utxo, Utxo):
            return False
        return self.slots.get(mst_position(utxo, self.depth)) == utxo

    def get(self, index: int) -> Utxo | None:
        return self.slots.get(index)

    def utxos(self) -> list[Utxo]:
        return [self.slots[i] for i in sorted(self.slots)]

    def total(self) -> int:
        return sum(u.amount for u in self.slots.values())

    def _node(self, level: int, index: int) -> bytes:
        return self._nodes.get((level, index), EMPTY_SUBTREE[level])

    def _with_slot(self, index: int, utxo: Utxo | None) -> MerkleStateTree:
        slots = dict(self.slots)
        nodes = dict(self._nodes)
        if utxo is None:
            del slots[index]
            nodes.pop((0, index), None)
            value = None
        else:
            slots[index] = utxo
            value = hash_leaf(utxo.digest())
            nodes[0, index] = value
        pos = index
        for level in range(self.depth):
            sibling = nodes.get((level, pos ^ 1))
            if value is None and sibling is None:
                nodes.pop((level + 1, pos >> 1), None)
            else:
                mine = EMPTY_SUBTREE[level] if value is None else value
                other = EMPTY_SUBTREE[level] if sibling is None else sibling
                value = hash_node(other, mine) if pos & 1 else hash_node(mine, other)
                nodes[level + 1, pos >> 1] = value
            pos >>= 1
        new = object.__new__(MerkleStateTree)
        object.__setattr__(new, "depth", self.depth)
        object.__setattr__(new, "slots", slots)
        object.__setattr__(new, "_nodes", nodes)
        return new

    def insert(self, utxo: Utxo) -> MerkleStateTree:
        index = mst_position(utxo, self.depth)
        if index in self.slots:
            raise CollisionError(f"slot {index} is already occupied")
        return self._with_slot(index, utxo)

    def remove(self, utxo: Utxo) -> MerkleStateTree:
        index = mst_position(utxo, self.depth)
        if self.slots.get(index) != utxo:
            raise NotFoundError(f"utxo not present at slot {index}")
        return self._with_slot(index, None)

    def prove(self, index: int) -> MerkleProof:
        if not 0 <= index < self.capacity:
            raise IndexError(f"slot {index} out of range")
        siblings = []
        pos = index
        for level in range(self.depth):
            siblings.append(self._node(level, pos ^ 1))
            pos >>= 1
        return MerkleProof(index, tuple(siblings))


def mst_insert(mst: MerkleStateTree, utxo: Utxo) -> MerkleStateTree:
    return mst.insert(utxo)


def mst_remove(mst: MerkleStateTree, utxo: Utxo) -> MerkleStateTree:
    return mst.remove(utxo)


class PartialStateTree:
    """The part of an MST revealed by Merkle paths for a few slots.

    Lookups, inserts and removals work on the witnessed slots only, which is
    enough to recompute the root after a transaction touching those slots.
    """

    def __init__(self, depth: int, nodes: dict, known: dict):
        self.depth = depth
        self._nodes = nodes
        self._known = known

    @classmethod
    def from_paths(cls, depth: int, root: bytes,
                   paths: Sequence[tuple[int, Utxo | None, MerkleProof]]) -> PartialStateTree:
        nodes: dict = {}
        known: dict = {}
        for slot, utxo, proof in paths:
            if not isinstance(proof, MerkleProof) or proof.leaf_index != slot:
                raise MerkleError("path does not match its slot")
            if not isinstance(proof.siblings, tuple) or len(proof.siblings) != depth:
                raise MerkleError("path has the wrong depth")
            if utxo is None:
                leaf = NULL_LEAF
            elif isinstance(utxo, Utxo) and mst_position(utxo, depth) == slot:
                leaf = utxo.digest()
            else:
                raise MerkleError("utxo does not belong to the slot")
            if not mht_verify(root, leaf, proof):
                raise MerkleError(f"path for slot {slot} does not reach the root")
            known[slot] = utxo
            value = hash_leaf(leaf)
            pos = slot
            nodes[0, pos] = value
            for level, sibling in enumerate(proof.siblings):
                nodes[level, pos ^ 1] = sibling
                value = hash_node(sibling, value) if pos & 1 else hash_node(value, sibling)
                pos >>= 1
                nodes[level + 1, pos] = value
        if not paths:
            nodes[depth, 0] = root
        return cls(depth, nodes, known)

    @property
    def root(self) -> bytes:
        return self._nodes[self.depth, 0]

    def get(self, index: int) -> Utxo | None:
        if index not in self._known:
            raise MerkleError(f"slot {index} is not witnessed")
        return self._known[index]

    def _with_slot(self, index: int, utxo: Utxo | None) -> PartialStateTree:
        nodes = dict(self._nodes)
        known = dict(self._known)
        known[index] = utxo
        value = hash_leaf(NULL_LEAF if utxo is None else utxo.digest())
        nodes[0, index] = value
        pos = index
        for level in range(self.depth):
            sibling = nodes.get((level, pos ^ 1))
            if sibling is None:
                raise MerkleError("missing sibling in witness")
            value = hash_node(sibling, value) if pos & 1 else hash_node(value, sibling)
            pos >>= 1
            nodes[level + 1, pos] = value
        return PartialStateTree(self.depth, nodes, known)

    def insert(self, utxo: Utxo) -> PartialStateTree:
        index = mst_position(utxo, self.depth)
        if self.get(index) is not None:
            raise CollisionError(f"slot {index} is already occupied")
        return self._with_slot(index, utxo)

    def remove(self, utxo: Utxo) -> PartialStateTree:
        index = mst_position(utxo, self.depth)
        if self.get(index) != utxo:
            raise NotFoundError(f"utxo not present at slot {index}")
        return self._with_slot(index, None)


class RecordingTree:
    """Wraps a full MST and records every slot an update reads or writes."""

    def __init__(self, tree: MerkleStateTree, log: set | None = None):
        self.tree = tree
        self.depth = tree.depth
        self.log = set() if log is None else log

    @property
    def root(self) -> bytes:
        return self.tree.root

    def get(self, index: int) -> Utxo | None:
        self.log.add(index)
        return self.tree.get(index)

    def insert(self, utxo: Utxo) -> RecordingTree:
        self.log.add(mst_position(utxo, self.depth))
        return RecordingTree(self.tree.insert(utxo), self.log)

    def remove(self, utxo: Utxo) -> RecordingTree:
        self.log.add(mst_position(utxo, self.depth))
        return RecordingTree(self.tree.remove(utxo), self.log)


def mst_prove_inclusion(mst: MerkleStateTree, utxo: Utxo) -> MerkleProof:
    if utxo not in mst:
        raise NotFoundError("utxo is not in the tree")
    return mst.prove(mst_position(utxo, mst.depth))


def mst_verify_inclusion(root: bytes, utxo: Utxo, proof: MerkleProof) -> bool:
    if not isinstance(utxo, Utxo) or not isinstance(proof, MerkleProof):
        return False
    if not isinstance(proof.siblings, tuple) or not 1 <= len(proof.siblings) <= MAX_MST_DEPTH:
        return False
    if proof.leaf_index != mst_position(utxo, len(proof.siblings)):
        return False
    return mht_verify(root, utxo.digest(), proof)


# ---------------------------------------------------------------------------
# MST deltas


@serializable
@dataclass(frozen=True)
class MstDelta:
    """Bit vector over MST slots; slot 0 is the most significant bit."""

    size: int
    mask: int = 0

    def __post_init__(self):
        for value in (self.size, self.mask):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError("size and mask must be integers")
        if self.size < 2 or self.size & (self.size - 1):
            raise ValueError("delta size must be a power of two >= 2")
        if self.size > 1 << MAX_MST_DEPTH:
            raise ValueError("delta too large")
        if not 0 <= self.mask < 1 << self.size:
            raise ValueError("mask does not fit the delta size")

    @classmethod
    def zeros(cls, depth: int) -> MstDelta:
        return cls(1 << depth)

    @classmethod
    def from_string(cls, bits: str) -> MstDelta:
        return cls(len(bits), int(bits, 2) if bits else 0)

    @classmethod
    def from_slots(cls, depth: int, slots: Iterable[int]) -> MstDelta:
        return cls.zeros(depth).with_slots(slots)

    @property
    def depth(self) -> int:
        return self.size.bit_length() - 1

    def is_set(self, slot: int) -> bool:
        if not 0 <= slot < self.size:
            raise IndexError(f"slot {slot} out of range")
        return bool(self.mask >> (self.size - 1 - slot) & 1)

    def with_slots(self, slots: Iterable[int]) -> MstDelta:
        mask = self.mask
        for slot in slots:
            if not 0 <= slot < self.size:
                raise IndexError(f"slot {slot} out of range")
            mask |= 1 << (self.size - 1 - slot)
        return MstDelta(self.size, mask)

    def slots(self) -> list[int]:
        found = []
        mask = self.mask
        while mask:
            low = mask & -mask
            found.append(self.size - low.bit_length())
            mask ^= low
        return found[::-1]

    def to_bytes(self) -> bytes:
        nbytes = (self.size + 7) // 8
        return (self.mask << (nbytes * 8 - self.size)).to_bytes(nbytes, "big")

    def to_string(self) -> str:
        return format(self.mask, f"0{self.size}b")

    def digest(self) -> bytes:
        return tagged_hash("mst-delta", self.size.to_bytes(8, "big"), self.to_bytes())

    def __or__(self, other: MstDelta) -> MstDelta:
        return delta_or(self, other)


def delta_or(a: MstDelta, b: MstDelta) -> MstDelta:
    if a.size != b.size:
        raise DepthMismatchError("delta lengths differ")
    return MstDelta(a.size, a.mask | b.mask)


def delta_compute(before: MerkleStateTree, after: MerkleStateTree) -> MstDelta:
    """Slots whose content differs between two trees (no transient tracking)."""
    if before.depth != after.depth:
        raise DepthMismatchError("trees have different depths")
    changed = [
        i for i in set(before.slots) | set(after.slots)
        if before.slots.get(i) != after.slots.get(i)
    ]
    return MstDelta.from_slots(before.depth, changed)


def prove_unspent_since(
    utxo: Utxo,
    anchor_state_root: bytes,
    anchor_inclusion_proof: MerkleProof,
    deltas: Sequence[MstDelta],
) -> bool:
    """Inclusion in an older committed tree plus an untouched slot in every later delta."""
    if not mst_verify_inclusion(anchor_state_root, utxo, anchor_inclusion_proof):
        return False
    depth = len(anchor_inclusion_proof.siblings)
    slot = mst_position(utxo, depth)
    for delta in deltas:
        if not isinstance(delta, MstDelta) or delta.size != 1 << depth:
            return False
        if delta.is_set(slot):
            return False
    return True


# ---------------------------------------------------------------------------
# Keyed-hash signatures

_KEYRING: dict[bytes, bytes] = {}


@dataclass(frozen=True)
class PrivateKey:
    """Deterministic stand-in for a signing key.

    A signature is a tagged hash of the secret and the message; verifiers look
    the secret up by address in a process-wide keyring filled on key creation.
    """

    secret: bytes = field(repr=False)

    def __post_init__(self):
        if not is_digest(self.secret):
            raise ValueError("secret must be 32 bytes")
        _KEYRING[self.address] = self.secret

    @classmethod
    def derive(cls, *labels: str | bytes) -> PrivateKey:
        parts = [x.encode() if isinstance(x, str) else x for x in labels]
        return cls(tagged_hash("private-key", *parts))

    @property
    def address(self) -> bytes:
        return tagged_hash("address", self.secret)

    def sign(self, message: bytes) -> bytes:
        return tagged_hash("signature", self.secret, message)


def verify_signature(address: bytes, message: bytes, signature: bytes) -> bool:
    secret = _KEYRING.get(address) if isinstance(address, bytes) else None
    if secret is None or not isinstance(signature, bytes) or not isinstance(message, bytes):
        return False
    return tagged_hash("signature", secret, message) == signature
