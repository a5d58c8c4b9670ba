"""SNARK-shaped Setup/Prove/Verify over named statement predicates.

The reference backend is transparent: a proof carries its witness and
verification re-evaluates the predicate. Keys bind the statement, a setup
seed and the circuit parameters, so a proof made for one sidechain's circuit
never verifies under another's key.
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any

from .codec import encode, serializable
from .crypto import (
    EMPTY_ROOT,
    MstDelta,
    hash_bytes,
    is_digest,
    merkle_root,
    tagged_hash,
)
from .errors import RegistrationError, UnsatisfiedError


@serializable
class Statement(enum.Enum):
    WCERT = "wcert"
    BTR = "btr"
    CSW = "csw"
    BASE_PAYMENT = "base-payment"
    BASE_FT = "base-ft"
    BASE_BT = "base-bt"
    BASE_BTR = "base-btr"
    BASE_BLOCK = "base-block"
    MERGE = "merge"


@serializable
@dataclass(frozen=True)
class VerifyingKey:
    statement: Statement
    seed: bytes
    params: Any = None

    @cached_property
    def digest(self) -> bytes:
        return _key_digest("vk", self.statement, self.seed, self.params)


@serializable
@dataclass(frozen=True)
class ProvingKey:
    statement: Statement
    seed: bytes
    params: Any = None

    @cached_property
    def digest(self) -> bytes:
        return _key_digest("pk", self.statement, self.seed, self.params)

    @property
    def vk(self) -> VerifyingKey:
        return VerifyingKey(self.statement, self.seed, self.params)


def _key_digest(tag: str, statement: Statement, seed: bytes, params: Any) -> bytes:
    return tagged_hash(tag, statement.value.encode(), seed, encode(params))


@dataclass(frozen=True)
class KeyPair:
    pk: ProvingKey
    vk: VerifyingKey
    statement: Statement


@serializable
@dataclass(frozen=True)
class StatementProof:
    vk_ref: bytes
    public_binding: bytes
    witness: Any


def public_binding(vk: VerifyingKey, public_input: Any) -> bytes:
    return tagged_hash("binding", vk.digest, encode(public_input))


# A predicate receives the verifying key (for its circuit parameters), the
# public input and the witness. It returns a bool or raises UnsatisfiedError.
Predicate = Callable[[VerifyingKey, Any, Any], bool]


class ProofSystem:
    """Predicate registry plus a bounded memo of verification results."""

    def __init__(self, cache_size: int = 8192):
        self._predicates: dict[Statement, Predicate] = {}
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def register_predicate(self, statement: Statement, evaluator: Predicate) -> None:
        if not isinstance(statement, Statement):
            raise RegistrationError(f"unknown statement {statement!r}")
        if statement in self._predicates:
            raise RegistrationError(f"{statement.name} already has a predicate")
        self._predicates[statement] = evaluator

    def is_registered(self, statement: Statement) -> bool:
        return statement in self._predicates

    def _predicate(self, statement: Statement) -> Predicate:
        try:
            return self._predicates[statement]
        except (KeyError, TypeError):
            raise RegistrationError(f"no predicate registered for {statement!r}") from None

    def prove(self, pk: ProvingKey, public_input: Any, witness: Any) -> StatementProof:
        evaluator = self._predicate(pk.statement)
        vk = pk.vk
        try:
            ok = evaluator(vk, public_input, witness)
        except UnsatisfiedError:
            raise
        except Exception as exc:
            raise UnsatisfiedError(f"{pk.statement.name}: {exc}") from exc
        if ok is not True:
            raise UnsatisfiedError(f"{pk.statement.name}: predicate not satisfied")
        return StatementProof(vk.digest, public_binding(vk, public_input), witness)

    def verify(self, vk: VerifyingKey, public_input: Any, proof: Any) -> bool:
        if not isinstance(vk, VerifyingKey) or not isinstance(proof, StatementProof):
            return False
        try:
            if proof.vk_ref != vk.digest:
                return False
            input_bytes = encode(public_input)
        except Exception:  # noqa: BLE001 - verification is total
            return False
        if proof.public_binding != tagged_hash("binding", vk.digest, input_bytes):
            return False
        key = (vk.digest, hash_bytes(input_bytes), id(proof))
        hit = self._cache.get(key)
        if hit is not None and hit[0] is proof:
            self._cache.move_to_end(key)
            return hit[1]
        try:
            ok = self._predicate(vk.statement)(vk, public_input, proof.witness) is True
        except Exception:  # noqa: BLE001 - a crashing predicate is a rejection
            ok = False
        self._cache[key] = (proof, ok)
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return ok

    def clear_cache(self) -> None:
        self._cache.clear()


DEFAULT = ProofSystem()


def setup(statement: Statement, seed: bytes, params: Any = None, security: int = 128) -> KeyPair:
    """Deterministic key generation. ``security`` is accepted for interface parity only."""
    if not isinstance(statement, Statement):
        raise RegistrationError(f"unknown statement {statement!r}")
    if not isinstance(seed, bytes):
        raise TypeError("seed must be bytes")
    pk = ProvingKey(statement, seed, params)
    return KeyPair(pk, pk.vk, statement)


def register_predicate(statement: Statement, evaluator: Predicate) -> None:
    DEFAULT.register_predicate(statement, evaluator)


def prove(pk: ProvingKey, public_input: Any, witness: Any) -> StatementProof:
    return DEFAULT.prove(pk, public_input, witness)


def verify(vk: VerifyingKey, public_input: Any, proof: Any) -> bool:
    return DEFAULT.verify(vk, public_input, proof)


def require(condition: bool, message: str) -> None:
    """Predicate helper: fail with a reason instead of returning False."""
    if not condition:
        raise UnsatisfiedError(message)


# ---------------------------------------------------------------------------
# proofdata: ordered typed fields committed to by a Merkle root

FIELD_KINDS = ("digest", "integer", "bitvector", "bytes")


def make_schema(*fields: tuple[str, str]) -> tuple[tuple[str, str], ...]:
    schema = tuple((str(name), str(kind)) for name, kind in fields)
    for _, kind in schema:
        if kind not in FIELD_KINDS:
            raise ValueError(f"unknown proofdata field kind {kind!r}")
    return schema


def _field_ok(kind: str, value: Any) -> bool:
    if kind == "digest":
        return is_digest(value)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "bitvector":
        return isinstance(value, MstDelta)
    if kind == "bytes":
        return isinstance(value, bytes)
    return False


def matches_schema(schema: Sequence[tuple[str, str]], values: Any) -> bool:
    if not isinstance(values, tuple) or len(values) != len(schema):
        return False
    return all(_field_ok(kind, v) for (_, kind), v in zip(schema, values))


def mh_proofdata(values: Sequence[Any]) -> bytes:
    """Merkle root over the ordered proofdata fields; EMPTY_ROOT when there are none."""
    if not values:
        return EMPTY_ROOT
    return merkle_root([tagged_hash("proofdata-field", encode(v)) for v in values])
