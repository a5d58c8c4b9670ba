"""Exception types shared across the package."""

from __future__ import annotations


class ZendooError(Exception):
    """Base class for all library errors."""


class CodecError(ZendooError, ValueError):
    """Malformed canonical encoding."""


class MerkleError(ZendooError, ValueError):
    pass


class CollisionError(MerkleError):
    """A UTXO maps to an MST slot that is already occupied."""


class NotFoundError(MerkleError):
    """The MST slot is empty or holds a different UTXO."""


class DepthMismatchError(MerkleError):
    pass


class ProofSystemError(ZendooError):
    pass


class UnsatisfiedError(ProofSystemError):
    """The honest prover refuses a non-satisfying assignment."""


class RegistrationError(ProofSystemError):
    pass


class Rejected(ZendooError):
    """A protocol object was rejected; ``reason`` is a machine-readable code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = str(reason)
        self.detail = detail
        super().__init__(f"{self.reason}: {detail}" if detail else self.reason)


class InvalidBlock(Rejected):
    pass


class ScenarioError(ZendooError, ValueError):
    pass


class InvariantViolation(ZendooError):
    pass


class SnapshotError(ZendooError, ValueError):
    """A snapshot file is empty, truncated or not in the expected format."""
