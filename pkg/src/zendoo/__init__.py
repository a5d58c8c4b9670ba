"""Executable model of a sidechain construction with a Latus sidechain on a UTXO mainchain."""

from . import codec, crypto, mainchain, proofsys, transition  # noqa: F401
from .latus import withdrawals  # noqa: F401  (registers the BTR and CSW predicates)

__version__ = "0.1.0"
