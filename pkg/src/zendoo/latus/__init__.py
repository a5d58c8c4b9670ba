"""Latus: a proof-of-stake sidechain pegged to the mainchain through certificates."""

from .consensus import ScChain, ScReason, select_slot_leaders, slot_leader
from .references import apply_reference, make_mc_reference, verify_mc_reference
from .transactions import (
    TxReason,
    apply_btrtx,
    apply_bttx,
    apply_fttx,
    apply_payment,
    apply_tx,
    build_btrtx,
    build_fttx,
)
from .types import (
    BTRTx,
    BTTx,
    FTTx,
    LatusParams,
    McBlockReference,
    PaymentTx,
    ScBlock,
    ScState,
    StateView,
    ft_metadata,
    nullifier,
)

__all__ = [
    "BTRTx", "BTTx", "FTTx", "LatusParams", "McBlockReference", "PaymentTx", "ScBlock", "ScChain",
    "ScReason", "ScState", "StateView", "TxReason", "apply_btrtx", "apply_bttx", "apply_fttx",
    "apply_payment", "apply_reference", "apply_tx", "build_btrtx", "build_fttx", "ft_metadata",
    "make_mc_reference", "nullifier", "select_slot_leaders", "slot_leader", "verify_mc_reference",
]
