"""Certificates and mainchain-managed withdrawals (BTR and CSW) for Latus.

A BTR or CSW proof shows that a UTXO was in the MST committed by some
accepted certificate, and that no later certificate up to the anchor touched
its slot. The anchor is the MC block holding the sidechain's last accepted
certificate. Each certificate on the way is carried with the MC headers from
its epoch's last block to the block that includes it.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import pairwise
from typing import Any

from ..codec import serializable
from ..crypto import (
    MerkleProof,
    MerkleStateTree,
    PrivateKey,
    Utxo,
    is_digest,
    mht_verify,
    mst_position,
    prove_unspent_since,
    verify_signature,
)
from ..errors import CodecError, UnsatisfiedError
from ..mainchain import (
    BtrRequest,
    CswRequest,
    McBlockHeader,
    McChain,
    ScLeaf,
    SidechainConfig,
    WithdrawalCertificate,
    bt_list_root,
    prove_sc_membership,
    wcert_hash,
    withdrawal_public_input,
)
from ..proofsys import (
    Statement,
    VerifyingKey,
    matches_schema,
    mh_proofdata,
    prove,
    register_predicate,
    require,
    verify,
)
from ..transition import (
    LatusKeys,
    WcertWitness,
    prove_epoch,
    sibling_vk,
    wcert_proofdata,
)
from .consensus import ScChain
from .types import (
    WCERT_SCHEMA,
    WITHDRAWAL_SCHEMA,
    LatusParams,
    nullifier,
    withdrawal_message,
)


def sidechain_config(keys: LatusKeys) -> SidechainConfig:
    """Mainchain registration for a Latus sidechain with BTR and CSW enabled."""
    p = keys.params
    return SidechainConfig(
        p.ledger_id, p.start_block, p.epoch_len, p.submit_len,
        keys.vk(Statement.WCERT), keys.vk(Statement.BTR), keys.vk(Statement.CSW),
        WCERT_SCHEMA, WITHDRAWAL_SCHEMA, WITHDRAWAL_SCHEMA,
    )


def generate_wcert(keys: LatusKeys, chain: ScChain, wepoch: int, tip: bytes | None = None,
                   ) -> WithdrawalCertificate:
    epoch = prove_epoch(keys, chain, wepoch, tip)
    p_from, p_to = epoch.p_from, epoch.p_to
    after = epoch.state_after
    bt_list = after.backward_transfers
    proofdata = wcert_proofdata(keys.params, p_to, after.view)
    quality = p_to.sc_height
    pi = (quality, bt_list_root(bt_list), p_from.mc_hash, p_to.mc_hash, mh_proofdata(proofdata))
    witness = WcertWitness(epoch.proof, p_from, p_to, epoch.state_before.view, after.view, bt_list, proofdata)
    proof = prove(keys.pk(Statement.WCERT), pi, witness)
    return WithdrawalCertificate(keys.params.ledger_id, wepoch, quality, bt_list, proofdata, proof)


@serializable
@dataclass(frozen=True)
class CertLink:
    """An accepted certificate plus the MC headers tying it to its epoch and its block."""

    cert: WithdrawalCertificate
    txs_hash: bytes
    leaf_proof: MerkleProof
    headers: tuple[McBlockHeader, ...]
    prev_boundary: bytes


@serializable
@dataclass(frozen=True)
class WithdrawalWitness:
    utxo: Utxo
    signature: bytes
    inclusion: MerkleProof
    links: tuple[CertLink, ...]


def _epoch_start_block(cert: WithdrawalCertificate) -> bytes:
    """SC block the certified epoch continues from (read from the transparent proof)."""
    return cert.proof.witness.p_from.sc_hash


def _check_link(vk: VerifyingKey, params: LatusParams, link: Any) -> None:
    require(isinstance(link, CertLink) and isinstance(link.cert, WithdrawalCertificate), "bad link")
    cert = link.cert
    headers = link.headers
    require(cert.ledger_id == params.ledger_id, "certificate of another sidechain")
    require(matches_schema(WCERT_SCHEMA, cert.proofdata), "certificate proofdata schema")
    require(isinstance(headers, tuple) and headers and all(isinstance(h, McBlockHeader) for h in headers),
            "missing headers")
    require(headers[0].height == params.epoch_last_height(cert.epoch_id), "first header is not the epoch end")
    for a, b in pairwise(headers):
        require(b.prev_block == a.hash and b.height == a.height + 1, "headers are not a chain")
    require(headers[-1].height - headers[0].height <= params.submit_len, "certificate outside its window")
    leaf = ScLeaf(params.ledger_id, link.txs_hash, wcert_hash(cert))
    require(is_digest(link.txs_hash) and mht_verify(headers[-1].sc_txs_commitment, leaf.digest, link.leaf_proof),
            "certificate not committed in its block")
    pi = (cert.quality, bt_list_root(cert.bt_list), link.prev_boundary, headers[0].hash,
          mh_proofdata(cert.proofdata))
    require(verify(sibling_vk(vk, Statement.WCERT), pi, cert.proof), "certificate proof invalid")


def _withdrawal_predicate(kind: str):
    def predicate(vk: VerifyingKey, pi: Any, w: Any) -> bool:
        params: LatusParams = vk.params
        require(isinstance(pi, tuple) and len(pi) == 5, "public input shape")
        anchor, null, receiver, amount, mh = pi
        require(isinstance(w, WithdrawalWitness) and isinstance(w.utxo, Utxo), "bad witness")
        links = w.links
        require(isinstance(links, tuple) and links, "no certificates")
        for link in links:
            _check_link(vk, params, link)
        for prev, nxt in pairwise(links):
            require(nxt.cert.epoch_id == prev.cert.epoch_id + 1, "certificates are not consecutive")
            require(nxt.prev_boundary == prev.headers[0].hash, "epochs are not adjacent on the mainchain")
            require(_epoch_start_block(nxt.cert) == prev.cert.proofdata[0],
                    "certified epochs do not form one sidechain")
        require(links[-1].headers[-1].hash == anchor, "last certificate is not at the anchor")
        utxo = w.utxo
        root = links[0].cert.proofdata[1]
        deltas = [link.cert.proofdata[2] for link in links[1:]]
        require(len(w.inclusion.siblings) == params.mst_depth, "inclusion depth")
        require(prove_unspent_since(utxo, root, w.inclusion, deltas), "utxo not provably unspent")
        message = withdrawal_message(kind, params.ledger_id, utxo, receiver)
        require(verify_signature(utxo.addr, message, w.signature), "not signed by the owner")
        require(null == nullifier(utxo), "nullifier mismatch")
        require(amount == utxo.amount, "amount mismatch")
        require(mh == mh_proofdata((utxo.to_bytes(),)), "proofdata mismatch")
        return True
    return predicate


register_predicate(Statement.BTR, _withdrawal_predicate("btr"))
register_predicate(Statement.CSW, _withdrawal_predicate("csw"))


def cert_link(mc: McChain, ledger_id: bytes, epoch_id: int) -> CertLink:
    """Link for the certificate the active mainchain accepted for ``epoch_id``."""
    state = mc.tip_state
    entry = state.sidechains[ledger_id]
    record = entry.certs.get(epoch_id)
    if record is None:
        raise UnsatisfiedError(f"no accepted certificate for epoch {epoch_id}")
    cfg = entry.config
    block = mc.block(state.hashes[record.height])
    cert = next(c for c in block.body.certificates if c.ledger_id == ledger_id)
    leaf, proof = prove_sc_membership(block.body, ledger_id)
    last = cfg.epoch_last_height(epoch_id)
    headers = tuple(mc.block(state.hashes[h]).header for h in range(last, record.height + 1))
    return CertLink(cert, leaf.txs_hash, proof, headers, state.hashes[cfg.epoch_last_height(epoch_id - 1)])


def find_commitment(chain: ScChain, mc: McChain, utxo: Utxo) -> tuple[MerkleStateTree, int]:
    """Most recent certified MST holding ``utxo``, with the epoch that certified it."""
    entry = mc.tip_state.sidechains[chain.params.ledger_id]
    if entry.last_cert is None:
        raise UnsatisfiedError("no certificate yet")
    for epoch_id in range(entry.last_cert.epoch_id, -1, -1):
        if epoch_id not in entry.certs:
            break
        cert = cert_link(mc, chain.params.ledger_id, epoch_id).cert
        info = chain.info.get(cert.proofdata[0])
        if info is None:
            continue
        if info.state.mst.root == cert.proofdata[1] and utxo in info.state.mst:
            return info.state.mst, epoch_id
    raise UnsatisfiedError("utxo is not in any certified state")


def _build(kind: str, cls: type, keys: LatusKeys, mc: McChain, utxo: Utxo, owner: PrivateKey,
           receiver: bytes, mst: MerkleStateTree, epoch_id: int):
    params = keys.params
    entry = mc.tip_state.sidechains[params.ledger_id]
    if entry.last_cert is None:
        raise UnsatisfiedError("no certificate yet")
    links = tuple(cert_link(mc, params.ledger_id, e) for e in range(epoch_id, entry.last_cert.epoch_id + 1))
    anchor = links[-1].headers[-1].hash
    if utxo not in mst:
        raise UnsatisfiedError("utxo absent from the committed state")
    inclusion = mst.prove(mst_position(utxo, mst.depth))
    signature = owner.sign(withdrawal_message(kind, params.ledger_id, utxo, receiver))
    proofdata = (utxo.to_bytes(),)
    request = cls(params.ledger_id, receiver, utxo.amount, nullifier(utxo), proofdata)
    statement = Statement.BTR if kind == "btr" else Statement.CSW
    proof = prove(keys.pk(statement), withdrawal_public_input(anchor, request),
                  WithdrawalWitness(utxo, signature, inclusion, links))
    return cls(params.ledger_id, receiver, utxo.amount, nullifier(utxo), proofdata, proof)


def build_btr_proof(keys: LatusKeys, mc: McChain, utxo: Utxo, owner: PrivateKey, receiver: bytes,
                    mst: MerkleStateTree, epoch_id: int) -> BtrRequest:
    return _build("btr", BtrRequest, keys, mc, utxo, owner, receiver, mst, epoch_id)


def build_csw_proof(keys: LatusKeys, mc: McChain, utxo: Utxo, owner: PrivateKey, receiver: bytes,
                    mst: MerkleStateTree, epoch_id: int) -> CswRequest:
    return _build("csw", CswRequest, keys, mc, utxo, owner, receiver, mst, epoch_id)


def utxo_from_proofdata(proofdata: tuple) -> Utxo | None:
    try:
        return Utxo.from_bytes(proofdata[0])
    except (CodecError, ValueError, IndexError, TypeError):
        return None
