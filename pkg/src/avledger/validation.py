"""Transaction verification policies and the per-round consensus protocol.

Verification is a conjunction of policies; the verdict reason reports the
first one that failed, checked in this order: schema, authorization,
completeness, signatures and certificate window, uniqueness, parent link.

Consensus is unanimity among a partition's validators: a transaction
commits only if every validator accepts it and every validator computes
the same next fold value for its own replica. A round where all accept
but the fold values disagree is the tamper signal: some replica's open
block no longer matches the others.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import NotDiverged, ReplicaMismatch, Unattributable
from .identity import EntityId, certificate_signature_ok, verify_tx_digest
from .ledger import PartitionLedger, fold_ids
from .txmodel import (
    CollisionEvidenceBody,
    EvidenceRequestBody,
    Hash256,
    Partition,
    Role,
    Transaction,
    TxKind,
    body_timestamp,
    compute_edata_hash,
    compute_tid,
    required_signers,
    validate_structure,
)

# Who may propose which kind into which partition. This table is the
# normative authorization policy; membership rows in genesis carry keys
# and validator sets but do not override it.
AUTHORIZED_PROPOSERS: dict[Partition, dict[TxKind, frozenset[Role]]] = {
    Partition.OPERATIONAL: {
        TxKind.EVENT_SAFETY: frozenset({Role.VEHICLE}),
        TxKind.COLLISION_EVIDENCE: frozenset({Role.VEHICLE}),
        TxKind.UPDATE: frozenset({Role.MANUFACTURER}),
        TxKind.EXECUTION: frozenset({Role.VEHICLE}),
        TxKind.MAINTENANCE: frozenset({Role.TECHNICIAN}),
        TxKind.EVIDENCE_REQUEST: frozenset({Role.INSURER, Role.MANUFACTURER}),
    },
    Partition.DECISIONAL: {
        TxKind.EVENT_SAFETY: frozenset(),
        TxKind.COLLISION_EVIDENCE: frozenset(),
        TxKind.UPDATE: frozenset(),
        TxKind.EXECUTION: frozenset(),
        TxKind.MAINTENANCE: frozenset(),
        TxKind.EVIDENCE_REQUEST: frozenset({Role.INSURER, Role.MANUFACTURER}),
    },
}


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Reason(str, enum.Enum):
    OK = "Ok"
    INCOMPLETE = "Incomplete"
    UNAUTHORIZED = "Unauthorized"
    DUPLICATE = "Duplicate"
    BAD_SIGNATURE = "BadSignature"
    EXPIRED_CERT = "ExpiredCert"
    MALFORMED_BODY = "MalformedBody"


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    reason: Reason

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(Decision.ACCEPT, Reason.OK)

    @classmethod
    def reject(cls, reason: Reason) -> "Verdict":
        if reason is Reason.OK:
            raise ValueError("a rejection needs a non-Ok reason")
        return cls(Decision.REJECT, reason)


def proposer_role(tx: Transaction) -> Optional[Role]:
    return tx.signatures[0].role if tx.signatures else None


def verify_transaction(
    tx: Transaction,
    ledger: PartitionLedger,
    at: float,
) -> Verdict:
    """Runs every policy against one replica. `at` is the round time and
    only flows into the audit trail; certificate windows are judged at the
    transaction's own body timestamp so verification is replayable.
    """
    del at  # round time does not influence any policy

    # Schema.
    try:
        validate_structure(tx)
    except Exception:
        return Verdict.reject(Reason.MALFORMED_BODY)
    edata = None
    if isinstance(tx.body, CollisionEvidenceBody):
        edata = tx.body.edata
    elif isinstance(tx.body, EvidenceRequestBody):
        edata = tx.body.edata
    if edata is not None:
        recomputed = compute_edata_hash(
            edata.loc, edata.ts, edata.hv_data, edata.ts_data, edata.enc_witness
        )
        if recomputed != edata.edata_hash:
            return Verdict.reject(Reason.MALFORMED_BODY)
    if compute_tid(tx.kind, tx.body, tx.cert, tx.parent_tid) != tx.tid:
        return Verdict.reject(Reason.MALFORMED_BODY)

    # Authorization: the proposing role must be allowed to put this kind
    # into this partition.
    role = proposer_role(tx)
    if role is None:
        return Verdict.reject(Reason.INCOMPLETE)
    if role not in AUTHORIZED_PROPOSERS[ledger.partition][tx.kind]:
        return Verdict.reject(Reason.UNAUTHORIZED)

    # Completeness: exactly the required signer set, in order.
    required = required_signers(tx.kind, tx.body)
    if tuple(entry.role for entry in tx.signatures) != required:
        return Verdict.reject(Reason.INCOMPLETE)

    # Signatures and certificate.
    genesis = ledger.genesis
    known_keys = genesis.known_keys()
    ca_pubkey = genesis.ca_certificates[0].public_key
    ts = body_timestamp(tx)
    if not certificate_signature_ok(tx.cert, ca_pubkey):
        return Verdict.reject(Reason.BAD_SIGNATURE)
    if not tx.cert.window_contains(ts):
        return Verdict.reject(Reason.EXPIRED_CERT)
    for entry in tx.signatures:
        if entry.role is Role.VEHICLE:
            pubkey = tx.cert.subject_pubkey
        else:
            pubkey = known_keys.get(entry.role)
            if pubkey is None:
                return Verdict.reject(Reason.UNAUTHORIZED)
        if not verify_tx_digest(pubkey, tx.tid, entry.signature):
            return Verdict.reject(Reason.BAD_SIGNATURE)

    # Uniqueness.
    if tx.tid in ledger.tid_index:
        return Verdict.reject(Reason.DUPLICATE)

    # Parent link: an execution report needs its update committed here.
    if tx.kind is TxKind.EXECUTION:
        parent = ledger.find(tx.parent_tid)
        if parent is None or parent.kind is not TxKind.UPDATE:
            return Verdict.reject(Reason.INCOMPLETE)

    return Verdict.accept()


# --- consensus ----------------------------------------------------------------

class RoundOutcome(str, enum.Enum):
    COMMITTED = "Committed"
    REJECTED = "Rejected"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class Vote:
    verdict: Verdict
    cblock_id: Optional[Hash256]


@dataclass(frozen=True)
class ConsensusRound:
    partition: Partition
    tid: Hash256
    at: float
    votes: dict[EntityId, Vote]
    outcome: RoundOutcome


def candidate_fold(replica: PartitionLedger, tx: Transaction) -> Hash256:
    """The fold value this replica would publish after committing tx.

    Recomputed from the open block's transaction list rather than read
    from cached state, so any out-of-band edit of the list shows up in
    the vote.
    """
    tids = [t.tid for t in replica.current.transactions] + [tx.tid]
    return fold_ids(replica.current.prev_block_id, tids)


def run_consensus(
    validators: Sequence[EntityId],
    tx: Transaction,
    replicas: Mapping[EntityId, PartitionLedger],
    at: float,
) -> ConsensusRound:
    """One unanimity round over a single proposed transaction.

    Commits mutate every replica (append plus seal-if-full). A rejection
    by anyone leaves all replicas untouched; accept votes that disagree on
    the fold value mark the round Diverged and also leave replicas alone.
    """
    if not validators:
        raise ValueError("a consensus round needs at least one validator")
    ledgers = [replicas[v] for v in validators]
    partitions = {lg.partition for lg in ledgers}
    if len(partitions) != 1:
        raise ReplicaMismatch("validators hold replicas of different partitions")
    sealed = {(len(lg.blocks), lg.sealed_tip()) for lg in ledgers}
    if len(sealed) != 1:
        raise ReplicaMismatch("validator replicas disagree on the sealed chain")

    votes: dict[EntityId, Vote] = {}
    for validator in validators:
        replica = replicas[validator]
        verdict = verify_transaction(tx, replica, at)
        fold = candidate_fold(replica, tx) if verdict.accepted else None
        votes[validator] = Vote(verdict=verdict, cblock_id=fold)

    if any(not vote.verdict.accepted for vote in votes.values()):
        outcome = RoundOutcome.REJECTED
    elif len({vote.cblock_id for vote in votes.values()}) == 1:
        outcome = RoundOutcome.COMMITTED
        for validator in validators:
            replica = replicas[validator]
            replica.append_validated(tx)
            replica.maybe_seal()
    else:
        outcome = RoundOutcome.DIVERGED

    return ConsensusRound(
        partition=ledgers[0].partition,
        tid=tx.tid,
        at=at,
        votes=votes,
        outcome=outcome,
    )


def detect_tamper(round_: ConsensusRound) -> tuple[EntityId, ...]:
    """Names the replica(s) outvoted on the fold value in a diverged round.

    Attribution is a plurality vote: the unique largest group of agreeing
    validators is presumed honest and everyone outside it is named. With
    no unique largest group the divergence is unattributable.
    """
    if round_.outcome is not RoundOutcome.DIVERGED:
        raise NotDiverged(f"round outcome is {round_.outcome.value}")
    groups: dict[Hash256, list[EntityId]] = {}
    for validator, vote in round_.votes.items():
        assert vote.cblock_id is not None
        groups.setdefault(vote.cblock_id, []).append(validator)
    sizes = sorted((len(members) for members in groups.values()), reverse=True)
    if len(sizes) < 2 or sizes[0] == sizes[1]:
        raise Unattributable("no plurality among diverged replicas")
    majority = max(groups.values(), key=len)
    named = [v for v in round_.votes if v not in majority]
    return tuple(named)


def audit_record(round_: ConsensusRound) -> dict:
    """One JSON-able object per round for the audit log."""
    return {
        "at": round_.at,
        "partition": round_.partition.value,
        "tid": round_.tid.hex(),
        "outcome": round_.outcome.value,
        "votes": {
            validator: {
                "decision": vote.verdict.decision.value,
                "reason": vote.verdict.reason.value,
                "cblock_id": vote.cblock_id.hex() if vote.cblock_id else None,
            }
            for validator, vote in round_.votes.items()
        },
    }
