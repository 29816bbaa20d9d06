"""Liability adjudication over committed evidence.

The adjudicator never trusts a submitted copy of anything it can anchor
to the chain: evidence copies are compared against the vehicle's own
committed collision evidence, update compliance is read off the ledger,
and behavior history comes from committed event-safety reports.

Rule precedence for a verdict: evidence forgery names the liable party
first, then owner negligence (an overdue, never-executed update), then a
service fault (fresh maintenance before the crash), then a staged-crash
history, then the drive mode at impact, and only then Inconclusive.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .encoding import Writer
from .errors import MalformedCase
from .identity import EntityId
from .ledger import PartitionLedger
from .txmodel import (
    CollisionEvidenceBody,
    DriveMode,
    EstDigest,
    EventTrigger,
    EvidenceData,
    GeoPoint,
    Hash256,
    TxKind,
)

# Defaults for the adjudication thresholds; scenario configs may override.
DEFAULT_NEGLIGENCE_DEADLINE_SECS = 7 * 24 * 3600.0
DEFAULT_MAINTENANCE_WINDOW_SECS = 48 * 3600.0
DEFAULT_STAGED_WINDOW_SECS = 3600.0
DEFAULT_STAGED_THRESHOLD = 3
DEFAULT_TIME_TOL_SECS = 2.0
DEFAULT_DIST_TOL_M = 100.0

_EARTH_RADIUS_M = 6371000.0


def great_circle_m(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in meters."""
    lat1, lon1 = math.radians(a.lat_deg), math.radians(a.lon_deg)
    lat2, lon2 = math.radians(b.lat_deg), math.radians(b.lon_deg)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * _EARTH_RADIUS_M * math.asin(math.sqrt(h))


class CrossCheckResult(str, enum.Enum):
    CONSISTENT = "Consistent"
    HASH_MISMATCH = "HashMismatch"
    SPATIOTEMPORAL_MISMATCH = "SpatioTemporalMismatch"


def _content_digest(e: EvidenceData) -> Hash256:
    # Location and timestamp are judged by tolerance, not equality, so the
    # byte-level comparison covers everything else.
    w = Writer()
    e.hv_data.encode(w)
    e.ts_data.encode(w)
    w.items(e.enc_witness, lambda wr, b: wr.blob(b))
    return hashlib.sha256(w.getvalue()).digest()


def cross_check_edata(
    a: EvidenceData,
    b: EvidenceData,
    time_tol_secs: float = DEFAULT_TIME_TOL_SECS,
    dist_tol_m: float = DEFAULT_DIST_TOL_M,
) -> CrossCheckResult:
    """Compares two copies of collision evidence for the same event.

    Telemetry, media digests, and witness payloads must match bit for bit:
    any difference is a hash mismatch. Location and timestamp are allowed
    to disagree within the configured jitter tolerances; beyond that the
    copies are spatio-temporally inconsistent. Symmetric in its arguments.
    """
    if _content_digest(a) != _content_digest(b):
        return CrossCheckResult.HASH_MISMATCH
    if abs(a.ts - b.ts) > time_tol_secs:
        return CrossCheckResult.SPATIOTEMPORAL_MISMATCH
    if great_circle_m(a.loc, b.loc) > dist_tol_m:
        return CrossCheckResult.SPATIOTEMPORAL_MISMATCH
    return CrossCheckResult.CONSISTENT


def check_negligence(
    ledger: PartitionLedger,
    vehicle_cert_ids: frozenset[Hash256],
    deadline_secs: float,
    at: float,
) -> list[tuple[Hash256, bool]]:
    """For every committed update addressed to the vehicle (identified by
    its certificate history), reports whether the owner is negligent:
    no execution report committed and the deadline has passed.
    """
    out: list[tuple[Hash256, bool]] = []
    for ut in ledger.query(kind=TxKind.UPDATE):
        if ut.cert.cert_id not in vehicle_cert_ids:
            continue
        executed = any(
            True for _ in ledger.query(kind=TxKind.EXECUTION, parent_tid=ut.tid)
        )
        overdue = (at - ut.body.submitted_at) > deadline_secs
        out.append((ut.tid, (not executed) and overdue))
    return out


def check_staged(
    est_digests: tuple[EstDigest, ...],
    collision_at: float,
    window_secs: float,
    threshold: int,
) -> bool:
    """True when the vehicle's hard-brake history inside the window right
    before the collision reaches the threshold: a driving pattern
    consistent with provoking the crash on purpose.
    """
    count = sum(
        1
        for d in est_digests
        if d.trigger is EventTrigger.HARD_BRAKE
        and collision_at - window_secs <= d.ts < collision_at
    )
    return count >= threshold


def staged_evidence_tids(
    est_digests: tuple[EstDigest, ...],
    collision_at: float,
    window_secs: float,
) -> list[Hash256]:
    return [
        d.tid
        for d in est_digests
        if d.trigger is EventTrigger.HARD_BRAKE
        and collision_at - window_secs <= d.ts < collision_at
    ]


# --- cases and verdicts -------------------------------------------------------

class LiabilityClass(str, enum.Enum):
    PRODUCT_DEFECT = "ProductDefect"
    SOFTWARE_FAULT = "SoftwareFault"
    SERVICE_FAULT = "ServiceFault"
    OWNER_NEGLIGENCE = "OwnerNegligence"
    STAGED_SUSPICION = "StagedSuspicion"
    INCONCLUSIVE = "Inconclusive"


class VerdictFlag(str, enum.Enum):
    FALSE_INFO = "FalseInfoDetected"
    INCONSISTENT_WITNESS = "InconsistentWitness"


@dataclass(frozen=True)
class PartyEvidence:
    """Everything the decision partition holds about one involved vehicle."""

    vehicle: EntityId
    cert_ids: frozenset[Hash256]
    pet_tid: Optional[Hash256]
    submitted: Mapping[EntityId, EvidenceData] = field(default_factory=dict)
    ret_tids: Mapping[EntityId, Hash256] = field(default_factory=dict)
    est_digests: tuple[EstDigest, ...] = ()


@dataclass(frozen=True)
class CollisionCase:
    """One collision to adjudicate. Parties are ordered: the first party
    is the host / suspect vehicle whose drive mode settles the default
    liability split.
    """

    case_id: str
    collision_at: float
    parties: tuple[PartyEvidence, ...]
    maker: EntityId
    witness_pet_tids: tuple[Hash256, ...] = ()
    # True when the at-fault vehicle left without submitting evidence
    # (hit and run): the drive-mode rule has no host record to read.
    suspect_absent: bool = False


@dataclass(frozen=True)
class AdjudicationParams:
    negligence_deadline_secs: float = DEFAULT_NEGLIGENCE_DEADLINE_SECS
    maintenance_window_secs: float = DEFAULT_MAINTENANCE_WINDOW_SECS
    staged_window_secs: float = DEFAULT_STAGED_WINDOW_SECS
    staged_threshold: int = DEFAULT_STAGED_THRESHOLD
    time_tol_secs: float = DEFAULT_TIME_TOL_SECS
    dist_tol_m: float = DEFAULT_DIST_TOL_M


@dataclass(frozen=True)
class LiabilityVerdict:
    case_id: str
    liable: Optional[EntityId]
    liability_class: LiabilityClass
    evidence_tids: tuple[Hash256, ...]
    flags: frozenset[VerdictFlag]
    forgers: tuple[EntityId, ...] = ()

    def to_jsonable(self) -> dict:
        return {
            "case_id": self.case_id,
            "liable": self.liable,
            "class": self.liability_class.value,
            "evidence_tids": [t.hex() for t in self.evidence_tids],
            "flags": sorted(f.value for f in self.flags),
            "forgers": list(self.forgers),
        }


def _committed_edata(ledger: PartitionLedger, pet_tid: Hash256) -> Optional[EvidenceData]:
    tx = ledger.find(pet_tid)
    if tx is None or not isinstance(tx.body, CollisionEvidenceBody):
        return None
    return tx.body.edata


def adjudicate(
    case: CollisionCase,
    ledger: PartitionLedger,
    params: AdjudicationParams,
    at: Optional[float] = None,
) -> LiabilityVerdict:
    """Produces one liability verdict for the case. `at` is the query time
    for deadline checks and defaults to the collision instant.
    """
    if not case.parties:
        raise MalformedCase("a collision case needs at least one party")
    if all(p.pet_tid is None for p in case.parties):
        raise MalformedCase("a collision case must reference at least one committed PET")
    query_at = case.collision_at if at is None else at

    flags: set[VerdictFlag] = set()
    evidence: list[Hash256] = []
    forgers: list[EntityId] = []
    liable: Optional[EntityId] = None
    liability_class: Optional[LiabilityClass] = None

    def seen(tid: Hash256) -> None:
        if tid not in evidence:
            evidence.append(tid)

    # 1. Forgery: every submitted copy is compared against the vehicle's
    # own committed evidence. A copy that deviates in content or beyond
    # the jitter tolerances marks its submitter as the forger.
    for party in case.parties:
        if party.pet_tid is None:
            continue
        anchor = _committed_edata(ledger, party.pet_tid)
        if anchor is None:
            continue
        for submitter in sorted(party.submitted):
            copy = party.submitted[submitter]
            result = cross_check_edata(anchor, copy, params.time_tol_secs, params.dist_tol_m)
            if result is not CrossCheckResult.CONSISTENT:
                flags.add(VerdictFlag.FALSE_INFO)
                if submitter not in forgers:
                    forgers.append(submitter)
                if liable is None:
                    liable = submitter
                seen(party.pet_tid)

    # Witness consistency: every witness report must place the event where
    # and when the involved vehicles did, within tolerance.
    involved_edata = [
        e
        for p in case.parties
        if p.pet_tid is not None
        if (e := _committed_edata(ledger, p.pet_tid)) is not None
    ]
    for witness_tid in case.witness_pet_tids:
        witness_edata = _committed_edata(ledger, witness_tid)
        if witness_edata is None:
            continue
        for other in involved_edata:
            if (
                abs(witness_edata.ts - other.ts) > params.time_tol_secs
                or great_circle_m(witness_edata.loc, other.loc) > params.dist_tol_m
            ):
                flags.add(VerdictFlag.INCONSISTENT_WITNESS)
                seen(witness_tid)

    # 2. Owner negligence: an overdue update nobody executed.
    for party in case.parties:
        results = check_negligence(
            ledger, party.cert_ids, params.negligence_deadline_secs, query_at
        )
        overdue = [tid for tid, negligent in results if negligent]
        if overdue:
            liability_class = LiabilityClass.OWNER_NEGLIGENCE
            if liable is None:
                liable = party.vehicle
            for tid in overdue:
                seen(tid)
            break

    # 3. Service fault: fresh maintenance right before the crash.
    if liability_class is None:
        all_certs = frozenset().union(*(p.cert_ids for p in case.parties))
        window = (case.collision_at - params.maintenance_window_secs, case.collision_at)
        for mt in ledger.query(kind=TxKind.MAINTENANCE, time_range=window):
            if mt.cert.cert_id in all_certs:
                liability_class = LiabilityClass.SERVICE_FAULT
                if liable is None:
                    liable = mt.body.technician
                seen(mt.tid)
                break

    # 4. Staged suspicion: a hard-brake pattern right before the crash.
    if liability_class is None:
        for party in case.parties:
            if check_staged(
                party.est_digests,
                case.collision_at,
                params.staged_window_secs,
                params.staged_threshold,
            ):
                liability_class = LiabilityClass.STAGED_SUSPICION
                if liable is None:
                    liable = party.vehicle
                for tid in staged_evidence_tids(
                    party.est_digests, case.collision_at, params.staged_window_secs
                ):
                    seen(tid)
                break

    # 5. Drive mode of the host vehicle at impact.
    if liability_class is None and not case.suspect_absent:
        host = next((p for p in case.parties if p.pet_tid is not None), None)
        host_edata = _committed_edata(ledger, host.pet_tid) if host else None
        if host_edata is not None:
            if host_edata.hv_data.drive_mode is DriveMode.AUTONOMOUS:
                liability_class = LiabilityClass.PRODUCT_DEFECT
                if liable is None:
                    liable = case.maker
            else:
                liability_class = LiabilityClass.OWNER_NEGLIGENCE
                if liable is None:
                    liable = host.vehicle
            seen(host.pet_tid)

    # 6. Nothing conclusive.
    if liability_class is None:
        liability_class = LiabilityClass.INCONCLUSIVE

    return LiabilityVerdict(
        case_id=case.case_id,
        liable=liable,
        liability_class=liability_class,
        evidence_tids=tuple(evidence),
        flags=frozenset(flags),
        forgers=tuple(forgers),
    )
