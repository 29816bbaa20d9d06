"""Transaction kinds, bodies, canonical encoding, and signatures.

A transaction id (tid) is the SHA-256 of the canonical encoding of
(kind, body, certificate, parent_tid). Signatures cover the tid, so
countersigning a multi-party transaction never changes its id, and any
mutation of a hashed field is detectable by recomputing the tid.

Six kinds flow through the system, named here by what they record; the
short codes are the wire / CLI tokens:

    EST  event-safety report from a vehicle (pre-collision telemetry)
    PET  post-collision evidence from an involved or witness vehicle
    UT   software-update instruction, co-signed by maker and vehicle
    ET   execution report for a previously committed update
    MT   maintenance report from a service technician
    RET  evidence request / submission into the decision partition
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .encoding import Reader, Writer
from .errors import (
    DuplicateSigner,
    MalformedBody,
    MissingCertificate,
    NotFound,
    NotMultiSig,
)
from .identity import (
    KeyPair,
    PseudonymCertificate,
    certificate_signature_ok,
    sign_tx_digest,
    verify_tx_digest,
)

Hash256 = bytes
HASH_SIZE = 32


class TxKind(str, enum.Enum):
    EVENT_SAFETY = "EST"
    COLLISION_EVIDENCE = "PET"
    UPDATE = "UT"
    EXECUTION = "ET"
    MAINTENANCE = "MT"
    EVIDENCE_REQUEST = "RET"


class Role(str, enum.Enum):
    VEHICLE = "AV"
    MANUFACTURER = "AM"
    TECHNICIAN = "ST"
    INSURER = "IC"
    TRANSPORT_AUTHORITY = "GTA"
    LEGAL_AUTHORITY = "LA"
    CERT_AUTHORITY = "CA"


class Partition(str, enum.Enum):
    OPERATIONAL = "P1"
    DECISIONAL = "P2"


class DriveMode(str, enum.Enum):
    AUTONOMOUS = "autonomous"
    MANUAL = "manual"


class EventTrigger(str, enum.Enum):
    HARD_BRAKE = "hard_brake"
    WRONG_WAY = "wrong_way"
    SLIPPERY_ROAD = "slippery_road"


class ExecStatus(str, enum.Enum):
    EXECUTED = "executed"
    FAILED = "failed"


_KIND_WIRE = {
    TxKind.EVENT_SAFETY: 1,
    TxKind.COLLISION_EVIDENCE: 2,
    TxKind.UPDATE: 3,
    TxKind.EXECUTION: 4,
    TxKind.MAINTENANCE: 5,
    TxKind.EVIDENCE_REQUEST: 6,
}
_ROLE_WIRE = {
    Role.VEHICLE: 0,
    Role.MANUFACTURER: 1,
    Role.TECHNICIAN: 2,
    Role.INSURER: 3,
    Role.TRANSPORT_AUTHORITY: 4,
    Role.LEGAL_AUTHORITY: 5,
    Role.CERT_AUTHORITY: 6,
}
_PARTITION_WIRE = {Partition.OPERATIONAL: 1, Partition.DECISIONAL: 2}
_MODE_WIRE = {DriveMode.AUTONOMOUS: 0, DriveMode.MANUAL: 1}
_TRIGGER_WIRE = {EventTrigger.HARD_BRAKE: 0, EventTrigger.WRONG_WAY: 1, EventTrigger.SLIPPERY_ROAD: 2}
_STATUS_WIRE = {ExecStatus.EXECUTED: 0, ExecStatus.FAILED: 1}


def _wire_decode(table: dict, value: int, what: str):
    for key, code in table.items():
        if code == value:
            return key
    raise MalformedBody(f"unknown {what} tag {value}")


# --- geometry / telemetry ----------------------------------------------------

@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def encode(self, w: Writer) -> None:
        w.f64(self.lat_deg)
        w.f64(self.lon_deg)

    @classmethod
    def decode(cls, r: Reader) -> "GeoPoint":
        return cls(lat_deg=r.f64(), lon_deg=r.f64())


@dataclass(frozen=True)
class RoadPosition:
    lane: int
    heading_deg: float

    def encode(self, w: Writer) -> None:
        w.u32(self.lane)
        w.f64(self.heading_deg)

    @classmethod
    def decode(cls, r: Reader) -> "RoadPosition":
        return cls(lane=r.u32(), heading_deg=r.f64())


@dataclass(frozen=True)
class EventSafetyMessage:
    """Host-vehicle telemetry snapshot at the moment of a triggering event."""

    location: GeoPoint
    speed_mps: float
    position: RoadPosition
    drive_mode: DriveMode
    trigger: EventTrigger

    def encode(self, w: Writer) -> None:
        self.location.encode(w)
        w.f64(self.speed_mps)
        self.position.encode(w)
        w.u8(_MODE_WIRE[self.drive_mode])
        w.u8(_TRIGGER_WIRE[self.trigger])

    @classmethod
    def decode(cls, r: Reader) -> "EventSafetyMessage":
        return cls(
            location=GeoPoint.decode(r),
            speed_mps=r.f64(),
            position=RoadPosition.decode(r),
            drive_mode=_wire_decode(_MODE_WIRE, r.u8(), "drive mode"),
            trigger=_wire_decode(_TRIGGER_WIRE, r.u8(), "trigger"),
        )


@dataclass(frozen=True)
class TamperStoreDigest:
    """Digest of the vehicle's sealed media store: content hashes of the
    sensor blobs captured for the event, plus the capture timestamp. The
    blobs themselves live off-chain in a content-addressed store.
    """

    media_hashes: tuple[Hash256, ...]
    captured_at: float

    def encode(self, w: Writer) -> None:
        w.items(self.media_hashes, lambda wr, h: wr.fixed(h, HASH_SIZE))
        w.f64(self.captured_at)

    @classmethod
    def decode(cls, r: Reader) -> "TamperStoreDigest":
        return cls(
            media_hashes=tuple(r.items(lambda rd: rd.fixed(HASH_SIZE))),
            captured_at=r.f64(),
        )


@dataclass(frozen=True)
class EvidenceData:
    """Collision evidence bundle. edata_hash is the SHA-256 over the
    canonical encoding of the five sibling fields (never over itself).
    """

    loc: GeoPoint
    ts: float
    hv_data: EventSafetyMessage
    ts_data: TamperStoreDigest
    enc_witness: tuple[bytes, ...]
    edata_hash: Hash256

    def encode(self, w: Writer) -> None:
        self.loc.encode(w)
        w.f64(self.ts)
        self.hv_data.encode(w)
        self.ts_data.encode(w)
        w.items(self.enc_witness, lambda wr, b: wr.blob(b))
        w.fixed(self.edata_hash, HASH_SIZE)

    @classmethod
    def decode(cls, r: Reader) -> "EvidenceData":
        return cls(
            loc=GeoPoint.decode(r),
            ts=r.f64(),
            hv_data=EventSafetyMessage.decode(r),
            ts_data=TamperStoreDigest.decode(r),
            enc_witness=tuple(r.items(lambda rd: rd.blob())),
            edata_hash=r.fixed(HASH_SIZE),
        )

    @classmethod
    def make(
        cls,
        loc: GeoPoint,
        ts: float,
        hv_data: EventSafetyMessage,
        ts_data: TamperStoreDigest,
        enc_witness: tuple[bytes, ...] = (),
    ) -> "EvidenceData":
        digest = compute_edata_hash(loc, ts, hv_data, ts_data, enc_witness)
        return cls(loc, ts, hv_data, ts_data, enc_witness, digest)


def compute_edata_hash(
    loc: GeoPoint,
    ts: float,
    hv_data: EventSafetyMessage,
    ts_data: TamperStoreDigest,
    enc_witness: tuple[bytes, ...],
) -> Hash256:
    w = Writer()
    loc.encode(w)
    w.f64(ts)
    hv_data.encode(w)
    ts_data.encode(w)
    w.items(enc_witness, lambda wr, b: wr.blob(b))
    return hashlib.sha256(w.getvalue()).digest()


# --- bodies ------------------------------------------------------------------

@dataclass(frozen=True)
class EventSafetyBody:
    ts: float
    esm: EventSafetyMessage
    ts_data: TamperStoreDigest

    def encode(self, w: Writer) -> None:
        w.f64(self.ts)
        self.esm.encode(w)
        self.ts_data.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "EventSafetyBody":
        return cls(ts=r.f64(), esm=EventSafetyMessage.decode(r), ts_data=TamperStoreDigest.decode(r))


@dataclass(frozen=True)
class CollisionEvidenceBody:
    edata: EvidenceData
    ts_data: TamperStoreDigest

    def encode(self, w: Writer) -> None:
        self.edata.encode(w)
        self.ts_data.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "CollisionEvidenceBody":
        return cls(edata=EvidenceData.decode(r), ts_data=TamperStoreDigest.decode(r))


@dataclass(frozen=True)
class UpdateBody:
    update_file_hash: Hash256
    metadata: str
    submitted_at: float

    def encode(self, w: Writer) -> None:
        w.fixed(self.update_file_hash, HASH_SIZE)
        w.text(self.metadata)
        w.f64(self.submitted_at)

    @classmethod
    def decode(cls, r: Reader) -> "UpdateBody":
        return cls(update_file_hash=r.fixed(HASH_SIZE), metadata=r.text(), submitted_at=r.f64())


@dataclass(frozen=True)
class ExecReportBody:
    exec_status: ExecStatus
    submitted_at: float

    def encode(self, w: Writer) -> None:
        w.u8(_STATUS_WIRE[self.exec_status])
        w.f64(self.submitted_at)

    @classmethod
    def decode(cls, r: Reader) -> "ExecReportBody":
        return cls(
            exec_status=_wire_decode(_STATUS_WIRE, r.u8(), "exec status"),
            submitted_at=r.f64(),
        )


@dataclass(frozen=True)
class MaintenanceBody:
    report_hash: Hash256
    roadworthy: bool
    technician: str
    submitted_at: float

    def encode(self, w: Writer) -> None:
        w.fixed(self.report_hash, HASH_SIZE)
        w.boolean(self.roadworthy)
        w.text(self.technician)
        w.f64(self.submitted_at)

    @classmethod
    def decode(cls, r: Reader) -> "MaintenanceBody":
        return cls(
            report_hash=r.fixed(HASH_SIZE),
            roadworthy=r.boolean(),
            technician=r.text(),
            submitted_at=r.f64(),
        )


@dataclass(frozen=True)
class EstDigest:
    """Compact reference to a committed event-safety report, shipped to the
    decision partition as historical behavior proof.
    """

    tid: Hash256
    ts: float
    trigger: EventTrigger

    def encode(self, w: Writer) -> None:
        w.fixed(self.tid, HASH_SIZE)
        w.f64(self.ts)
        w.u8(_TRIGGER_WIRE[self.trigger])

    @classmethod
    def decode(cls, r: Reader) -> "EstDigest":
        return cls(
            tid=r.fixed(HASH_SIZE),
            ts=r.f64(),
            trigger=_wire_decode(_TRIGGER_WIRE, r.u8(), "trigger"),
        )


@dataclass(frozen=True)
class EvidenceRequestBody:
    """Evidence submission / identification request for the decision
    partition. Carries the requester's copy of the subject vehicle's
    evidence and that vehicle's event-safety history digests.
    """

    edata: EvidenceData
    requester: Role
    submitted_at: float
    est_digests: tuple[EstDigest, ...]

    def encode(self, w: Writer) -> None:
        self.edata.encode(w)
        w.u8(_ROLE_WIRE[self.requester])
        w.f64(self.submitted_at)
        w.items(self.est_digests, lambda wr, d: d.encode(wr))

    @classmethod
    def decode(cls, r: Reader) -> "EvidenceRequestBody":
        return cls(
            edata=EvidenceData.decode(r),
            requester=_wire_decode(_ROLE_WIRE, r.u8(), "role"),
            submitted_at=r.f64(),
            est_digests=tuple(r.items(EstDigest.decode)),
        )


Body = Union[
    EventSafetyBody,
    CollisionEvidenceBody,
    UpdateBody,
    ExecReportBody,
    MaintenanceBody,
    EvidenceRequestBody,
]

_BODY_TYPES: dict[TxKind, type] = {
    TxKind.EVENT_SAFETY: EventSafetyBody,
    TxKind.COLLISION_EVIDENCE: CollisionEvidenceBody,
    TxKind.UPDATE: UpdateBody,
    TxKind.EXECUTION: ExecReportBody,
    TxKind.MAINTENANCE: MaintenanceBody,
    TxKind.EVIDENCE_REQUEST: EvidenceRequestBody,
}

# Kinds whose first (proposing) signature is made under the attached
# pseudonym certificate rather than a fixed infrastructure key.
VEHICLE_PROPOSED_KINDS = frozenset(
    {TxKind.EVENT_SAFETY, TxKind.COLLISION_EVIDENCE, TxKind.EXECUTION}
)

# Required signer roles, in order, per kind. The update instruction is the
# only multi-signature kind: maker first, vehicle countersigns.
SIGNER_TEMPLATE: dict[TxKind, tuple[Role, ...]] = {
    TxKind.EVENT_SAFETY: (Role.VEHICLE,),
    TxKind.COLLISION_EVIDENCE: (Role.VEHICLE,),
    TxKind.UPDATE: (Role.MANUFACTURER, Role.VEHICLE),
    TxKind.EXECUTION: (Role.VEHICLE,),
    TxKind.MAINTENANCE: (Role.TECHNICIAN,),
    TxKind.EVIDENCE_REQUEST: (),  # resolved from body.requester
}


def required_signers(kind: TxKind, body: Body) -> tuple[Role, ...]:
    if kind is TxKind.EVIDENCE_REQUEST:
        assert isinstance(body, EvidenceRequestBody)
        return (body.requester,)
    return SIGNER_TEMPLATE[kind]


# --- transactions ------------------------------------------------------------

@dataclass(frozen=True)
class SigEntry:
    role: Role
    signature: bytes

    def encode(self, w: Writer) -> None:
        w.u8(_ROLE_WIRE[self.role])
        w.blob(self.signature)

    @classmethod
    def decode(cls, r: Reader) -> "SigEntry":
        return cls(role=_wire_decode(_ROLE_WIRE, r.u8(), "role"), signature=r.blob())


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    body: Body
    cert: PseudonymCertificate
    parent_tid: Optional[Hash256]
    tid: Hash256
    signatures: tuple[SigEntry, ...] = field(default=())

    def with_signature(self, entry: SigEntry) -> "Transaction":
        return Transaction(
            kind=self.kind,
            body=self.body,
            cert=self.cert,
            parent_tid=self.parent_tid,
            tid=self.tid,
            signatures=self.signatures + (entry,),
        )


def _encode_body(w: Writer, kind: TxKind, body: Body) -> None:
    expected = _BODY_TYPES[kind]
    if not isinstance(body, expected):
        raise MalformedBody(
            f"{kind.value} body must be {expected.__name__}, got {type(body).__name__}"
        )
    body.encode(w)


def encode_tid_preimage(
    kind: TxKind,
    body: Body,
    cert: PseudonymCertificate,
    parent_tid: Optional[Hash256],
) -> bytes:
    w = Writer()
    w.u8(_KIND_WIRE[kind])
    _encode_body(w, kind, body)
    cert.encode(w)
    w.optional(parent_tid, lambda wr, h: wr.fixed(h, HASH_SIZE))
    return w.getvalue()


def compute_tid(
    kind: TxKind,
    body: Body,
    cert: PseudonymCertificate,
    parent_tid: Optional[Hash256] = None,
) -> Hash256:
    return hashlib.sha256(encode_tid_preimage(kind, body, cert, parent_tid)).digest()


def encode_transaction(tx: Transaction) -> bytes:
    """Full canonical record: tid preimage fields, then tid, then signatures."""
    w = Writer()
    w.raw(encode_tid_preimage(tx.kind, tx.body, tx.cert, tx.parent_tid))
    w.fixed(tx.tid, HASH_SIZE)
    w.items(tx.signatures, lambda wr, s: s.encode(wr))
    return w.getvalue()


def decode_transaction(data: bytes) -> Transaction:
    r = Reader(data)
    kind = _wire_decode(_KIND_WIRE, r.u8(), "transaction kind")
    body = _BODY_TYPES[kind].decode(r)
    cert = PseudonymCertificate.decode(r)
    parent = r.optional(lambda rd: rd.fixed(HASH_SIZE))
    tid = r.fixed(HASH_SIZE)
    signatures = tuple(r.items(SigEntry.decode))
    r.expect_end()
    return Transaction(
        kind=kind, body=body, cert=cert, parent_tid=parent, tid=tid, signatures=signatures
    )


def body_timestamp(tx: Transaction) -> float:
    """The timestamp that certificate-window checks and time queries use:
    the in-body event time for telemetry kinds, the proposer's submission
    stamp for the rest.
    """
    body = tx.body
    if isinstance(body, EventSafetyBody):
        return body.ts
    if isinstance(body, CollisionEvidenceBody):
        return body.edata.ts
    return body.submitted_at  # type: ignore[union-attr]


def validate_structure(tx: Transaction) -> None:
    """Schema-level checks; raises MalformedBody / MissingCertificate."""
    expected = _BODY_TYPES[tx.kind]
    if not isinstance(tx.body, expected):
        raise MalformedBody(
            f"{tx.kind.value} body must be {expected.__name__}, got {type(tx.body).__name__}"
        )
    if tx.cert is None:
        raise MissingCertificate(f"{tx.kind.value} requires a pseudonym certificate")
    if tx.kind is TxKind.EXECUTION:
        if tx.parent_tid is None:
            raise MalformedBody("execution report must reference its update transaction")
    elif tx.parent_tid is not None:
        raise MalformedBody(f"{tx.kind.value} must not carry a parent tid")
    if len(tx.tid) != HASH_SIZE:
        raise MalformedBody("tid must be 32 bytes")
    if isinstance(tx.body, EventSafetyBody) and tx.body.esm.speed_mps < 0:
        raise MalformedBody("speed cannot be negative")
    if isinstance(tx.body, CollisionEvidenceBody) and tx.body.edata.hv_data.speed_mps < 0:
        raise MalformedBody("speed cannot be negative")
    if isinstance(tx.body, EvidenceRequestBody):
        if tx.body.requester not in (Role.INSURER, Role.MANUFACTURER):
            raise MalformedBody("evidence requests come from the insurer or the maker")


def build_transaction(
    kind: TxKind,
    body: Body,
    keys: KeyPair,
    cert: PseudonymCertificate,
    parent_tid: Optional[Hash256] = None,
    signer_role: Optional[Role] = None,
) -> Transaction:
    """Assembles a transaction and attaches the proposer's signature over
    the tid. signer_role defaults to the kind's first required signer.
    """
    if signer_role is None:
        signers = required_signers(kind, body)
        if not signers:
            raise MalformedBody(f"cannot infer signer role for {kind.value}")
        signer_role = signers[0]
    tid = compute_tid(kind, body, cert, parent_tid)
    tx = Transaction(kind=kind, body=body, cert=cert, parent_tid=parent_tid, tid=tid)
    validate_structure(tx)
    return tx.with_signature(SigEntry(role=signer_role, signature=sign_tx_digest(keys.secret_key, tid)))


def countersign(tx: Transaction, keys: KeyPair, role: Role) -> Transaction:
    """Adds a second signature over the same tid. Only the update kind is
    multi-signature; signing twice with one role is rejected.
    """
    if len(required_signers(tx.kind, tx.body)) < 2:
        raise NotMultiSig(f"{tx.kind.value} takes a single signature")
    if any(entry.role == role for entry in tx.signatures):
        raise DuplicateSigner(f"role {role.value} already signed")
    return tx.with_signature(SigEntry(role=role, signature=sign_tx_digest(keys.secret_key, tx.tid)))


def verify_signatures(
    tx: Transaction,
    known_keys: Mapping[Role, bytes],
    ca_pubkey: bytes,
    at: float,
) -> bool:
    """Checks every attached signature (and, for vehicle signatures, the
    certificate behind it) without judging whether the set is complete.
    """
    for entry in tx.signatures:
        if entry.role is Role.VEHICLE:
            if tx.cert is None:
                return False
            if not certificate_signature_ok(tx.cert, ca_pubkey):
                return False
            if not tx.cert.window_contains(at):
                return False
            if not verify_tx_digest(tx.cert.subject_pubkey, tx.tid, entry.signature):
                return False
        else:
            pubkey = known_keys.get(entry.role)
            if pubkey is None:
                return False
            if not verify_tx_digest(pubkey, tx.tid, entry.signature):
                return False
    return True


# --- off-chain media store ---------------------------------------------------

class BlobStore:
    """Content-addressed store for sensor media; the chain only ever holds
    the SHA-256 keys.
    """

    def __init__(self) -> None:
        self._blobs: dict[Hash256, bytes] = {}

    def put(self, data: bytes) -> Hash256:
        key = hashlib.sha256(data).digest()
        self._blobs[key] = data
        return key

    def get(self, key: Hash256) -> bytes:
        try:
            return self._blobs[key]
        except KeyError:
            raise NotFound(f"no blob {key.hex()}") from None

    def has(self, key: Hash256) -> bool:
        return key in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)


# --- debug rendering ---------------------------------------------------------

def tx_to_jsonable(tx: Transaction) -> dict:
    """Human-readable rendering for CLI inspection. Never hashed."""

    def hx(b: bytes) -> str:
        return b.hex()

    def render(obj) -> object:
        if isinstance(obj, bytes):
            return hx(obj)
        if isinstance(obj, enum.Enum):
            return obj.value
        if isinstance(obj, (list, tuple)):
            return [render(x) for x in obj]
        if hasattr(obj, "__dataclass_fields__"):
            return {name: render(getattr(obj, name)) for name in obj.__dataclass_fields__}
        return obj

    return {
        "kind": tx.kind.value,
        "tid": hx(tx.tid),
        "parent_tid": hx(tx.parent_tid) if tx.parent_tid else None,
        "cert": render(tx.cert),
        "body": render(tx.body),
        "signatures": [{"role": s.role.value, "signature": hx(s.signature)} for s in tx.signatures],
    }
