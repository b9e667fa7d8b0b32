"""Verification node: signature, location and identity checks, then submit.

Checks run in the protocol's order (edge signature, geo-distance against the
registered home, identity token lookup) and only a payload that passes all
three (plus the seq_no freshness extension) is countersigned and transacted
onto the ledger. The identity token is used as the directory lookup key for
the home coordinate before identity authentication re-confirms registration;
an unknown token therefore skips the distance check and is rejected at the
identity stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .audit import AuditLog
from .clock import LogicalClock
from .crypto import AuthenticationFailure, SignatureKeyPair, symmetric_decrypt, verify_signature
from .directory import DirectoryRecord, DirectoryStore
from .ledger import Account, Chain, ContractRejection, TxReceipt, make_transaction
from .payload import (
    GeoCoordinate,
    ShapeError,
    SignatureEnvelope,
    SignedGPD,
    canonical_encode_gpd,
    parse_wire_json,
    validate_gpd_shape,
    vn_signing_message,
)

EARTH_RADIUS_M = 6_371_000.0


class InvalidSignature(Exception):
    def __init__(self, kind: str):
        self.kind = kind  # "unknown_key" | "verify_failed"
        super().__init__(f"edge signature invalid: {kind}")


class LocationRejected(Exception):
    def __init__(self, distance_m: float | None, detail: str = ""):
        self.distance_m = distance_m
        if not detail and distance_m is not None:
            detail = f"distance {distance_m:.1f} m outside home radius"
        super().__init__(detail or "location rejected")


class IdentityRejected(Exception):
    pass


class ReplayRejected(Exception):
    def __init__(self, seq_no: int, last_seen: int):
        self.seq_no = seq_no
        self.last_seen = last_seen
        super().__init__(f"seq_no {seq_no} not greater than last seen {last_seen}")


def haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Great-circle distance in meters on a spherical Earth (R = 6371 km)."""
    phi1 = math.radians(a.latitude)
    phi2 = math.radians(b.latitude)
    dphi = math.radians(b.latitude - a.latitude)
    dlambda = math.radians(b.longitude - a.longitude)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlambda / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


@dataclass(frozen=True)
class PatientRef:
    ledger_patient_id: str
    record: DirectoryRecord


class VerificationNode:
    def __init__(
        self,
        keypair: SignatureKeyPair,
        trusted_edge_keys: dict[str, bytes],
        directory: DirectoryStore,
        chain: Chain,
        hcp_account: Account,
        home_radius_m: float = 100.0,
        clock: LogicalClock | None = None,
        audit: AuditLog | None = None,
    ):
        if home_radius_m <= 0:
            raise ValueError("home_radius_m must be positive")
        self.keypair = keypair
        self.trusted_edge_keys = dict(trusted_edge_keys)
        self.directory = directory
        self.chain = chain
        self.hcp_account = hcp_account
        self.home_radius_m = home_radius_m
        self.clock = clock or LogicalClock()
        self.audit = audit or AuditLog()
        self._last_seq: dict[str, int] = {}

    # -- the three factors ---------------------------------------------------

    def verify_edge_signature(self, sgpd: SignedGPD) -> None:
        public = self.trusted_edge_keys.get(sgpd.edge_sig.key_id)
        if public is None:
            raise InvalidSignature("unknown_key")
        if not verify_signature(public, canonical_encode_gpd(sgpd.gpd), sgpd.edge_sig.sig):
            raise InvalidSignature("verify_failed")

    def authenticate_location(self, sgpd: SignedGPD, patient_key: bytes) -> float:
        """Decrypt the claimed coordinate and compare against the stored home."""
        record = self.directory.lookup(sgpd.gpd.identity_token)
        if record is None:
            raise IdentityRejected("unknown identity token")
        try:
            raw = symmetric_decrypt(patient_key, sgpd.gpd.location_ct)
            claimed = GeoCoordinate.from_wire(parse_wire_json(raw))
        except (AuthenticationFailure, ShapeError, ValueError) as exc:
            raise LocationRejected(None, f"location decrypt failure: {exc}") from exc
        home = self.directory.fetch_home_coordinate(record)
        distance = haversine_distance(claimed, home)
        if distance > self.home_radius_m:
            raise LocationRejected(distance)
        return distance

    def authenticate_identity(self, sgpd: SignedGPD) -> PatientRef:
        record = self.directory.lookup(sgpd.gpd.identity_token)
        if record is None:
            raise IdentityRejected("identity token not registered")
        return PatientRef(ledger_patient_id=record.ledger_patient_id, record=record)

    # -- freshness extension (replay protection beyond the base protocol) ----

    def check_freshness(self, patient_id: str, seq_no: int) -> None:
        last = self._last_seq.get(patient_id, 0)
        if seq_no <= last:
            raise ReplayRejected(seq_no, last)

    # -- countersign and ledger submission ------------------------------------

    def countersign(self, sgpd: SignedGPD) -> SignedGPD:
        sig = self.keypair.sign(vn_signing_message(sgpd))
        return replace(
            sgpd, vn_sig=SignatureEnvelope(key_id=self.keypair.key_id, sig=sig)
        )

    def countersign_and_submit(self, sgpd: SignedGPD, patient: PatientRef) -> TxReceipt:
        """Attach the VN signature and transact append_gpd as the HCP."""
        signed = self.countersign(sgpd)
        tx = make_transaction(
            self.hcp_account,
            "append_gpd",
            {
                "patient_id": patient.ledger_patient_id,
                "signed_gpd": signed.to_wire(),
            },
        )
        receipt = self.chain.submit(tx)
        self._last_seq[patient.ledger_patient_id] = sgpd.gpd.seq_no
        return receipt

    # -- full pipeline ---------------------------------------------------------

    def process(self, wire: bytes) -> TxReceipt | None:
        """Run the complete check sequence on one wire SignedGPD.

        Returns the ledger receipt, or None when any stage rejects; every
        stage outcome is appended to the audit log.
        """
        ts = self.clock.tick()
        try:
            sgpd = SignedGPD.from_wire(parse_wire_json(wire))
            validate_gpd_shape(sgpd.gpd)
        except (ValueError, ShapeError, UnicodeDecodeError) as exc:
            self._log(ts, "sig", "reject", f"unparseable: {exc}")
            return None

        try:
            self.verify_edge_signature(sgpd)
        except InvalidSignature as exc:
            self._log(ts, "sig", "reject", exc.kind)
            return None
        self._log(ts, "sig", "pass", sgpd.edge_sig.key_id)

        record = self.directory.lookup(sgpd.gpd.identity_token)
        if record is None:
            # Unknown token: the home coordinate cannot even be looked up, so
            # the distance check is vacuous and the identity stage rejects.
            self._log(ts, "loc", "skipped", "unknown identity token")
        else:
            patient_key = self.directory.fetch_patient_key(record)
            try:
                distance = self.authenticate_location(sgpd, patient_key)
            except LocationRejected as exc:
                detail = (
                    f"distance {exc.distance_m:.3f} m > radius {self.home_radius_m} m"
                    if exc.distance_m is not None
                    else str(exc)
                )
                self._log(ts, "loc", "reject", detail)
                return None
            self._log(ts, "loc", "pass", f"distance {distance:.3f} m")

        try:
            patient = self.authenticate_identity(sgpd)
        except IdentityRejected as exc:
            self._log(ts, "id", "reject", str(exc))
            return None
        self._log(ts, "id", "pass", patient.ledger_patient_id)

        try:
            self.check_freshness(patient.ledger_patient_id, sgpd.gpd.seq_no)
        except ReplayRejected as exc:
            self._log(ts, "replay", "reject", str(exc))
            return None

        try:
            receipt = self.countersign_and_submit(sgpd, patient)
        except ContractRejection as exc:
            self._log(ts, "tx", "reject", exc.reason)
            return None
        self._log(ts, "tx", "pass", f"block {receipt.block_index}")
        return receipt

    def _log(self, ts: int, stage: str, outcome: str, detail: str) -> None:
        self.audit.append(
            {"ts": ts, "stage": stage, "outcome": outcome, "detail": detail}
        )
