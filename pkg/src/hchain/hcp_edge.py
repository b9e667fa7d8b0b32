"""HCP edge device: checks digests on arriving GPDs, signs the good ones.

Holds no patient key: it works purely on ciphertext, recomputing every
per-reading digest and the group digest. Mismatches are discarded silently
(no NACK to the sender) but land in the audit log.
"""

from __future__ import annotations

from typing import Callable, Optional

from .audit import AuditLog
from .clock import LogicalClock
from .crypto import SignatureKeyPair, hash_bytes
from .payload import (
    GroupedPatientData,
    ShapeError,
    SignatureEnvelope,
    SignedGPD,
    canonical_ciphertext_bytes,
    canonical_encode_gpd,
    compute_group_digest,
    parse_wire_json,
    validate_gpd_shape,
)


class IntegrityFailure(Exception):
    """A recomputed digest does not match the value carried in the GPD."""

    def __init__(self, kind: str, index: int | None = None):
        self.kind = kind  # "per_reading" | "group"
        self.index = index
        detail = f"{kind}" if index is None else f"{kind} (reading {index})"
        super().__init__(f"digest mismatch: {detail}")


class HcpEdgeDevice:
    def __init__(
        self,
        keypair: SignatureKeyPair,
        clock: LogicalClock | None = None,
        audit: AuditLog | None = None,
        forward: Optional[Callable[[SignedGPD], None]] = None,
    ):
        self.keypair = keypair
        self.clock = clock or LogicalClock()
        self.audit = audit or AuditLog()
        self.forward = forward
        self.accepted = 0
        self.discarded = 0

    def verify_integrity(self, gpd: GroupedPatientData) -> None:
        """Recompute every digest; raises IntegrityFailure on first mismatch."""
        for index, reading in enumerate(gpd.readings):
            recomputed = hash_bytes(canonical_ciphertext_bytes(reading.ciphertext))
            if recomputed != reading.digest:
                raise IntegrityFailure("per_reading", index)
        recomputed = compute_group_digest(
            gpd.identity_token,
            gpd.location_ct,
            gpd.readings,
            gpd.created_at,
            gpd.seq_no,
        )
        if recomputed != gpd.group_digest:
            raise IntegrityFailure("group")

    def sign_and_forward(self, gpd: GroupedPatientData) -> SignedGPD:
        """Sign the canonical GPD bytes; callers must have verified integrity."""
        sig = self.keypair.sign(canonical_encode_gpd(gpd))
        sgpd = SignedGPD(
            gpd=gpd,
            edge_sig=SignatureEnvelope(key_id=self.keypair.key_id, sig=sig),
            vn_sig=None,
        )
        self.accepted += 1
        if self.forward is not None:
            self.forward(sgpd)
        return sgpd

    def handle_incoming(self, wire: bytes) -> SignedGPD | None:
        """Parse, shape-check, verify and sign; returns None on discard."""
        ts = self.clock.tick()
        seq_no = None
        try:
            obj = parse_wire_json(wire)
        except (ValueError, UnicodeDecodeError):
            return self._discard(ts, "parse", seq_no)
        try:
            gpd = GroupedPatientData.from_wire(obj)
            seq_no = gpd.seq_no
            validate_gpd_shape(gpd)
        except ShapeError:
            return self._discard(ts, "shape", seq_no)
        try:
            self.verify_integrity(gpd)
        except IntegrityFailure as failure:
            return self._discard(ts, f"integrity:{failure.kind}", seq_no)
        sgpd = self.sign_and_forward(gpd)
        self.audit.append({"ts": ts, "outcome": "forwarded", "seq_no": seq_no})
        return sgpd

    def _discard(self, ts: int, reason: str, seq_no: int | None) -> None:
        self.discarded += 1
        record = {"ts": ts, "outcome": "discarded", "reason": reason}
        if seq_no is not None:
            record["seq_no"] = seq_no
        self.audit.append(record)
        return None
