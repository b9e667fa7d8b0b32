"""Patient edge device: encrypts, hashes and groups readings into GPDs.

The device holds the patient secret key on behalf of the constrained sensor,
buffers encrypted readings, and emits a grouped payload every batch_size
readings with the encrypted identity and current location attached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .clock import LogicalClock
from .crypto import (
    RandomSource,
    deterministic_encrypt_identity,
    hash_bytes,
    symmetric_encrypt,
)
from .payload import (
    EncryptedReading,
    GeoCoordinate,
    GroupedPatientData,
    PhysiologicalReading,
    canonical_ciphertext_bytes,
    compute_group_digest,
)


class EmptyBatchError(ValueError):
    """A GPD cannot be built from zero readings."""


@dataclass
class PatientEdgeConfig:
    patient_identity: str
    secret_key: bytes
    home_location: GeoCoordinate
    batch_size: int = 5
    # Called once per emission; defaults to the registered home location.
    location_source: Optional[Callable[[], GeoCoordinate]] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class PatientEdgeDevice:
    def __init__(
        self,
        config: PatientEdgeConfig,
        clock: LogicalClock | None = None,
        rng: RandomSource | None = None,
    ):
        self.config = config
        self.clock = clock or LogicalClock()
        self.rng = rng
        self._buffer: list[EncryptedReading] = []
        self._next_seq = 1
        self.identity_token = deterministic_encrypt_identity(
            config.secret_key, config.patient_identity
        )

    def current_location(self) -> GeoCoordinate:
        if self.config.location_source is not None:
            return self.config.location_source()
        return self.config.home_location

    def encrypt_reading(self, reading: PhysiologicalReading) -> EncryptedReading:
        ct = symmetric_encrypt(
            self.config.secret_key, reading.canonical_bytes(), self.rng
        )
        return EncryptedReading(
            ciphertext=ct, digest=hash_bytes(canonical_ciphertext_bytes(ct))
        )

    def ingest_reading(
        self, reading: PhysiologicalReading
    ) -> GroupedPatientData | None:
        """Buffer one reading; returns an emitted GPD when the batch fills."""
        self._buffer.append(self.encrypt_reading(reading))
        if len(self._buffer) < self.config.batch_size:
            return None
        gpd = self.build_gpd(self._buffer, self.clock.tick())
        self._buffer = []
        return gpd

    def build_gpd(
        self, readings: list[EncryptedReading], now_ms: int
    ) -> GroupedPatientData:
        """Assemble a GPD around the buffered readings and bump seq_no."""
        if not readings:
            raise EmptyBatchError("no readings to group")
        location_ct = symmetric_encrypt(
            self.config.secret_key, self.current_location().canonical_bytes(), self.rng
        )
        readings_t = tuple(readings)
        seq_no = self._next_seq
        self._next_seq += 1
        digest = compute_group_digest(
            self.identity_token, location_ct, readings_t, now_ms, seq_no
        )
        return GroupedPatientData(
            identity_token=self.identity_token,
            location_ct=location_ct,
            readings=readings_t,
            created_at=now_ms,
            seq_no=seq_no,
            group_digest=digest,
        )
