"""Provider-internal secured directory.

Maps deterministic identity tokens to the patient's encrypted home coordinate
and escrowed secret key. Nothing in the persisted file is plaintext: each
record is serialized, AEAD-encrypted under the directory master key and
stored as an opaque blob keyed by the token's hex; the coordinate and key
inside the record are additionally ciphertexts under the same master key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .clock import LogicalClock
from .crypto import (
    Ciphertext,
    RandomSource,
    deterministic_encrypt_identity,
    symmetric_decrypt,
    symmetric_encrypt,
)
from .payload import (
    GeoCoordinate,
    b64d_strict,
    b64e,
    canonical_json_bytes,
    ciphertext_from_wire,
    ciphertext_to_wire,
)


class DuplicateIdentityError(Exception):
    """The identity token is already enrolled."""


@dataclass(frozen=True)
class DirectoryRecord:
    identity_token: bytes
    home_location_ct: Ciphertext
    escrowed_patient_key_ct: Ciphertext
    ledger_patient_id: str
    enrolled_at: int

    def to_wire(self) -> dict:
        return {
            "identity_token": b64e(self.identity_token),
            "home_location_ct": ciphertext_to_wire(self.home_location_ct),
            "escrowed_patient_key_ct": ciphertext_to_wire(self.escrowed_patient_key_ct),
            "ledger_patient_id": self.ledger_patient_id,
            "enrolled_at": self.enrolled_at,
        }

    @classmethod
    def from_wire(cls, obj) -> "DirectoryRecord":
        return cls(
            identity_token=b64d_strict(obj["identity_token"], "record.identity_token"),
            home_location_ct=ciphertext_from_wire(obj["home_location_ct"]),
            escrowed_patient_key_ct=ciphertext_from_wire(obj["escrowed_patient_key_ct"]),
            ledger_patient_id=obj["ledger_patient_id"],
            enrolled_at=obj["enrolled_at"],
        )


class DirectoryStore:
    """Encrypted keyed store; registrations are serialized, reads are pure."""

    def __init__(
        self,
        master_key: bytes,
        path: Path | str | None = None,
        clock: LogicalClock | None = None,
        rng: RandomSource | None = None,
    ):
        self.master_key = master_key
        self.path = Path(path) if path is not None else None
        self.clock = clock or LogicalClock()
        self.rng = rng
        # token bytes -> encrypted record blob
        self._blobs: dict[bytes, Ciphertext] = {}

    @classmethod
    def load(
        cls,
        master_key: bytes,
        path: Path | str,
        clock: LogicalClock | None = None,
        rng: RandomSource | None = None,
    ) -> "DirectoryStore":
        store = cls(master_key, path, clock, rng)
        raw = json.loads(Path(path).read_text(encoding="ascii"))
        for token_hex, blob in raw["records"].items():
            store._blobs[bytes.fromhex(token_hex)] = Ciphertext(
                nonce=b64d_strict(blob["nonce"], "store.nonce"),
                body=b64d_strict(blob["blob"], "store.blob"),
            )
        return store

    def register_patient(
        self,
        identity: str,
        patient_key: bytes,
        home: GeoCoordinate,
        ledger_patient_id: str,
    ) -> DirectoryRecord:
        """Enroll a patient; the token doubles as the lookup key."""
        token = deterministic_encrypt_identity(patient_key, identity)
        if token in self._blobs:
            raise DuplicateIdentityError("identity already registered")
        record = DirectoryRecord(
            identity_token=token,
            home_location_ct=symmetric_encrypt(
                self.master_key, home.canonical_bytes(), self.rng
            ),
            escrowed_patient_key_ct=symmetric_encrypt(
                self.master_key, patient_key, self.rng
            ),
            ledger_patient_id=ledger_patient_id,
            enrolled_at=self.clock.tick(),
        )
        blob = symmetric_encrypt(
            self.master_key, canonical_json_bytes(record.to_wire()), self.rng
        )
        self._blobs[token] = blob
        self._persist()
        return record

    def lookup(self, token: bytes) -> DirectoryRecord | None:
        """Byte-equality match; None when the token is not enrolled."""
        blob = self._blobs.get(token)
        if blob is None:
            return None
        plaintext = symmetric_decrypt(self.master_key, blob)
        return DirectoryRecord.from_wire(json.loads(plaintext.decode("ascii")))

    def fetch_home_coordinate(self, record: DirectoryRecord) -> GeoCoordinate:
        raw = symmetric_decrypt(self.master_key, record.home_location_ct)
        return GeoCoordinate.from_wire(json.loads(raw.decode("ascii")))

    def fetch_patient_key(self, record: DirectoryRecord) -> bytes:
        return symmetric_decrypt(self.master_key, record.escrowed_patient_key_ct)

    def tokens(self) -> list[bytes]:
        return sorted(self._blobs)

    def _persist(self) -> None:
        if self.path is None:
            return
        wire = {
            "records": {
                token.hex(): {"blob": b64e(ct.body), "nonce": b64e(ct.nonce)}
                for token, ct in sorted(self._blobs.items())
            }
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            canonical_json_bytes(wire).decode("ascii"), encoding="ascii"
        )
