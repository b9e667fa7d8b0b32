"""Patient data in flight: domain types, canonical bytes, JSON wire format.

Everything that is hashed or signed goes through canonical_json_bytes: keys
sorted, no insignificant whitespace, ASCII-only output, floats as their
shortest round-trippable decimal. Wire parsing is strict (unknown keys,
non-canonical base64, uppercase or odd-length hex, and wrong JSON types are
all shape errors) so that any single-byte mutation of a wire message is
guaranteed to change the parsed bytes or fail outright.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
from dataclasses import dataclass

from .crypto import DIGEST_SIZE, NONCE_SIZE, Ciphertext, hash_bytes

SENSOR_KINDS = ("heart_rate", "spo2", "temperature", "blood_pressure")

# Plausibility ranges per sensor kind; violations are warnings, not rejections.
SENSOR_BOUNDS = {
    "heart_rate": (20.0, 300.0),
    "spo2": (50.0, 100.0),
    "temperature": (25.0, 45.0),
    "blood_pressure": (30.0, 300.0),
}


class ShapeError(ValueError):
    """A wire message or in-memory value violates a structural invariant."""


def canonical_json_bytes(value) -> bytes:
    """Deterministic JSON bytes: sorted keys, no whitespace, ASCII only."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("ascii")


def b64e(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def b64d_strict(text, what: str) -> bytes:
    """Decode base64 accepting only the canonical encoding of the result."""
    if not isinstance(text, str):
        raise ShapeError(f"{what}: expected base64 string")
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ShapeError(f"{what}: invalid base64") from exc
    if base64.b64encode(raw).decode("ascii") != text:
        raise ShapeError(f"{what}: non-canonical base64")
    return raw


def hexd_strict(text, length: int, what: str) -> bytes:
    """Decode lowercase hex of an exact byte length."""
    if not isinstance(text, str):
        raise ShapeError(f"{what}: expected hex string")
    if len(text) != 2 * length:
        raise ShapeError(f"{what}: digest length")
    if text != text.lower():
        raise ShapeError(f"{what}: non-canonical hex")
    try:
        return bytes.fromhex(text)
    except ValueError as exc:
        raise ShapeError(f"{what}: invalid hex") from exc


def _require_int(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ShapeError(f"{what}: expected integer")
    return value


def _require_keys(obj, keys: tuple[str, ...], what: str) -> dict:
    if not isinstance(obj, dict):
        raise ShapeError(f"{what}: expected object")
    if set(obj) != set(keys):
        raise ShapeError(f"{what}: keys must be exactly {sorted(keys)}")
    return obj


@dataclass(frozen=True)
class GeoCoordinate:
    """WGS84 latitude/longitude in decimal degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        object.__setattr__(self, "latitude", float(self.latitude))
        object.__setattr__(self, "longitude", float(self.longitude))
        if not (-90.0 <= self.latitude <= 90.0) or math.isnan(self.latitude):
            raise ValueError("latitude out of [-90, 90]")
        if not (-180.0 <= self.longitude <= 180.0) or math.isnan(self.longitude):
            raise ValueError("longitude out of [-180, 180]")

    def to_wire(self) -> dict:
        return {"latitude": self.latitude, "longitude": self.longitude}

    @classmethod
    def from_wire(cls, obj) -> "GeoCoordinate":
        _require_keys(obj, ("latitude", "longitude"), "coordinate")
        try:
            return cls(float(obj["latitude"]), float(obj["longitude"]))
        except (TypeError, ValueError) as exc:
            raise ShapeError(f"coordinate: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_wire())


@dataclass(frozen=True)
class PhysiologicalReading:
    """One sensor measurement. blood_pressure carries a (systolic, diastolic) pair."""

    sensor_kind: str
    value: float | tuple[float, float]
    captured_at: int  # UTC milliseconds

    def __post_init__(self):
        if self.sensor_kind not in SENSOR_KINDS:
            raise ValueError(f"unknown sensor kind {self.sensor_kind!r}")
        if self.sensor_kind == "blood_pressure":
            sys_v, dia_v = self.value
            object.__setattr__(self, "value", (float(sys_v), float(dia_v)))
        else:
            object.__setattr__(self, "value", float(self.value))

    def to_wire(self) -> dict:
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        return {
            "captured_at": self.captured_at,
            "sensor_kind": self.sensor_kind,
            "value": value,
        }

    @classmethod
    def from_wire(cls, obj) -> "PhysiologicalReading":
        _require_keys(obj, ("captured_at", "sensor_kind", "value"), "reading")
        value = obj["value"]
        if isinstance(value, list):
            if len(value) != 2:
                raise ShapeError("reading: value pair must have two entries")
            value = (value[0], value[1])
        try:
            return cls(
                obj["sensor_kind"],
                value,
                _require_int(obj["captured_at"], "reading.captured_at"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ShapeError):
                raise
            raise ShapeError(f"reading: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_wire())

    def plausibility_warnings(self) -> list[str]:
        lo, hi = SENSOR_BOUNDS[self.sensor_kind]
        values = self.value if isinstance(self.value, tuple) else (self.value,)
        return [
            f"{self.sensor_kind} value {v} outside [{lo}, {hi}]"
            for v in values
            if not lo <= v <= hi
        ]


def ciphertext_to_wire(ct: Ciphertext) -> dict:
    return {"body": b64e(ct.body), "nonce": b64e(ct.nonce)}


def ciphertext_from_wire(obj, what: str = "ciphertext") -> Ciphertext:
    _require_keys(obj, ("nonce", "body"), what)
    nonce = b64d_strict(obj["nonce"], f"{what}.nonce")
    if len(nonce) != NONCE_SIZE:
        raise ShapeError(f"{what}: nonce length")
    return Ciphertext(nonce=nonce, body=b64d_strict(obj["body"], f"{what}.body"))


def canonical_ciphertext_bytes(ct: Ciphertext) -> bytes:
    """The exact byte string whose SHA-256 is a reading's digest."""
    return canonical_json_bytes(ciphertext_to_wire(ct))


@dataclass(frozen=True)
class EncryptedReading:
    ciphertext: Ciphertext
    digest: bytes  # SHA-256 of canonical_ciphertext_bytes(ciphertext)

    def to_wire(self) -> dict:
        return {
            "ciphertext": ciphertext_to_wire(self.ciphertext),
            "digest": self.digest.hex(),
        }

    @classmethod
    def from_wire(cls, obj) -> "EncryptedReading":
        _require_keys(obj, ("ciphertext", "digest"), "encrypted reading")
        return cls(
            ciphertext=ciphertext_from_wire(obj["ciphertext"], "reading.ciphertext"),
            digest=hexd_strict(obj["digest"], DIGEST_SIZE, "reading.digest"),
        )


@dataclass(frozen=True)
class GroupedPatientData:
    """The unit of transmission: encrypted readings, identity and location."""

    identity_token: bytes
    location_ct: Ciphertext
    readings: tuple[EncryptedReading, ...]
    created_at: int  # UTC milliseconds
    seq_no: int
    group_digest: bytes

    def to_wire(self) -> dict:
        return {
            "identity_token": b64e(self.identity_token),
            "location_ct": ciphertext_to_wire(self.location_ct),
            "readings": [r.to_wire() for r in self.readings],
            "created_at": self.created_at,
            "seq_no": self.seq_no,
            "group_digest": self.group_digest.hex(),
        }

    @classmethod
    def from_wire(cls, obj) -> "GroupedPatientData":
        _require_keys(
            obj,
            (
                "identity_token",
                "location_ct",
                "readings",
                "created_at",
                "seq_no",
                "group_digest",
            ),
            "gpd",
        )
        if not isinstance(obj["readings"], list):
            raise ShapeError("gpd.readings: expected list")
        return cls(
            identity_token=b64d_strict(obj["identity_token"], "gpd.identity_token"),
            location_ct=ciphertext_from_wire(obj["location_ct"], "gpd.location_ct"),
            readings=tuple(EncryptedReading.from_wire(r) for r in obj["readings"]),
            created_at=_require_int(obj["created_at"], "gpd.created_at"),
            seq_no=_require_int(obj["seq_no"], "gpd.seq_no"),
            group_digest=hexd_strict(obj["group_digest"], DIGEST_SIZE, "gpd.group_digest"),
        )


def canonical_encode_gpd(gpd: GroupedPatientData) -> bytes:
    """Canonical bytes of a full GPD; the message covered by signatures."""
    return canonical_json_bytes(gpd.to_wire())


def compute_group_digest(
    identity_token: bytes,
    location_ct: Ciphertext,
    readings: tuple[EncryptedReading, ...] | list[EncryptedReading],
    created_at: int,
    seq_no: int,
) -> bytes:
    """SHA-256 over the canonical encoding of the digest-free group."""
    body = {
        "identity_token": b64e(identity_token),
        "location_ct": ciphertext_to_wire(location_ct),
        "readings": [r.to_wire() for r in readings],
        "created_at": created_at,
        "seq_no": seq_no,
    }
    return hash_bytes(canonical_json_bytes(body))


def validate_gpd_shape(gpd: GroupedPatientData) -> None:
    """Structural checks only; nothing is decrypted here."""
    if not gpd.readings:
        raise ShapeError("readings empty")
    if len(gpd.group_digest) != DIGEST_SIZE:
        raise ShapeError("digest length")
    for index, reading in enumerate(gpd.readings):
        if len(reading.digest) != DIGEST_SIZE:
            raise ShapeError(f"digest length (reading {index})")
        if len(reading.ciphertext.nonce) != NONCE_SIZE:
            raise ShapeError(f"nonce length (reading {index})")
    if len(gpd.location_ct.nonce) != NONCE_SIZE:
        raise ShapeError("nonce length (location)")
    if not gpd.identity_token:
        raise ShapeError("identity token empty")
    if gpd.seq_no < 1:
        raise ShapeError("seq_no must be >= 1")
    if gpd.created_at < 0:
        raise ShapeError("created_at negative")


@dataclass(frozen=True)
class SignatureEnvelope:
    key_id: str  # 16 hex chars (8-byte fingerprint)
    sig: bytes

    def to_wire(self) -> dict:
        return {"key_id": self.key_id, "sig": b64e(self.sig)}

    @classmethod
    def from_wire(cls, obj, what: str = "signature") -> "SignatureEnvelope":
        _require_keys(obj, ("key_id", "sig"), what)
        key_id = obj["key_id"]
        hexd_strict(key_id, 8, f"{what}.key_id")
        return cls(key_id=key_id, sig=b64d_strict(obj["sig"], f"{what}.sig"))


@dataclass(frozen=True)
class SignedGPD:
    gpd: GroupedPatientData
    edge_sig: SignatureEnvelope
    vn_sig: SignatureEnvelope | None = None

    def to_wire(self) -> dict:
        return {
            "gpd": self.gpd.to_wire(),
            "edge_sig": self.edge_sig.to_wire(),
            "vn_sig": self.vn_sig.to_wire() if self.vn_sig else None,
        }

    @classmethod
    def from_wire(cls, obj) -> "SignedGPD":
        _require_keys(obj, ("gpd", "edge_sig", "vn_sig"), "signed gpd")
        vn_sig = obj["vn_sig"]
        return cls(
            gpd=GroupedPatientData.from_wire(obj["gpd"]),
            edge_sig=SignatureEnvelope.from_wire(obj["edge_sig"], "edge_sig"),
            vn_sig=None if vn_sig is None else SignatureEnvelope.from_wire(vn_sig, "vn_sig"),
        )


def vn_signing_message(sgpd: SignedGPD) -> bytes:
    """What the verification node countersigns: gpd bytes ++ edge signature."""
    return canonical_encode_gpd(sgpd.gpd) + sgpd.edge_sig.sig


def parse_wire_json(raw: bytes):
    """Parse wire bytes as JSON; ValueError on undecodable input."""
    return json.loads(raw.decode("utf-8"))
