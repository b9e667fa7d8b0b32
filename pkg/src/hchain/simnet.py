"""Deterministic in-process transport with pluggable adversaries.

Wires PED -> HCP-E -> VN -> ledger as a single-threaded event loop over
ordered queues. Adversary policies model the threat scenarios: in-transit
tampering, replay of a previous message, signature forgery, and transmission
from outside the registered home area. Attacks are silent, exactly as a real
man-in-the-middle would be; equal seeds give identical runs.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from .audit import AuditLog
from .clock import LogicalClock
from .crypto import (
    RandomSource,
    SignatureKeyPair,
    deterministic_encrypt_identity,
    generate_secret_key,
    hash_bytes,
)
from .directory import DirectoryStore
from .hcp_edge import HcpEdgeDevice
from .ledger import Account, Chain, Role, make_transaction, save_chain
from .patient_edge import PatientEdgeConfig, PatientEdgeDevice
from .payload import (
    GeoCoordinate,
    PhysiologicalReading,
    SENSOR_KINDS,
    SignatureEnvelope,
    SignedGPD,
    canonical_encode_gpd,
    canonical_json_bytes,
    parse_wire_json,
)
from .verification_node import EARTH_RADIUS_M, VerificationNode


class ConfigError(ValueError):
    """Scenario topology or adversary settings are inconsistent."""


class AdversaryKind(str, Enum):
    NONE = "none"
    TAMPER_RANDOM_BYTE = "tamper_random_byte"
    REPLAY_PREVIOUS = "replay_previous"
    INJECT_FORGED = "inject_forged"
    REROUTE_WRONG_LOCATION = "reroute_wrong_location"


@dataclass(frozen=True)
class AdversaryPolicy:
    kind: AdversaryKind = AdversaryKind.NONE
    probability: float = 1.0
    seed: int = 0
    channel: str = "ped_to_hcpe"  # "ped_to_hcpe" | "hcpe_to_vn"

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError("adversary probability must be in [0, 1]")
        if self.channel not in ("ped_to_hcpe", "hcpe_to_vn"):
            raise ConfigError(f"unknown channel {self.channel!r}")


class Channel:
    """Ordered message queue; an optional adversary rewrites traffic."""

    def __init__(
        self,
        name: str,
        adversary: AdversaryPolicy | None = None,
        forge: Optional[Callable[[bytes], bytes]] = None,
    ):
        self.name = name
        self.adversary = adversary
        self.forge = forge
        self.queue: deque[bytes] = deque()
        self.delivered = 0
        self.tampered = 0
        self.replayed = 0
        self.forged = 0
        self._previous: bytes | None = None
        self._rng = random.Random(adversary.seed) if adversary else None
        if (
            adversary
            and adversary.kind is AdversaryKind.INJECT_FORGED
            and forge is None
        ):
            raise ConfigError("inject_forged requires a forge function")

    def _attack_now(self) -> bool:
        return self._rng.random() < self.adversary.probability

    def send(self, message: bytes) -> None:
        kind = self.adversary.kind if self.adversary else AdversaryKind.NONE
        if kind is AdversaryKind.TAMPER_RANDOM_BYTE and self._attack_now():
            position = self._rng.randrange(len(message))
            flip = self._rng.randrange(1, 256)
            mutated = bytearray(message)
            mutated[position] ^= flip
            self.queue.append(bytes(mutated))
            self.tampered += 1
        elif kind is AdversaryKind.INJECT_FORGED and self._attack_now():
            self.queue.append(self.forge(message))
            self.forged += 1
        elif kind is AdversaryKind.REPLAY_PREVIOUS:
            self.queue.append(message)
            if self._previous is not None and self._attack_now():
                self.queue.append(self._previous)
                self.replayed += 1
            self._previous = message
        else:
            self.queue.append(message)

    def drain(self) -> list[bytes]:
        messages = list(self.queue)
        self.queue.clear()
        self.delivered += len(messages)
        return messages

    def counters(self) -> dict:
        return {
            "delivered": self.delivered,
            "tampered": self.tampered,
            "replayed": self.replayed,
            "forged": self.forged,
        }


def offset_coordinate(origin: GeoCoordinate, north_m: float) -> GeoCoordinate:
    """Move a coordinate due north by the given number of meters."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    return GeoCoordinate(origin.latitude + dlat, origin.longitude)


@dataclass
class PatientSpec:
    identity: str
    home: GeoCoordinate
    location_offset_m: float = 0.0  # transmissions originate this far north of home
    register_in_directory: bool = True

    def to_wire(self) -> dict:
        return {
            "identity": self.identity,
            "home": self.home.to_wire(),
            "location_offset_m": self.location_offset_m,
            "register_in_directory": self.register_in_directory,
        }

    @classmethod
    def from_wire(cls, obj) -> "PatientSpec":
        return cls(
            identity=obj["identity"],
            home=GeoCoordinate.from_wire(obj["home"]),
            location_offset_m=float(obj.get("location_offset_m", 0.0)),
            register_in_directory=bool(obj.get("register_in_directory", True)),
        )


DEFAULT_HOME = GeoCoordinate(33.2148, -97.1331)


@dataclass
class ScenarioSpec:
    seed: int = 42
    batch_size: int = 5
    readings_per_patient: int = 20
    home_radius_m: float = 100.0
    patients: list[PatientSpec] = field(default_factory=list)
    adversary: AdversaryPolicy = field(default_factory=AdversaryPolicy)
    master_key: bytes | None = None

    def __post_init__(self):
        if not self.patients:
            self.patients = [PatientSpec(identity="patient-001", home=DEFAULT_HOME)]
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.readings_per_patient < 0:
            raise ConfigError("readings_per_patient must be >= 0")
        if self.home_radius_m <= 0:
            raise ConfigError("home_radius_m must be positive")

    def to_wire(self) -> dict:
        return {
            "seed": self.seed,
            "batch_size": self.batch_size,
            "readings_per_patient": self.readings_per_patient,
            "home_radius_m": self.home_radius_m,
            "patients": [p.to_wire() for p in self.patients],
            "adversary": {
                "kind": self.adversary.kind.value,
                "probability": self.adversary.probability,
                "seed": self.adversary.seed,
                "channel": self.adversary.channel,
            },
        }

    @classmethod
    def from_wire(cls, obj) -> "ScenarioSpec":
        adv = obj.get("adversary", {})
        try:
            kind = AdversaryKind(adv.get("kind", "none"))
        except ValueError:
            raise ConfigError(f"unknown adversary kind {adv.get('kind')!r}") from None
        return cls(
            seed=int(obj.get("seed", 42)),
            batch_size=int(obj.get("batch_size", 5)),
            readings_per_patient=int(obj.get("readings_per_patient", 20)),
            home_radius_m=float(obj.get("home_radius_m", 100.0)),
            patients=[PatientSpec.from_wire(p) for p in obj.get("patients", [])],
            adversary=AdversaryPolicy(
                kind=kind,
                probability=float(adv.get("probability", 1.0)),
                seed=int(adv.get("seed", 0)),
                channel=adv.get("channel", "ped_to_hcpe"),
            ),
        )


def load_scenario_spec(path: Path | str) -> ScenarioSpec:
    """Read a scenario spec from a JSON file."""
    try:
        obj = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise ConfigError(f"scenario spec is not valid JSON: {exc}") from exc
    return ScenarioSpec.from_wire(obj)


@dataclass
class PatientRuntime:
    spec: PatientSpec
    secret_key: bytes
    account: Account
    ledger_patient_id: str
    device: PatientEdgeDevice
    plaintext_readings: list[PhysiologicalReading] = field(default_factory=list)


@dataclass
class ScenarioResult:
    """Everything a caller may need after a run; report is the wire artifact."""

    report: dict
    chain: Chain
    directory: DirectoryStore
    patients: list[PatientRuntime]
    master_key: bytes
    accounts: dict[str, Account]
    edge_keypair: SignatureKeyPair
    vn_keypair: SignatureKeyPair
    hcp_audit: AuditLog
    vn_audit: AuditLog

    def report_bytes(self) -> bytes:
        return canonical_json_bytes(self.report)


def ledger_patient_id_for_token(token: bytes) -> str:
    """Opaque on-chain patient id; never reveals the identity string."""
    return "uid-" + hash_bytes(token)[:8].hex()


def _random_reading(rng: RandomSource, clock: LogicalClock) -> PhysiologicalReading:
    kind = SENSOR_KINDS[rng.randrange(len(SENSOR_KINDS))]
    if kind == "heart_rate":
        value = 50 + rng.randrange(1000) / 10.0  # 50.0 .. 149.9 bpm
    elif kind == "spo2":
        value = 90 + rng.randrange(100) / 10.0  # 90.0 .. 99.9 %
    elif kind == "temperature":
        value = 36 + rng.randrange(30) / 10.0  # 36.0 .. 38.9 C
    else:
        value = (90.0 + rng.randrange(90), 60.0 + rng.randrange(60))
    return PhysiologicalReading(sensor_kind=kind, value=value, captured_at=clock.tick())


def make_forger(attacker: SignatureKeyPair) -> Callable[[bytes], bytes]:
    """Re-sign an intercepted SignedGPD under the attacker's own keypair."""

    def forge(message: bytes) -> bytes:
        try:
            sgpd = SignedGPD.from_wire(parse_wire_json(message))
        except Exception:
            return message
        forged = SignedGPD(
            gpd=sgpd.gpd,
            edge_sig=SignatureEnvelope(
                key_id=attacker.key_id,
                sig=attacker.sign(canonical_encode_gpd(sgpd.gpd)),
            ),
            vn_sig=None,
        )
        return canonical_json_bytes(forged.to_wire())

    return forge


def run_scenario(spec: ScenarioSpec, data_dir: Path | str | None = None) -> ScenarioResult:
    """Drive the whole pipeline under one scenario; deterministic per seed."""
    out_dir = Path(data_dir) if data_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    rng = RandomSource(spec.seed)
    clock = LogicalClock()

    admin = Account.generate(rng)
    registrar = Account.generate(rng)
    hcp = Account.generate(rng)
    edge_keypair = SignatureKeyPair.generate(rng)
    vn_keypair = SignatureKeyPair.generate(rng)
    attacker = SignatureKeyPair.generate(RandomSource(spec.adversary.seed ^ 0xA77AC))
    # Drawn unconditionally so the rest of the stream (patient keys, nonces)
    # does not depend on whether a master key was supplied.
    derived_master = generate_secret_key(rng)
    master_key = spec.master_key or derived_master

    chain = Chain.genesis(admin, clock)
    chain.submit(
        make_transaction(
            admin,
            "add_membership",
            {"address": registrar.address, "role": Role.HCP_REGISTRATION.value},
        )
    )
    chain.submit(
        make_transaction(
            registrar,
            "add_membership",
            {"address": hcp.address, "role": Role.HCP.value},
        )
    )

    directory = DirectoryStore(
        master_key,
        path=out_dir / "directory.store" if out_dir else None,
        clock=clock,
        rng=rng,
    )

    hcp_audit = AuditLog(out_dir / "hcp_edge_audit.jsonl" if out_dir else None)
    vn_audit = AuditLog(out_dir / "vn_audit.jsonl" if out_dir else None)
    hcp_edge = HcpEdgeDevice(edge_keypair, clock=clock, audit=hcp_audit)
    vn = VerificationNode(
        vn_keypair,
        trusted_edge_keys={edge_keypair.key_id: edge_keypair.public_bytes},
        directory=directory,
        chain=chain,
        hcp_account=hcp,
        home_radius_m=spec.home_radius_m,
        clock=clock,
        audit=vn_audit,
    )

    patients: list[PatientRuntime] = []
    for pspec in spec.patients:
        secret_key = generate_secret_key(rng)
        account = Account.generate(rng)
        token = deterministic_encrypt_identity(secret_key, pspec.identity)
        ledger_pid = ledger_patient_id_for_token(token)
        if pspec.register_in_directory:
            directory.register_patient(
                pspec.identity, secret_key, pspec.home, ledger_pid
            )
        chain.submit(
            make_transaction(
                hcp,
                "register_patient",
                {"patient_id": ledger_pid, "patient_account": account.address},
            )
        )
        source_location = (
            offset_coordinate(pspec.home, pspec.location_offset_m)
            if pspec.location_offset_m
            else pspec.home
        )
        device = PatientEdgeDevice(
            PatientEdgeConfig(
                patient_identity=pspec.identity,
                secret_key=secret_key,
                home_location=pspec.home,
                batch_size=spec.batch_size,
                location_source=lambda loc=source_location: loc,
            ),
            clock=clock,
            rng=rng,
        )
        patients.append(
            PatientRuntime(
                spec=pspec,
                secret_key=secret_key,
                account=account,
                ledger_patient_id=ledger_pid,
                device=device,
            )
        )

    adversary = spec.adversary if spec.adversary.kind is not AdversaryKind.NONE else None
    ped_to_hcpe = Channel(
        "ped_to_hcpe",
        adversary if adversary and adversary.channel == "ped_to_hcpe" else None,
    )
    hcpe_to_vn = Channel(
        "hcpe_to_vn",
        adversary if adversary and adversary.channel == "hcpe_to_vn" else None,
        forge=make_forger(attacker),
    )

    readings_ingested = 0
    gpds_emitted = 0
    vn_received = 0
    accepted = 0

    def pump() -> None:
        nonlocal vn_received, accepted
        for wire in ped_to_hcpe.drain():
            sgpd = hcp_edge.handle_incoming(wire)
            if sgpd is not None:
                hcpe_to_vn.send(canonical_json_bytes(sgpd.to_wire()))
        for wire in hcpe_to_vn.drain():
            vn_received += 1
            if vn.process(wire) is not None:
                accepted += 1

    for _ in range(spec.readings_per_patient):
        for patient in patients:
            reading = _random_reading(rng, clock)
            patient.plaintext_readings.append(reading)
            readings_ingested += 1
            gpd = patient.device.ingest_reading(reading)
            if gpd is not None:
                gpds_emitted += 1
                ped_to_hcpe.send(canonical_json_bytes(gpd.to_wire()))
                pump()

    rejected = {"sig": 0, "loc": 0, "id": 0, "replay": 0, "tx": 0}
    for record in vn_audit.records:
        if record["outcome"] == "reject":
            rejected[record["stage"]] += 1
    discard_reasons: dict[str, int] = {}
    for record in hcp_audit.records:
        if record["outcome"] == "discarded":
            reason = record["reason"]
            discard_reasons[reason] = discard_reasons.get(reason, 0) + 1

    ledger_entries = sum(len(v) for v in chain.state.patients.values())
    report = {
        "spec": spec.to_wire(),
        "readings_ingested": readings_ingested,
        "gpds_emitted": gpds_emitted,
        "channels": {
            "ped_to_hcpe": ped_to_hcpe.counters(),
            "hcpe_to_vn": hcpe_to_vn.counters(),
        },
        "hcp_edge": {
            "forwarded": hcp_edge.accepted,
            "discarded": hcp_edge.discarded,
            "discard_reasons": discard_reasons,
        },
        "vn": {
            "received": vn_received,
            "accepted": accepted,
            "rejected": rejected,
        },
        "ledger_entries": ledger_entries,
        "chain_length": len(chain.blocks),
    }

    if out_dir is not None:
        save_chain(chain.blocks, out_dir / "chain.jsonl")
        (out_dir / "state.json").write_bytes(chain.state.canonical_bytes())
        (out_dir / "report.json").write_bytes(canonical_json_bytes(report))

    return ScenarioResult(
        report=report,
        chain=chain,
        directory=directory,
        patients=patients,
        master_key=master_key,
        accounts={"admin": admin, "registrar": registrar, "hcp": hcp},
        edge_keypair=edge_keypair,
        vn_keypair=vn_keypair,
        hcp_audit=hcp_audit,
        vn_audit=vn_audit,
    )
