"""Run configuration and the operations behind the service and CLI.

Config precedence: JSON config file, then explicit flag overrides, then the
HCHAIN_MASTER_KEY environment variable for the master key. Every operation
works against a data directory holding chain.jsonl, directory.store, the
audit logs and keys.json (the simulator's provisioning store for account and
device keys, written by demo so that later access commands can act as the
patient, provider or grantee).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .bench import DEFAULT_SIZES, emit_csv, run_bench
from .crypto import (
    AuthenticationFailure,
    KEY_SIZE,
    RandomSource,
    SignatureKeyPair,
    symmetric_decrypt,
)
from .directory import DirectoryStore
from .ledger import (
    Account,
    Chain,
    ChainCorruption,
    ContractRejection,
    load_chain,
    make_transaction,
    replay_state,
    save_chain,
    validate_chain,
)
from .payload import (
    PhysiologicalReading,
    ciphertext_from_wire,
    parse_wire_json,
)
from .simnet import (
    AdversaryKind,
    AdversaryPolicy,
    ConfigError,
    DEFAULT_HOME,
    PatientSpec,
    ScenarioSpec,
    run_scenario,
)

MASTER_KEY_ENV = "HCHAIN_MASTER_KEY"

DEMO_READINGS = 20
DEMO_IDENTITY = "patient-001"

ATTACK_KINDS = ("tamper", "replay", "forge-signature", "wrong-location", "bad-identity")

# Attack kind -> stage at which the protocol must reject the attacked messages.
ATTACK_EXPECTED_STAGE = {
    "tamper": "integrity",
    "replay": "replay",
    "forge-signature": "sig",
    "wrong-location": "loc",
    "bad-identity": "id",
}


@dataclass
class RunConfig:
    seed: int = 42
    home_radius_m: float = 100.0
    batch_size: int = 5
    data_dir: Path = field(default_factory=lambda: Path("./hchain-data"))
    master_key: bytes | None = None
    location_offset_m: float = 0.0  # lets demos simulate transmitting away from home

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)


def resolve_config(
    config_path: Path | str | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Merge config file, flag overrides and environment into a RunConfig."""
    env = os.environ if env is None else env
    values: dict = {}
    if config_path is not None:
        try:
            values.update(json.loads(Path(config_path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    if env.get(MASTER_KEY_ENV):
        values["master_key"] = env[MASTER_KEY_ENV]

    known = {"seed", "home_radius_m", "batch_size", "data_dir", "master_key", "location_offset_m"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    master_key = values.get("master_key")
    if isinstance(master_key, str):
        try:
            master_key = bytes.fromhex(master_key)
        except ValueError as exc:
            raise ConfigError("master_key must be hex") from exc
    if master_key is not None and len(master_key) != KEY_SIZE:
        raise ConfigError(f"master_key must be {KEY_SIZE} bytes of hex")

    try:
        return RunConfig(
            seed=int(values.get("seed", 42)),
            home_radius_m=float(values.get("home_radius_m", 100.0)),
            batch_size=int(values.get("batch_size", 5)),
            data_dir=Path(values.get("data_dir", "./hchain-data")),
            master_key=master_key,
            location_offset_m=float(values.get("location_offset_m", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def _write_keys_file(result, config: RunConfig, extra_accounts: dict[str, Account]) -> Path:
    keys = {
        "master_key": result.master_key.hex(),
        "accounts": {
            name: {
                "address": account.address,
                "private": account.keypair.private_bytes().hex(),
            }
            for name, account in {**result.accounts, **extra_accounts}.items()
        },
        "edge": {
            "key_id": result.edge_keypair.key_id,
            "private": result.edge_keypair.private_bytes().hex(),
        },
        "vn": {
            "key_id": result.vn_keypair.key_id,
            "private": result.vn_keypair.private_bytes().hex(),
        },
        "patients": {
            p.spec.identity: {
                "ledger_patient_id": p.ledger_patient_id,
                "token": p.device.identity_token.hex(),
                "address": p.account.address,
                "private": p.account.keypair.private_bytes().hex(),
            }
            for p in result.patients
        },
    }
    path = config.data_dir / "keys.json"
    path.write_text(json.dumps(keys, indent=2, sort_keys=True))
    return path


def _load_keys_file(config: RunConfig) -> dict:
    path = config.data_dir / "keys.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run demo first")
    return json.loads(path.read_text())


def demo_scenario(config: RunConfig) -> ScenarioSpec:
    return ScenarioSpec(
        seed=config.seed,
        batch_size=config.batch_size,
        readings_per_patient=DEMO_READINGS,
        home_radius_m=config.home_radius_m,
        patients=[
            PatientSpec(
                identity=DEMO_IDENTITY,
                home=DEFAULT_HOME,
                location_offset_m=config.location_offset_m,
            )
        ],
        master_key=config.master_key,
    )


def run_demo(config: RunConfig) -> dict:
    """Bootstrap, enroll, stream 20 readings, persist all artifacts."""
    spec = demo_scenario(config)
    result = run_scenario(spec, data_dir=config.data_dir)
    # One extra provider account so access grants have a grantee to point at.
    specialist = Account.generate(RandomSource(config.seed ^ 0x5A5A5A))
    _write_keys_file(result, config, {"specialist": specialist})

    report = result.report
    expected_entries = DEMO_READINGS // config.batch_size
    ok = (
        report["ledger_entries"] == expected_entries
        and report["gpds_emitted"] == expected_entries
        and report["vn"]["accepted"] == expected_entries
    )
    return {
        "status": "ok" if ok else "rejected",
        "report": report,
        "expected_entries": expected_entries,
        "chain_length": report["chain_length"],
        "patient_id": result.patients[0].ledger_patient_id,
        "data_dir": str(config.data_dir),
    }


def attack_scenario(config: RunConfig, kind: str) -> ScenarioSpec:
    if kind not in ATTACK_KINDS:
        raise ConfigError(f"unknown attack kind {kind!r}; choose from {ATTACK_KINDS}")
    patient = PatientSpec(identity=DEMO_IDENTITY, home=DEFAULT_HOME)
    adversary = AdversaryPolicy()
    if kind == "tamper":
        adversary = AdversaryPolicy(
            kind=AdversaryKind.TAMPER_RANDOM_BYTE,
            probability=1.0,
            seed=config.seed ^ 0x7A3,
            channel="ped_to_hcpe",
        )
    elif kind == "replay":
        adversary = AdversaryPolicy(
            kind=AdversaryKind.REPLAY_PREVIOUS,
            probability=1.0,
            seed=config.seed ^ 0x7A3,
            channel="ped_to_hcpe",
        )
    elif kind == "forge-signature":
        adversary = AdversaryPolicy(
            kind=AdversaryKind.INJECT_FORGED,
            probability=1.0,
            seed=config.seed ^ 0x7A3,
            channel="hcpe_to_vn",
        )
    elif kind == "wrong-location":
        adversary = AdversaryPolicy(kind=AdversaryKind.REROUTE_WRONG_LOCATION)
        patient = PatientSpec(
            identity=DEMO_IDENTITY, home=DEFAULT_HOME, location_offset_m=5_000.0
        )
    elif kind == "bad-identity":
        patient = PatientSpec(
            identity=DEMO_IDENTITY, home=DEFAULT_HOME, register_in_directory=False
        )
    return ScenarioSpec(
        seed=config.seed,
        batch_size=config.batch_size,
        readings_per_patient=DEMO_READINGS,
        home_radius_m=config.home_radius_m,
        patients=[patient],
        adversary=adversary,
        master_key=config.master_key,
    )


def run_attack(config: RunConfig, kind: str) -> dict:
    """Run one adversarial scenario and judge containment."""
    spec = attack_scenario(config, kind)
    result = run_scenario(spec, data_dir=config.data_dir)
    report = result.report
    emitted = report["gpds_emitted"]
    entries = report["ledger_entries"]
    rejected = report["vn"]["rejected"]
    expected_stage = ATTACK_EXPECTED_STAGE[kind]

    if kind == "tamper":
        attacked = report["channels"]["ped_to_hcpe"]["tampered"]
        rejections_at_stage = report["hcp_edge"]["discarded"]
        stored_attacked = entries  # p=1.0: everything on chain would be attacked
    elif kind == "replay":
        attacked = report["channels"]["ped_to_hcpe"]["replayed"]
        rejections_at_stage = rejected["replay"]
        stored_attacked = max(0, entries - emitted)  # duplicates beyond the originals
    elif kind == "forge-signature":
        attacked = report["channels"]["hcpe_to_vn"]["forged"]
        rejections_at_stage = rejected["sig"]
        stored_attacked = entries
    elif kind == "wrong-location":
        attacked = emitted
        rejections_at_stage = rejected["loc"]
        stored_attacked = entries
    else:  # bad-identity
        attacked = emitted
        rejections_at_stage = rejected["id"]
        stored_attacked = entries

    contained = attacked > 0 and stored_attacked == 0 and rejections_at_stage == attacked
    return {
        "status": "ok" if contained else "rejected",
        "kind": kind,
        "expected_stage": expected_stage,
        "attacked": attacked,
        "rejections_at_stage": rejections_at_stage,
        "stored_attacked": stored_attacked,
        "report": report,
        "data_dir": str(config.data_dir),
    }


def _resolve_master_key(config: RunConfig, keys: dict) -> bytes:
    if config.master_key is not None:
        return config.master_key
    return bytes.fromhex(keys["master_key"])


def _account_from_hex(private_hex: str) -> Account:
    return Account(SignatureKeyPair.from_private_bytes(bytes.fromhex(private_hex)))


def _resolve_patient(keys: dict, patient: str) -> tuple[str, dict]:
    """Accept either the plaintext identity or the on-chain patient id."""
    patients = keys.get("patients", {})
    if patient in patients:
        return patient, patients[patient]
    for identity, info in patients.items():
        if info["ledger_patient_id"] == patient:
            return identity, info
    raise ConfigError(f"unknown patient {patient!r}")


def _resolve_grantee(keys: dict, grantee: str) -> str:
    accounts = keys.get("accounts", {})
    if grantee in accounts:
        return accounts[grantee]["address"]
    return grantee  # assume a literal address


def _grantee_account(keys: dict, grantee: str) -> Account:
    accounts = keys.get("accounts", {})
    if grantee in accounts:
        return _account_from_hex(accounts[grantee]["private"])
    for info in accounts.values():
        if info["address"] == grantee:
            return _account_from_hex(info["private"])
    raise ConfigError(f"no key material for grantee {grantee!r}")


def run_access(config: RunConfig, action: str, patient: str, grantee: str | None) -> dict:
    """Submit grant/revoke/read against the persisted chain."""
    if action not in ("grant", "revoke", "read"):
        raise ConfigError(f"unknown access action {action!r}")
    if action in ("grant", "revoke") and not grantee:
        raise ConfigError(f"{action} requires --grantee")

    keys = _load_keys_file(config)
    chain_path = config.data_dir / "chain.jsonl"
    if not chain_path.exists():
        raise FileNotFoundError(f"{chain_path} not found; run demo first")
    chain = Chain.from_blocks(load_chain(chain_path))

    identity, patient_info = _resolve_patient(keys, patient)
    patient_account = _account_from_hex(patient_info["private"])
    patient_id = patient_info["ledger_patient_id"]

    try:
        if action in ("grant", "revoke"):
            grantee_addr = _resolve_grantee(keys, grantee)
            receipt = chain.submit(
                make_transaction(
                    patient_account,
                    "grant_access" if action == "grant" else "revoke_access",
                    {"patient_id": patient_id, "grantee": grantee_addr},
                )
            )
            outcome = {
                "status": "ok",
                "action": action,
                "patient_id": patient_id,
                "grantee": grantee_addr,
                "block_index": receipt.block_index,
            }
        else:
            caller = (
                _grantee_account(keys, _resolve_grantee(keys, grantee))
                if grantee
                else patient_account
            )
            receipt = chain.submit(
                make_transaction(caller, "read_records", {"patient_id": patient_id})
            )
            entries = receipt.result
            decryptable = _count_decryptable(config, keys, patient_info, entries)
            outcome = {
                "status": "ok",
                "action": "read",
                "patient_id": patient_id,
                "entries": len(entries),
                "readings": sum(len(e["signed_gpd"]["gpd"]["readings"]) for e in entries),
                "decryptable_readings": decryptable,
                "block_index": receipt.block_index,
            }
    except ContractRejection as exc:
        return {"status": "contract_rejection", "action": action, "reason": exc.reason}

    save_chain(chain.blocks, chain_path)
    (config.data_dir / "state.json").write_bytes(chain.state.canonical_bytes())
    return outcome


def _count_decryptable(config: RunConfig, keys: dict, patient_info: dict, entries) -> int:
    """How many stored readings decrypt with the escrowed patient key."""
    store_path = config.data_dir / "directory.store"
    if not store_path.exists():
        return 0
    directory = DirectoryStore.load(_resolve_master_key(config, keys), store_path)
    record = directory.lookup(bytes.fromhex(patient_info["token"]))
    if record is None:
        return 0
    patient_key = directory.fetch_patient_key(record)
    count = 0
    for entry in entries:
        for reading in entry["signed_gpd"]["gpd"]["readings"]:
            try:
                raw = symmetric_decrypt(
                    patient_key, ciphertext_from_wire(reading["ciphertext"])
                )
                PhysiologicalReading.from_wire(parse_wire_json(raw))
                count += 1
            except (AuthenticationFailure, ValueError):
                pass
    return count


def run_verify_chain(config: RunConfig) -> dict:
    """Full hash-link, signature and replay verification of the stored chain."""
    chain_path = config.data_dir / "chain.jsonl"
    if not chain_path.exists():
        raise FileNotFoundError(f"{chain_path} not found")
    try:
        blocks = load_chain(chain_path)
        validate_chain(blocks)
    except ChainCorruption as exc:
        return {
            "status": "corrupt",
            "block_index": exc.index,
            "reason": exc.reason,
        }
    state = replay_state(blocks)
    state_path = config.data_dir / "state.json"
    replay_matches = True
    if state_path.exists():
        replay_matches = state.canonical_bytes() == state_path.read_bytes()
    return {
        "status": "ok" if replay_matches else "corrupt",
        "blocks": len(blocks),
        "replay_matches": replay_matches,
    }


def run_bench_op(
    config: RunConfig,
    sizes: list[int] | None = None,
    repetitions: int = 5,
) -> dict:
    rows = run_bench(
        sizes=tuple(sizes) if sizes else DEFAULT_SIZES,
        repetitions=repetitions,
        rng=RandomSource(config.seed),
    )
    config.data_dir.mkdir(parents=True, exist_ok=True)
    csv_path = emit_csv(rows, config.data_dir / "bench.csv")
    return {
        "status": "ok",
        "csv_path": str(csv_path),
        "rows": [
            {
                "size_bytes": r.size_bytes,
                "sym_enc_s": r.sym_enc_s,
                "sym_dec_s": r.sym_dec_s,
                "asym_enc_s": r.asym_enc_s,
                "asym_dec_s": r.asym_dec_s,
            }
            for r in rows
        ],
    }
