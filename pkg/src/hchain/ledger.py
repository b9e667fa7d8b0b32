"""Hash-linked ledger with a role-based smart-contract state machine.

Blocks carry exactly one signed transaction each and are sealed immediately
by a single writer; immutability comes from SHA-256 links plus per-transaction
Ed25519 signatures, so any byte of a persisted chain is covered by at least
one recomputable check. Contract rules:

    add_membership     Administration; HcpRegistration may add role=Hcp only
    revoke_membership  Administration (never the last active administrator)
    register_patient   active Hcp
    append_gpd         active Hcp; patient must be registered
    grant_access       the patient's own account
    revoke_access      the patient's own account
    read_records       the patient, the owning Hcp, or a current grantee
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from .clock import LogicalClock
from .crypto import (
    DIGEST_SIZE,
    RandomSource,
    SignatureKeyPair,
    fingerprint,
    hash_bytes,
    verify_signature,
)
from .payload import (
    ShapeError,
    SignedGPD,
    b64d_strict,
    b64e,
    canonical_json_bytes,
    hexd_strict,
)

GENESIS_PREV_HASH = bytes(DIGEST_SIZE)

CONTRACT_FUNCTIONS = (
    "add_membership",
    "revoke_membership",
    "register_patient",
    "append_gpd",
    "grant_access",
    "revoke_access",
    "read_records",
)


class Role(str, Enum):
    ADMINISTRATION = "Administration"
    HCP_REGISTRATION = "HcpRegistration"
    HCP = "Hcp"


class ContractRejection(Exception):
    """The contract refused a transaction; state is unchanged."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class InvalidTxSignature(Exception):
    """Transaction signature, address fingerprint or hash does not check out."""


class ChainCorruption(Exception):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason  # "parse" | "shape" | "link" | "index" | "hash" | "tx_hash" | "tx_signature"
        super().__init__(f"block {index}: {reason}")


@dataclass
class Account:
    """A ledger identity: Ed25519 keypair with the fingerprint as address."""

    keypair: SignatureKeyPair

    @property
    def address(self) -> str:
        return self.keypair.key_id

    @classmethod
    def generate(cls, rng: RandomSource | None = None) -> "Account":
        return cls(SignatureKeyPair.generate(rng))


@dataclass
class Membership:
    address: str
    role: Role
    active: bool = True

    def to_wire(self) -> dict:
        return {"role": self.role.value, "active": self.active}


@dataclass
class StoredEntry:
    signed_gpd: SignedGPD
    stored_at: int
    tx_hash: bytes

    def to_wire(self) -> dict:
        return {
            "signed_gpd": self.signed_gpd.to_wire(),
            "stored_at": self.stored_at,
            "tx_hash": self.tx_hash.hex(),
        }


@dataclass
class ChainTransaction:
    caller: str
    caller_pubkey: bytes
    function: str
    payload: dict
    signature: bytes
    tx_hash: bytes

    def signing_message(self) -> bytes:
        return canonical_json_bytes({"function": self.function, "payload": self.payload})

    def body_wire(self) -> dict:
        return {
            "caller": self.caller,
            "caller_pubkey": b64e(self.caller_pubkey),
            "function": self.function,
            "payload": self.payload,
            "signature": b64e(self.signature),
        }

    def computed_hash(self) -> bytes:
        return hash_bytes(canonical_json_bytes(self.body_wire()))

    def to_wire(self) -> dict:
        wire = self.body_wire()
        wire["tx_hash"] = self.tx_hash.hex()
        return wire

    @classmethod
    def from_wire(cls, obj) -> "ChainTransaction":
        keys = ("caller", "caller_pubkey", "function", "payload", "signature", "tx_hash")
        if not isinstance(obj, dict) or set(obj) != set(keys):
            raise ShapeError("transaction: unexpected keys")
        hexd_strict(obj["caller"], 8, "transaction.caller")
        if not isinstance(obj["function"], str) or not isinstance(obj["payload"], dict):
            raise ShapeError("transaction: bad function or payload")
        return cls(
            caller=obj["caller"],
            caller_pubkey=b64d_strict(obj["caller_pubkey"], "transaction.caller_pubkey"),
            function=obj["function"],
            payload=obj["payload"],
            signature=b64d_strict(obj["signature"], "transaction.signature"),
            tx_hash=hexd_strict(obj["tx_hash"], DIGEST_SIZE, "transaction.tx_hash"),
        )


def make_transaction(account: Account, function: str, payload: dict) -> ChainTransaction:
    tx = ChainTransaction(
        caller=account.address,
        caller_pubkey=account.keypair.public_bytes,
        function=function,
        payload=payload,
        signature=b"",
        tx_hash=b"",
    )
    tx.signature = account.keypair.sign(tx.signing_message())
    tx.tx_hash = tx.computed_hash()
    return tx


@dataclass
class Block:
    index: int
    prev_hash: bytes
    timestamp: int
    transactions: list[ChainTransaction]
    block_hash: bytes

    def header_wire(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "transactions": [tx.to_wire() for tx in self.transactions],
        }

    def computed_hash(self) -> bytes:
        return hash_bytes(canonical_json_bytes(self.header_wire()))

    def to_wire(self) -> dict:
        wire = self.header_wire()
        wire["block_hash"] = self.block_hash.hex()
        return wire

    @classmethod
    def from_wire(cls, obj) -> "Block":
        keys = ("index", "prev_hash", "timestamp", "transactions", "block_hash")
        if not isinstance(obj, dict) or set(obj) != set(keys):
            raise ShapeError("block: unexpected keys")
        index = obj["index"]
        timestamp = obj["timestamp"]
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise ShapeError("block: bad index")
        if not isinstance(timestamp, int) or isinstance(timestamp, bool):
            raise ShapeError("block: bad timestamp")
        if not isinstance(obj["transactions"], list):
            raise ShapeError("block: transactions must be a list")
        return cls(
            index=index,
            prev_hash=hexd_strict(obj["prev_hash"], DIGEST_SIZE, "block.prev_hash"),
            timestamp=timestamp,
            transactions=[ChainTransaction.from_wire(t) for t in obj["transactions"]],
            block_hash=hexd_strict(obj["block_hash"], DIGEST_SIZE, "block.block_hash"),
        )


@dataclass
class TxReceipt:
    block_index: int
    tx_hash: bytes
    result: Any = None


class ContractState:
    """Live contract storage; mutated only by successfully executed transactions."""

    def __init__(self):
        self.memberships: dict[str, Membership] = {}
        self.patients: dict[str, list[StoredEntry]] = {}
        self.patient_owner_hcp: dict[str, str] = {}
        self.grants: dict[str, set[str]] = {}
        self.patient_accounts: dict[str, str] = {}

    # -- helpers -----------------------------------------------------------

    def active_role(self, address: str) -> Role | None:
        member = self.memberships.get(address)
        if member is not None and member.active:
            return member.role
        return None

    def _active_admin_count(self) -> int:
        return sum(
            1
            for m in self.memberships.values()
            if m.active and m.role is Role.ADMINISTRATION
        )

    def _require_str(self, payload: dict, key: str) -> str:
        value = payload.get(key)
        if not isinstance(value, str) or not value:
            raise ContractRejection(f"malformed payload: {key}")
        return value

    # -- execution ---------------------------------------------------------

    def execute(
        self, caller: str, function: str, payload: dict, now_ms: int, tx_hash: bytes
    ):
        """Run one contract function; raises ContractRejection without mutating."""
        if function == "add_membership":
            return self._add_membership(caller, payload)
        if function == "revoke_membership":
            return self._revoke_membership(caller, payload)
        if function == "register_patient":
            return self._register_patient(caller, payload)
        if function == "append_gpd":
            return self._append_gpd(caller, payload, now_ms, tx_hash)
        if function == "grant_access":
            return self._grant_access(caller, payload)
        if function == "revoke_access":
            return self._revoke_access(caller, payload)
        if function == "read_records":
            return self._read_records(caller, payload)
        raise ContractRejection(f"unknown function: {function}")

    def _add_membership(self, caller: str, payload: dict):
        address = self._require_str(payload, "address")
        role_name = self._require_str(payload, "role")
        try:
            role = Role(role_name)
        except ValueError:
            raise ContractRejection(f"unknown role: {role_name}") from None
        bootstrap = not self.memberships and caller == address and role is Role.ADMINISTRATION
        if not bootstrap:
            caller_role = self.active_role(caller)
            allowed = caller_role is Role.ADMINISTRATION or (
                caller_role is Role.HCP_REGISTRATION and role is Role.HCP
            )
            if not allowed:
                raise ContractRejection("privilege")
        existing = self.memberships.get(address)
        if existing is not None and existing.active:
            raise ContractRejection("already a member")
        self.memberships[address] = Membership(address=address, role=role, active=True)
        return None

    def _revoke_membership(self, caller: str, payload: dict):
        address = self._require_str(payload, "address")
        if self.active_role(caller) is not Role.ADMINISTRATION:
            raise ContractRejection("privilege")
        member = self.memberships.get(address)
        if member is None or not member.active:
            raise ContractRejection("unknown member")
        if member.role is Role.ADMINISTRATION and self._active_admin_count() == 1:
            raise ContractRejection("cannot revoke last administrator")
        member.active = False
        return None

    def _register_patient(self, caller: str, payload: dict):
        patient_id = self._require_str(payload, "patient_id")
        patient_account = self._require_str(payload, "patient_account")
        if self.active_role(caller) is not Role.HCP:
            raise ContractRejection("privilege")
        if patient_id in self.patients:
            raise ContractRejection("patient already registered")
        self.patients[patient_id] = []
        self.patient_owner_hcp[patient_id] = caller
        self.patient_accounts[patient_id] = patient_account
        return None

    def _append_gpd(self, caller: str, payload: dict, now_ms: int, tx_hash: bytes):
        patient_id = self._require_str(payload, "patient_id")
        if self.active_role(caller) is not Role.HCP:
            raise ContractRejection("privilege")
        if patient_id not in self.patients:
            raise ContractRejection("UI Registration required")
        try:
            sgpd = SignedGPD.from_wire(payload.get("signed_gpd"))
        except ShapeError as exc:
            raise ContractRejection(f"malformed signed gpd: {exc}") from exc
        if sgpd.vn_sig is None:
            raise ContractRejection("missing vn signature")
        entries = self.patients[patient_id]
        last_seq = entries[-1].signed_gpd.gpd.seq_no if entries else 0
        if sgpd.gpd.seq_no <= last_seq:
            raise ContractRejection("stale seq_no")
        entries.append(StoredEntry(signed_gpd=sgpd, stored_at=now_ms, tx_hash=tx_hash))
        return None

    def _grant_access(self, caller: str, payload: dict):
        patient_id = self._require_str(payload, "patient_id")
        grantee = self._require_str(payload, "grantee")
        if patient_id not in self.patients:
            raise ContractRejection("unknown patient")
        if self.patient_accounts.get(patient_id) != caller:
            raise ContractRejection("privilege")
        self.grants.setdefault(patient_id, set()).add(grantee)
        return None

    def _revoke_access(self, caller: str, payload: dict):
        patient_id = self._require_str(payload, "patient_id")
        grantee = self._require_str(payload, "grantee")
        if patient_id not in self.patients:
            raise ContractRejection("unknown patient")
        if self.patient_accounts.get(patient_id) != caller:
            raise ContractRejection("privilege")
        self.grants.get(patient_id, set()).discard(grantee)
        return None

    def _read_records(self, caller: str, payload: dict):
        patient_id = self._require_str(payload, "patient_id")
        if patient_id not in self.patients:
            raise ContractRejection("unknown patient")
        allowed = (
            caller == self.patient_accounts.get(patient_id)
            or caller == self.patient_owner_hcp.get(patient_id)
            or caller in self.grants.get(patient_id, set())
        )
        if not allowed:
            raise ContractRejection("access denied")
        return [entry.to_wire() for entry in self.patients[patient_id]]

    # -- serialization -----------------------------------------------------

    def to_wire(self) -> dict:
        return {
            "memberships": {a: m.to_wire() for a, m in self.memberships.items()},
            "patients": {
                p: [e.to_wire() for e in entries] for p, entries in self.patients.items()
            },
            "patient_owner_hcp": dict(self.patient_owner_hcp),
            "grants": {p: sorted(g) for p, g in self.grants.items()},
            "patient_accounts": dict(self.patient_accounts),
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_wire())


def verify_transaction(tx: ChainTransaction) -> None:
    """Self-contained transaction checks: fingerprint, signature, hash."""
    if fingerprint(tx.caller_pubkey) != tx.caller:
        raise InvalidTxSignature("caller address does not match public key")
    if not verify_signature(tx.caller_pubkey, tx.signing_message(), tx.signature):
        raise InvalidTxSignature("signature verification failed")
    if tx.computed_hash() != tx.tx_hash:
        raise InvalidTxSignature("transaction hash mismatch")


class Chain:
    """Single-writer chain: every accepted transaction seals one new block."""

    def __init__(self, clock: LogicalClock | None = None):
        self.clock = clock or LogicalClock()
        self.blocks: list[Block] = []
        self.state = ContractState()

    @classmethod
    def genesis(cls, admin: Account, clock: LogicalClock | None = None) -> "Chain":
        """Block 0 carries the membership bootstrap for the administrator."""
        chain = cls(clock)
        tx = make_transaction(
            admin,
            "add_membership",
            {"address": admin.address, "role": Role.ADMINISTRATION.value},
        )
        chain.submit(tx)
        return chain

    @classmethod
    def from_blocks(cls, blocks: list[Block], clock: LogicalClock | None = None) -> "Chain":
        chain = cls(clock)
        chain.blocks = blocks
        chain.state = replay_state(blocks)
        if blocks and chain.clock.now_ms() <= blocks[-1].timestamp:
            chain.clock = LogicalClock(start_ms=blocks[-1].timestamp)
        return chain

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].block_hash if self.blocks else GENESIS_PREV_HASH

    def submit(self, tx: ChainTransaction) -> TxReceipt:
        """Verify, execute and seal; rejection leaves chain and state untouched."""
        if tx.function not in CONTRACT_FUNCTIONS:
            raise ContractRejection(f"unknown function: {tx.function}")
        verify_transaction(tx)
        ts = self.clock.tick()
        result = self.state.execute(tx.caller, tx.function, tx.payload, ts, tx.tx_hash)
        block = Block(
            index=len(self.blocks),
            prev_hash=self.tip_hash,
            timestamp=ts,
            transactions=[tx],
            block_hash=b"",
        )
        block.block_hash = block.computed_hash()
        self.blocks.append(block)
        return TxReceipt(block_index=block.index, tx_hash=tx.tx_hash, result=result)


def validate_chain(blocks: list[Block]) -> None:
    """Recompute every link, hash and signature; raises at the first violation."""
    prev_hash = GENESIS_PREV_HASH
    for position, block in enumerate(blocks):
        if block.prev_hash != prev_hash:
            raise ChainCorruption(position, "link")
        if block.index != position:
            raise ChainCorruption(position, "index")
        if block.computed_hash() != block.block_hash:
            raise ChainCorruption(position, "hash")
        for tx in block.transactions:
            if tx.computed_hash() != tx.tx_hash:
                raise ChainCorruption(position, "tx_hash")
            try:
                verify_transaction(tx)
            except InvalidTxSignature:
                raise ChainCorruption(position, "tx_signature") from None
        prev_hash = block.block_hash


def replay_state(blocks: list[Block]) -> ContractState:
    """Deterministically re-execute the whole chain into a fresh state."""
    state = ContractState()
    for block in blocks:
        for tx in block.transactions:
            state.execute(tx.caller, tx.function, tx.payload, block.timestamp, tx.tx_hash)
    return state


def save_chain(blocks: list[Block], path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="ascii") as fh:
        for block in blocks:
            fh.write(canonical_json_bytes(block.to_wire()).decode("ascii") + "\n")


def load_chain(path) -> list[Block]:
    """Parse a chain file strictly.

    Every line must be the exact canonical encoding of its block (that is
    what save_chain writes), so any byte of the file, separators and encoding
    details included, is covered by corruption detection.
    """
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()  # single trailing newline
    blocks: list[Block] = []
    for line_no, line in enumerate(lines):
        try:
            obj = json.loads(line.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            raise ChainCorruption(line_no, "parse") from None
        try:
            block = Block.from_wire(obj)
        except ShapeError:
            raise ChainCorruption(line_no, "shape") from None
        if canonical_json_bytes(block.to_wire()) != line:
            raise ChainCorruption(line_no, "parse")
        blocks.append(block)
    return blocks
