import pytest

from hchain.audit import AuditLog
from hchain.clock import LogicalClock
from hchain.crypto import RandomSource, SignatureKeyPair, generate_secret_key
from hchain.directory import DirectoryStore
from hchain.hcp_edge import HcpEdgeDevice
from hchain.ledger import Account, Chain, Role, make_transaction
from hchain.patient_edge import PatientEdgeConfig, PatientEdgeDevice
from hchain.payload import GeoCoordinate, PhysiologicalReading, SignedGPD
from hchain.simnet import offset_coordinate
from hchain.verification_node import VerificationNode

HOME = GeoCoordinate(33.2148, -97.1331)


@pytest.fixture
def rng():
    return RandomSource(seed=1234)


@pytest.fixture
def secret_key(rng):
    return generate_secret_key(rng)


@pytest.fixture
def keypair(rng):
    return SignatureKeyPair.generate(rng)


@pytest.fixture
def clock():
    return LogicalClock()


def make_reading(i: int, captured_at: int | None = None) -> PhysiologicalReading:
    return PhysiologicalReading(
        sensor_kind="heart_rate",
        value=60.0 + (i % 40),
        captured_at=captured_at if captured_at is not None else 1_735_689_600_000 + i,
    )


def make_device(secret_key, batch_size=5, identity="patient-001", clock=None, rng=None, location_source=None):
    return PatientEdgeDevice(
        PatientEdgeConfig(
            patient_identity=identity,
            secret_key=secret_key,
            home_location=HOME,
            batch_size=batch_size,
            location_source=location_source,
        ),
        clock=clock or LogicalClock(),
        rng=rng,
    )


def make_gpd(secret_key, n_readings=5, rng=None, **device_kwargs):
    """One emitted GPD with n readings."""
    device = make_device(secret_key, batch_size=n_readings, rng=rng, **device_kwargs)
    gpd = None
    for i in range(n_readings):
        gpd = device.ingest_reading(make_reading(i))
    assert gpd is not None
    return gpd


class VnPipeline:
    """A wired VN with directory, chain and one (optionally enrolled) patient."""

    def __init__(
        self,
        seed=500,
        radius=100.0,
        register=True,
        location_offset_m=0.0,
        identity="patient-001",
    ):
        self.rng = RandomSource(seed)
        self.clock = LogicalClock()
        self.admin = Account.generate(self.rng)
        self.hcp = Account.generate(self.rng)
        self.chain = Chain.genesis(self.admin, self.clock)
        self.chain.submit(
            make_transaction(
                self.admin,
                "add_membership",
                {"address": self.hcp.address, "role": Role.HCP.value},
            )
        )
        self.master_key = generate_secret_key(self.rng)
        self.directory = DirectoryStore(self.master_key, clock=self.clock, rng=self.rng)
        self.edge_kp = SignatureKeyPair.generate(self.rng)
        self.vn_kp = SignatureKeyPair.generate(self.rng)
        self.patient_key = generate_secret_key(self.rng)
        self.patient_account = Account.generate(self.rng)
        self.identity = identity
        self.patient_id = "uid-test-patient"
        if register:
            self.directory.register_patient(
                identity, self.patient_key, HOME, self.patient_id
            )
            self.chain.submit(
                make_transaction(
                    self.hcp,
                    "register_patient",
                    {
                        "patient_id": self.patient_id,
                        "patient_account": self.patient_account.address,
                    },
                )
            )
        source = (
            (lambda: offset_coordinate(HOME, location_offset_m))
            if location_offset_m
            else None
        )
        self.device = make_device(
            self.patient_key,
            batch_size=1,
            identity=identity,
            clock=self.clock,
            rng=self.rng,
            location_source=source,
        )
        self.edge = HcpEdgeDevice(self.edge_kp, clock=self.clock)
        self.vn = VerificationNode(
            self.vn_kp,
            trusted_edge_keys={self.edge_kp.key_id: self.edge_kp.public_bytes},
            directory=self.directory,
            chain=self.chain,
            hcp_account=self.hcp,
            home_radius_m=radius,
            clock=self.clock,
            audit=AuditLog(),
        )
        self._counter = 0

    def signed_gpd(self) -> SignedGPD:
        gpd = self.device.ingest_reading(make_reading(self._counter))
        self._counter += 1
        return self.edge.sign_and_forward(gpd)
