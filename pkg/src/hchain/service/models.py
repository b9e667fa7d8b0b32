"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ConfigModel(BaseModel):
    """Run configuration carried on every request; mirrors the CLI flags."""

    seed: int = 42
    home_radius_m: float = Field(default=100.0, gt=0)
    batch_size: int = Field(default=5, ge=1)
    data_dir: str = "./hchain-data"
    master_key: Optional[str] = None  # 64 hex chars
    location_offset_m: float = 0.0


class DemoRequest(BaseModel):
    config: ConfigModel = ConfigModel()


class AttackRequest(BaseModel):
    kind: str
    config: ConfigModel = ConfigModel()


class AccessRequest(BaseModel):
    action: str  # grant | revoke | read
    patient: str
    grantee: Optional[str] = None
    config: ConfigModel = ConfigModel()


class VerifyChainRequest(BaseModel):
    config: ConfigModel = ConfigModel()


class BenchRequest(BaseModel):
    sizes: Optional[list[int]] = None
    reps: int = Field(default=5, ge=3)
    config: ConfigModel = ConfigModel()


class OpResponse(BaseModel):
    """Uniform operation envelope.

    status: "ok" on success, "rejected" when the protocol or an attack
    containment check failed, "contract_rejection" for access-control
    denials, "corrupt" for failed chain verification, "config_error" or
    "io_error" for environmental problems.
    """

    status: str
    detail: Optional[str] = None
    data: dict = {}


class HealthResponse(BaseModel):
    status: str
    version: str
