"""FastAPI service wrapping the pipeline, ledger and benchmark operations.

Each request carries its run configuration; state lives in the configured
data directory, so a demo followed by access-control calls against the same
data_dir behaves exactly like the CLI sequence.
"""

from __future__ import annotations

from fastapi import FastAPI

from .. import __version__
from ..ledger import ChainCorruption
from ..runner import (
    ConfigError,
    RunConfig,
    run_access,
    run_attack,
    run_bench_op,
    run_demo,
    run_verify_chain,
)
from .models import (
    AccessRequest,
    AttackRequest,
    BenchRequest,
    ConfigModel,
    DemoRequest,
    HealthResponse,
    OpResponse,
    VerifyChainRequest,
)


def _to_run_config(model: ConfigModel) -> RunConfig:
    try:
        master_key = bytes.fromhex(model.master_key) if model.master_key else None
    except ValueError as exc:
        raise ConfigError("master_key must be hex") from exc
    if master_key is not None and len(master_key) != 32:
        raise ConfigError("master_key must be 32 bytes of hex")
    return RunConfig(
        seed=model.seed,
        home_radius_m=model.home_radius_m,
        batch_size=model.batch_size,
        data_dir=model.data_dir,
        master_key=master_key,
        location_offset_m=model.location_offset_m,
    )


def _run(op) -> OpResponse:
    try:
        outcome = op()
    except ConfigError as exc:
        return OpResponse(status="config_error", detail=str(exc))
    except ValueError as exc:
        return OpResponse(status="config_error", detail=str(exc))
    except FileNotFoundError as exc:
        return OpResponse(status="io_error", detail=str(exc))
    except ChainCorruption as exc:
        return OpResponse(
            status="corrupt",
            detail=str(exc),
            data={"block_index": exc.index, "reason": exc.reason},
        )
    except OSError as exc:
        return OpResponse(status="io_error", detail=str(exc))
    status = outcome.pop("status")
    detail = outcome.pop("reason", None)
    return OpResponse(status=status, detail=detail, data=outcome)


def create_app() -> FastAPI:
    app = FastAPI(title="hchain", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/demo", response_model=OpResponse)
    def demo(request: DemoRequest):
        return _run(lambda: run_demo(_to_run_config(request.config)))

    @app.post("/attack", response_model=OpResponse)
    def attack(request: AttackRequest):
        return _run(lambda: run_attack(_to_run_config(request.config), request.kind))

    @app.post("/access", response_model=OpResponse)
    def access(request: AccessRequest):
        return _run(
            lambda: run_access(
                _to_run_config(request.config),
                request.action,
                request.patient,
                request.grantee,
            )
        )

    @app.post("/chain/verify", response_model=OpResponse)
    def verify(request: VerifyChainRequest):
        return _run(lambda: run_verify_chain(_to_run_config(request.config)))

    @app.post("/bench", response_model=OpResponse)
    def bench(request: BenchRequest):
        return _run(
            lambda: run_bench_op(_to_run_config(request.config), request.sizes, request.reps)
        )

    return app


app = create_app()
