"""Command-line client for the hchain service.

All commands go through the HTTP API: against a live server when --server is
given, otherwise against an in-process instance of the app (no daemon
needed). Exit codes are a stable CI contract: 0 success, 1 protocol
rejection (attack commands invert their expectation: 0 means contained),
2 configuration error, 3 I/O or transport error.
"""

from __future__ import annotations

import asyncio
import sys

import click
import httpx

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_STATUS_EXIT = {
    "ok": EXIT_OK,
    "rejected": EXIT_REJECTED,
    "contract_rejection": EXIT_REJECTED,
    "corrupt": EXIT_REJECTED,
    "config_error": EXIT_CONFIG,
    "io_error": EXIT_IO,
}


def _post(server: str | None, path: str, body: dict) -> dict:
    """POST to a remote server, or to an in-process app instance."""
    if server:
        try:
            with httpx.Client(base_url=server, timeout=600.0) as client:
                response = client.post(path, json=body)
        except httpx.HTTPError as exc:
            click.echo(f"transport error: {exc}", err=True)
            sys.exit(EXIT_IO)
    else:
        from .service.app import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://hchain.local", timeout=600.0
            ) as client:
                return await client.post(path, json=body)

        response = asyncio.run(go())
    if response.status_code == 422:
        click.echo(f"invalid request: {response.text}", err=True)
        sys.exit(EXIT_CONFIG)
    if response.status_code != 200:
        click.echo(f"server error {response.status_code}: {response.text}", err=True)
        sys.exit(EXIT_IO)
    return response.json()


def _load_config(config_path: str | None, **flags) -> dict:
    """Resolve config file, flag overrides and environment into a request body."""
    from .runner import ConfigError, resolve_config

    try:
        config = resolve_config(config_path, overrides=flags)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    return {
        "seed": config.seed,
        "home_radius_m": config.home_radius_m,
        "batch_size": config.batch_size,
        "data_dir": str(config.data_dir),
        "master_key": config.master_key.hex() if config.master_key else None,
        "location_offset_m": config.location_offset_m,
    }


def _finish(result: dict) -> None:
    status = result.get("status", "io_error")
    detail = result.get("detail")
    if detail:
        click.echo(f"{status}: {detail}")
    sys.exit(_STATUS_EXIT.get(status, EXIT_IO))


def common_options(fn):
    fn = click.option("--server", default=None, help="Base URL of a running hchain service; default runs in-process.")(fn)
    fn = click.option("--config", "config_path", default=None, type=click.Path(), help="JSON config file; flags override it.")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--radius", "home_radius_m", type=float, default=None, help="Home radius in meters.")(fn)
    fn = click.option("--batch-size", type=int, default=None)(fn)
    fn = click.option("--data-dir", default=None, type=click.Path())(fn)
    fn = click.option("--offset", "location_offset_m", type=float, default=None, help="Transmit this many meters north of home.")(fn)
    return fn


@click.group()
def main():
    """hChain: encrypted IoMT pipeline, ledger and benchmark simulator."""


@main.command()
@common_options
def demo(server, config_path, seed, home_radius_m, batch_size, data_dir, location_offset_m):
    """End-to-end run: bootstrap, enroll, stream 20 readings onto the chain."""
    config = _load_config(
        config_path,
        seed=seed,
        home_radius_m=home_radius_m,
        batch_size=batch_size,
        data_dir=data_dir,
        location_offset_m=location_offset_m,
    )
    result = _post(server, "/demo", {"config": config})
    data = result.get("data", {})
    report = data.get("report", {})
    if report:
        click.echo(f"readings ingested : {report['readings_ingested']}")
        click.echo(f"gpds emitted      : {report['gpds_emitted']}")
        click.echo(f"hcp-e forwarded   : {report['hcp_edge']['forwarded']}")
        click.echo(f"hcp-e discarded   : {report['hcp_edge']['discarded']}")
        click.echo(f"vn accepted       : {report['vn']['accepted']}")
        click.echo(f"vn rejected       : {report['vn']['rejected']}")
        click.echo(f"ledger entries    : {report['ledger_entries']}")
        click.echo(f"chain length      : {report['chain_length']}")
    if data.get("patient_id"):
        click.echo(f"patient id        : {data['patient_id']}")
    if data.get("data_dir"):
        click.echo(f"data dir          : {data['data_dir']}")
    _finish(result)


@main.command()
@click.option("--kind", required=True, type=click.Choice(["tamper", "replay", "forge-signature", "wrong-location", "bad-identity"]))
@common_options
def attack(kind, server, config_path, seed, home_radius_m, batch_size, data_dir, location_offset_m):
    """Run an adversarial scenario at p=1.0; exit 0 iff the attack is contained."""
    config = _load_config(
        config_path,
        seed=seed,
        home_radius_m=home_radius_m,
        batch_size=batch_size,
        data_dir=data_dir,
        location_offset_m=location_offset_m,
    )
    result = _post(server, "/attack", {"kind": kind, "config": config})
    data = result.get("data", {})
    if data:
        click.echo(f"attack kind       : {data.get('kind')}")
        click.echo(f"attacked messages : {data.get('attacked')}")
        click.echo(f"rejected at stage : {data.get('rejections_at_stage')} ({data.get('expected_stage')})")
        click.echo(f"attacked stored   : {data.get('stored_attacked')}")
        contained = result.get("status") == "ok"
        click.echo(f"contained         : {'yes' if contained else 'NO'}")
    _finish(result)


@main.command()
@click.argument("action", type=click.Choice(["grant", "revoke", "read"]))
@click.option("--patient", required=True, help="Patient identity or on-chain patient id.")
@click.option("--grantee", default=None, help="Grantee account name or address; read runs as the grantee when given.")
@common_options
def access(action, patient, grantee, server, config_path, seed, home_radius_m, batch_size, data_dir, location_offset_m):
    """Patient-controlled grant/revoke and record reads against the chain."""
    config = _load_config(
        config_path,
        seed=seed,
        home_radius_m=home_radius_m,
        batch_size=batch_size,
        data_dir=data_dir,
        location_offset_m=location_offset_m,
    )
    result = _post(
        server,
        "/access",
        {"action": action, "patient": patient, "grantee": grantee, "config": config},
    )
    data = result.get("data", {})
    if result.get("status") == "ok":
        if action == "read":
            click.echo(f"entries           : {data.get('entries')}")
            click.echo(f"readings          : {data.get('readings')}")
            click.echo(f"decryptable       : {data.get('decryptable_readings')}")
        else:
            click.echo(f"{action} ok at block {data.get('block_index')}")
    _finish(result)


@main.command(name="verify-chain")
@common_options
def verify_chain(server, config_path, seed, home_radius_m, batch_size, data_dir, location_offset_m):
    """Recompute hash links, signatures and replayed state for the stored chain."""
    config = _load_config(
        config_path,
        seed=seed,
        home_radius_m=home_radius_m,
        batch_size=batch_size,
        data_dir=data_dir,
        location_offset_m=location_offset_m,
    )
    result = _post(server, "/chain/verify", {"config": config})
    data = result.get("data", {})
    if result.get("status") == "ok":
        click.echo(f"chain ok: {data.get('blocks')} blocks, replay matches")
    elif "block_index" in data:
        reason = data.get("reason") or result.get("detail")
        click.echo(f"chain corrupt at block {data['block_index']}: {reason}")
    _finish(result)


@main.command()
@click.option("--sizes", default=None, help="Comma-separated payload sizes in bytes.")
@click.option("--reps", type=int, default=5)
@common_options
def bench(sizes, reps, server, config_path, seed, home_radius_m, batch_size, data_dir, location_offset_m):
    """Time symmetric vs chunked-asymmetric encryption and write a CSV."""
    config = _load_config(
        config_path,
        seed=seed,
        home_radius_m=home_radius_m,
        batch_size=batch_size,
        data_dir=data_dir,
        location_offset_m=location_offset_m,
    )
    size_list = None
    if sizes:
        try:
            size_list = [int(s) for s in sizes.split(",") if s]
        except ValueError:
            click.echo("--sizes must be a comma-separated list of integers", err=True)
            sys.exit(EXIT_CONFIG)
    result = _post(server, "/bench", {"sizes": size_list, "reps": reps, "config": config})
    data = result.get("data", {})
    for row in data.get("rows", []):
        click.echo(
            f"{row['size_bytes']:>9} B  sym {row['sym_enc_s']:.6f}/{row['sym_dec_s']:.6f} s"
            f"  asym {row['asym_enc_s']:.6f}/{row['asym_dec_s']:.6f} s"
        )
    if data.get("csv_path"):
        click.echo(f"csv: {data['csv_path']}")
    _finish(result)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
