"""Symmetric vs chunked-asymmetric encryption timing sweep.

Times AES-256-GCM against RSA-2048/OAEP chunked encryption over a range of
payload sizes and emits the rows as CSV. Medians of R repetitions resist
scheduler noise; a repetition only counts if its roundtrip checks out, so a
timing is never reported for an operation that produced wrong bytes.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from .crypto import (
    RandomSource,
    asymmetric_decrypt_chunked,
    asymmetric_encrypt_chunked,
    generate_rsa_keypair,
    generate_secret_key,
    symmetric_decrypt,
    symmetric_encrypt,
)

DEFAULT_SIZES = (1_000, 3_000, 10_000, 100_000, 1_000_000)
CSV_HEADER = ("size_bytes", "sym_enc_s", "sym_dec_s", "asym_enc_s", "asym_dec_s")


@dataclass(frozen=True)
class BenchRow:
    size_bytes: int
    sym_enc_s: float
    sym_dec_s: float
    asym_enc_s: float
    asym_dec_s: float


def _timed(op):
    start = time.perf_counter()
    result = op()
    return time.perf_counter() - start, result


def run_bench(
    sizes: list[int] | tuple[int, ...] = DEFAULT_SIZES,
    repetitions: int = 5,
    rng: RandomSource | None = None,
) -> list[BenchRow]:
    """Time the four operations at each size; median over repetitions."""
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    if any(size <= 0 for size in sizes):
        raise ValueError("sizes must be positive")
    rng = rng or RandomSource()
    sym_key = generate_secret_key(rng)
    rsa_private, rsa_public = generate_rsa_keypair()

    rows = []
    for size in sorted(sizes):
        payload = rng.bytes(size)
        sym_enc, sym_dec, asym_enc, asym_dec = [], [], [], []
        for _ in range(repetitions):
            t, ct = _timed(lambda: symmetric_encrypt(sym_key, payload))
            sym_enc.append(t)
            t, plain = _timed(lambda: symmetric_decrypt(sym_key, ct))
            assert plain == payload, "symmetric roundtrip failed"
            sym_dec.append(t)

            t, chunks = _timed(lambda: asymmetric_encrypt_chunked(rsa_public, payload))
            asym_enc.append(t)
            t, plain = _timed(lambda: asymmetric_decrypt_chunked(rsa_private, chunks))
            assert plain == payload, "asymmetric roundtrip failed"
            asym_dec.append(t)
        rows.append(
            BenchRow(
                size_bytes=size,
                sym_enc_s=statistics.median(sym_enc),
                sym_dec_s=statistics.median(sym_dec),
                asym_enc_s=statistics.median(asym_enc),
                asym_dec_s=statistics.median(asym_dec),
            )
        )
    return rows


def emit_csv(rows: list[BenchRow], path: Path | str) -> Path:
    """Write the sweep as CSV; float fields keep full round-trip precision."""
    if not rows:
        raise ValueError("no rows to emit")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.size_bytes,
                    repr(row.sym_enc_s),
                    repr(row.sym_dec_s),
                    repr(row.asym_enc_s),
                    repr(row.asym_dec_s),
                ]
            )
    return target


def load_csv(path: Path | str) -> list[BenchRow]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        return [
            BenchRow(
                size_bytes=int(line["size_bytes"]),
                sym_enc_s=float(line["sym_enc_s"]),
                sym_dec_s=float(line["sym_dec_s"]),
                asym_enc_s=float(line["asym_enc_s"]),
                asym_dec_s=float(line["asym_dec_s"]),
            )
            for line in reader
        ]
