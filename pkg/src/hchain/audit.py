"""Append-only JSON-lines audit logs kept by the edge and verification nodes."""

from __future__ import annotations

import json
from pathlib import Path


class AuditLog:
    """Writes one JSON object per line; also keeps the records in memory."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="ascii") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
