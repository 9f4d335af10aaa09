"""Small helpers shared by every serializer: canonical JSON, hashing, headers."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

TOOL_VERSION = "0.1.0"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


def write_ndjson(path: str | Path, rows: Iterable[Any]) -> int:
    n = 0
    with open(path, "w") as fh:
        for row in rows:
            fh.write(canonical_json(row))
            fh.write("\n")
            n += 1
    return n


def read_ndjson(path: str | Path) -> Iterator[Any]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def header(kind: str, schema_version: int, config: Any = None) -> dict:
    """Metadata block embedded in every output document."""
    meta = {"kind": kind, "schema_version": schema_version, "tool_version": TOOL_VERSION}
    if config is not None:
        meta["config"] = config
        meta["config_hash"] = content_hash(config)
    return meta
