"""Append-only JSONL manifest.

One canonical-JSON record per line. Appends are serialized across workers
with a sidecar file lock and issued as a single ``os.write`` to an
O_APPEND descriptor, so a line is either fully visible or absent. Reads
apply last-write-wins per id, keeping first-appearance order, which makes
re-appending a progressed record a cheap supersede.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Optional

from filelock import FileLock

from .errors import ManifestError
from .records import VideoRecord, canonical_json, record_from_dict, record_to_dict


class ManifestWriter:
    """Single-writer append handle; safe to open in multiple processes."""

    def __init__(self, path: str | Path, min_duration_s: Optional[float] = None):
        self.path = Path(path)
        self.min_duration_s = min_duration_s
        self._lock = FileLock(str(self.path) + ".lock")

    def append(self, rec: VideoRecord) -> None:
        rec.validate(min_duration_s=self.min_duration_s)
        line = (canonical_json(record_to_dict(rec)) + "\n").encode("utf-8")
        with self._lock:
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                if os.write(fd, line) != len(line):
                    raise ManifestError(f"short write appending to {self.path}")
            finally:
                os.close(fd)

    def append_all(self, recs: Iterable[VideoRecord]) -> None:
        for rec in recs:
            self.append(rec)


def append_record(manifest: ManifestWriter, rec: VideoRecord) -> None:
    manifest.append(rec)


def read_manifest(path: str | Path) -> list[VideoRecord]:
    """All records, superseded by id, ordered by first appearance."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest {path} does not exist")
    by_id: dict[str, VideoRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON: {exc.msg}", line=lineno) from exc
            rec = record_from_dict(data)
            by_id[rec.id] = rec  # dict preserves first-insertion order
    return list(by_id.values())


def manifest_digest(path: str | Path) -> str:
    """SHA-256 over the line stream with timestamps stripped.

    Lets two runs be compared for byte-identical progress while ignoring
    wall-clock fields.
    """
    hasher = hashlib.sha256()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON: {exc.msg}", line=lineno) from exc
            data.pop("created_at", None)
            data.pop("updated_at", None)
            hasher.update(canonical_json(data).encode("utf-8"))
            hasher.update(b"\n")
    return hasher.hexdigest()
