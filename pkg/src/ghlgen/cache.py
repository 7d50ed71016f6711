"""Append-only record/replay store for provider responses.

On-disk layout, one record after another::

    <byte length, ASCII decimal>\\n<record JSON, exactly that many bytes>\\n

The record JSON holds ``digest``, ``kind``, ``payload``, ``payload_sha256``
and ``created_at``. A truncated trailing record (interrupted write) is
skipped with a warning and cut off before the next append.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

KINDS = ("completion", "embedding")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def payload_digest(payload: Any) -> str:
    return sha256_text(canonical_json(payload))


@dataclass(frozen=True)
class CacheRecord:
    digest: str
    kind: str
    payload: dict
    created_at: str
    payload_sha256: str

    def to_json(self) -> str:
        return canonical_json(
            {
                "created_at": self.created_at,
                "digest": self.digest,
                "kind": self.kind,
                "payload": self.payload,
                "payload_sha256": self.payload_sha256,
            }
        )


@dataclass
class ScanReport:
    records: list[CacheRecord] = field(default_factory=list)
    corrupt: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    good_end: int = 0

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in KINDS}
        for rec in self.records:
            out[rec.kind] = out.get(rec.kind, 0) + 1
        return out


def scan(data: bytes) -> ScanReport:
    """Parse raw cache bytes; never raises on bad content."""
    report = ScanReport()
    pos = 0
    n = len(data)
    index = 0
    while pos < n:
        nl = data.find(b"\n", pos)
        header = data[pos:nl] if nl >= 0 else data[pos:]
        if nl < 0 or not header.isdigit():
            report.warnings.append(f"record {index} at byte {pos}: truncated or unreadable header, skipped")
            break
        length = int(header)
        body_start = nl + 1
        body_end = body_start + length
        if body_end + 1 > n or data[body_end:body_end + 1] != b"\n":
            report.warnings.append(f"record {index} at byte {pos}: truncated record ({n - body_start} of {length + 1} bytes), skipped")
            break
        try:
            raw = json.loads(data[body_start:body_end].decode("utf-8"))
            rec = CacheRecord(
                digest=raw["digest"],
                kind=raw["kind"],
                payload=raw["payload"],
                created_at=raw["created_at"],
                payload_sha256=raw["payload_sha256"],
            )
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            report.corrupt.append(f"record {index} at byte {pos}: unparseable ({exc})")
        else:
            if rec.kind not in KINDS:
                report.corrupt.append(f"record {index} at byte {pos}: unknown kind {rec.kind!r}")
            elif payload_digest(rec.payload) != rec.payload_sha256:
                report.corrupt.append(f"record {index} at byte {pos}: payload hash mismatch for {rec.digest}")
            else:
                report.records.append(rec)
        pos = body_end + 1
        report.good_end = pos
        index += 1
    return report


class ResponseCache:
    """Content-addressed response store backed by an append-only file.

    Readers see an in-memory index; appends are serialized by a lock. With
    ``path=None`` the cache lives in memory only.
    """

    def __init__(self, path: str | Path | None = None, clock=None):
        self.path = Path(path) if path is not None else None
        self._clock = clock or (lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
        self._lock = threading.Lock()
        self._index: dict[str, CacheRecord] = {}
        self._records: list[CacheRecord] = []
        self._tail_checked = False
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            report = scan(self.path.read_bytes())
            for msg in report.warnings + report.corrupt:
                logger.warning("cache %s: %s", self.path, msg)
            self._good_end = report.good_end
            for rec in report.records:
                self._records.append(rec)
                self._index.setdefault(rec.digest, rec)
        else:
            self._good_end = 0

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, digest: str) -> bool:
        return digest in self._index

    @property
    def records(self) -> list[CacheRecord]:
        return list(self._records)

    def get(self, digest: str) -> CacheRecord | None:
        rec = self._index.get(digest)
        if rec is None:
            self.misses += 1
        else:
            self.hits += 1
        return rec

    def put(self, digest: str, kind: str, payload: dict) -> CacheRecord:
        if kind not in KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        with self._lock:
            existing = self._index.get(digest)
            if existing is not None:
                return existing
            rec = CacheRecord(digest, kind, payload, self._clock(), payload_digest(payload))
            if self.path is not None:
                self._append(rec)
            self._records.append(rec)
            self._index[digest] = rec
            return rec

    def _append(self, rec: CacheRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self._tail_checked:
            if self.path.exists() and self.path.stat().st_size > self._good_end:
                logger.warning("cache %s: dropping partial trailing record before append", self.path)
                with open(self.path, "r+b") as fh:
                    fh.truncate(self._good_end)
            self._tail_checked = True
        body = rec.to_json().encode("utf-8")
        with open(self.path, "ab") as fh:
            fh.write(str(len(body)).encode("ascii") + b"\n" + body + b"\n")
            fh.flush()
        self._good_end += len(str(len(body))) + len(body) + 2

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in KINDS}
        for rec in self._index.values():
            out[rec.kind] += 1
        return out


def verify_file(path: str | Path) -> ScanReport:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read cache {path}: {exc}") from exc
    return scan(data)
