"""Embedded append-only audit store with per-device collections.

Layout on disk, the durable format:

    <root>/<collection>/events.jsonl   one event per line, canonical order
    <root>/<collection>/chain.head     "<digest-hex> <last-index>"

Each collection carries a tamper-evidence chain:
digest_i = SHA-256(digest_{i-1} || canonical_bytes(event_i)), genesis 32 zero
bytes. Canonical bytes exclude ingestion metadata (ingested_at, chain_digest),
so chain digests are reproducible across runs; tampering with those two
metadata fields is outside the evidence boundary.

One writer per collection, any number of readers; all access is serialized
on a store-wide lock (desk-scale data, contention is not a concern).
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    BadCursor,
    BadSpec,
    ConflictError,
    IoError,
    UnknownCollection,
)
from .model import AuditEvent, GENESIS_DIGEST, type_by_name

MAX_LIMIT = 10_000
DEFAULT_LIMIT = 100


def encode_cursor(device: str, index: int) -> str:
    raw = f"{device}\x00{index}".encode("utf-8")
    return base64.urlsafe_b64encode(raw).decode("ascii")


def decode_cursor(cursor: str) -> tuple[str, int]:
    try:
        device, _, index = (
            base64.urlsafe_b64decode(cursor.encode("ascii"))
            .decode("utf-8")
            .partition("\x00")
        )
        if not device or not index.isdigit():
            raise ValueError(cursor)
        return device, int(index)
    except (ValueError, UnicodeDecodeError) as e:
        raise BadCursor(f"unusable cursor: {cursor!r}") from e


@dataclass
class QuerySpec:
    """Conjunctive filter + pagination descriptor."""

    device: Optional[str] = None
    from_ts: Optional[int] = None  # ns since epoch, inclusive
    to_ts: Optional[int] = None  # ns since epoch, inclusive
    types: Optional[frozenset[str]] = None
    uid: Optional[int] = None
    gid: Optional[int] = None
    fid: Optional[str] = None
    nid: Optional[str] = None
    name_contains: Optional[str] = None
    limit: int = DEFAULT_LIMIT
    cursor: Optional[str] = None

    def validate(self) -> None:
        if self.from_ts is not None and self.to_ts is not None:
            if self.from_ts > self.to_ts:
                raise BadSpec("from_ts must not exceed to_ts")
        if not (1 <= self.limit <= MAX_LIMIT):
            raise BadSpec(f"limit must be in 1..{MAX_LIMIT}")
        for t in self.types or ():
            type_by_name(t)

    def matches(self, ev: AuditEvent) -> bool:
        r = ev.record
        if self.device is not None and ev.device != self.device:
            return False
        if self.from_ts is not None and r.ts_ns < self.from_ts:
            return False
        if self.to_ts is not None and r.ts_ns > self.to_ts:
            return False
        if self.types is not None and r.rtype.name not in self.types:
            return False
        if self.uid is not None and r.uid != self.uid:
            return False
        if self.gid is not None and r.gid != self.gid:
            return False
        if self.fid is not None and str(r.target) != self.fid:
            return False
        if self.nid is not None and (r.nid is None or str(r.nid) != self.nid):
            return False
        if self.name_contains is not None and (
            r.name is None or self.name_contains not in r.name
        ):
            return False
        return True


@dataclass
class QueryPage:
    events: list[AuditEvent]
    next_cursor: Optional[str]


@dataclass
class VerifyResult:
    ok: bool
    first_bad_index: Optional[int] = None


@dataclass
class _Collection:
    name: str
    path: Path
    events: list[AuditEvent] = field(default_factory=list)
    by_index: dict[int, AuditEvent] = field(default_factory=dict)
    by_type: dict[str, list[AuditEvent]] = field(default_factory=dict)
    by_uid: dict[int, list[AuditEvent]] = field(default_factory=dict)
    by_fid: dict[str, list[AuditEvent]] = field(default_factory=dict)
    by_nid: dict[str, list[AuditEvent]] = field(default_factory=dict)
    head_digest: bytes = GENESIS_DIGEST

    def index_event(self, ev: AuditEvent) -> None:
        self.events.append(ev)
        self.by_index[ev.index] = ev
        r = ev.record
        self.by_type.setdefault(r.rtype.name, []).append(ev)
        if r.uid is not None:
            self.by_uid.setdefault(r.uid, []).append(ev)
        self.by_fid.setdefault(str(r.target), []).append(ev)
        if r.parent is not None:
            self.by_fid.setdefault(str(r.parent), []).append(ev)
        if r.nid is not None:
            self.by_nid.setdefault(str(r.nid), []).append(ev)
        self.head_digest = ev.chain_digest


def _event_line(ev: AuditEvent) -> str:
    return json.dumps(ev.to_dict(), separators=(",", ":"), ensure_ascii=False)


class Store:
    """The embedded audit store rooted at a directory."""

    def __init__(self, root, fsync: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._lock = threading.RLock()
        self._collections: dict[str, _Collection] = {}
        for sub in sorted(self.root.iterdir()):
            if (sub / "events.jsonl").exists():
                self._load(sub.name)

    # -- lifecycle -------------------------------------------------------------

    def _load(self, name: str) -> _Collection:
        col = _Collection(name=name, path=self.root / name)
        data = col.path / "events.jsonl"
        if data.exists():
            lines = data.read_bytes().splitlines()
            for i, line in enumerate(lines):
                try:
                    ev = AuditEvent.from_dict(json.loads(line.decode("utf-8")))
                except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
                    if i == len(lines) - 1:
                        # torn final line from a crash mid-append: never acked
                        break
                    raise IoError(f"{data}: corrupt line {i + 1}: {e}") from e
                col.index_event(ev)
        self._collections[name] = col
        return col

    def _col(self, name: str) -> _Collection:
        col = self._collections.get(name)
        if col is None:
            raise UnknownCollection(f"no such collection: {name}")
        return col

    def devices(self) -> list[str]:
        with self._lock:
            return sorted(self._collections)

    # -- append ------------------------------------------------------------------

    def append(self, device: str, event: AuditEvent) -> tuple[bool, bytes]:
        """Durable, idempotent append; returns (stored, chain_digest)."""
        if event.index < 1:
            raise ConflictError(f"event index must be positive: {event.index}")
        with self._lock:
            col = self._collections.get(device)
            if col is None:
                (self.root / device).mkdir(exist_ok=True)
                col = self._load(device)
            existing = col.by_index.get(event.index)
            if existing is not None:
                if existing.canonical_bytes() == event.canonical_bytes():
                    return False, existing.chain_digest
                raise ConflictError(
                    f"({device},{event.index}) exists with different content"
                )
            if col.events and event.index < col.events[-1].index:
                raise ConflictError(
                    f"append out of order: {event.index} after {col.events[-1].index}"
                )
            digest = hashlib.sha256(
                col.head_digest + event.canonical_bytes()
            ).digest()
            stored = event.with_chain(event.ingested_at, digest)
            try:
                with (col.path / "events.jsonl").open("a", encoding="utf-8") as fh:
                    fh.write(_event_line(stored) + "\n")
                    fh.flush()
                    if self.fsync:
                        os.fsync(fh.fileno())
                head = col.path / "chain.head"
                head.write_text(f"{digest.hex()} {stored.index}\n")
                if self.fsync:
                    fd = os.open(head, os.O_RDONLY)
                    try:
                        os.fsync(fd)
                    finally:
                        os.close(fd)
            except OSError as e:
                raise IoError(str(e)) from e
            col.index_event(stored)
            return True, digest

    # -- verification ---------------------------------------------------------------

    def verify_chain(self, device: str) -> VerifyResult:
        """Recompute the chain from the on-disk file.

        first_bad_index is reported as (last verifiable index) + 1; for the
        gapless collections the collector produces this is exactly the index
        of the first modified event.
        """
        with self._lock:
            col = self._col(device)
            data = col.path / "events.jsonl"
        prev = GENESIS_DIGEST
        last_good = 0
        if not data.exists():
            return VerifyResult(ok=True)
        for raw in data.read_bytes().splitlines():
            try:
                ev = AuditEvent.from_dict(json.loads(raw.decode("utf-8")))
            except (ValueError, KeyError, TypeError, UnicodeDecodeError):
                return VerifyResult(False, last_good + 1)
            digest = hashlib.sha256(prev + ev.canonical_bytes()).digest()
            if digest != ev.chain_digest or _event_line(ev).encode("utf-8") != raw:
                return VerifyResult(False, last_good + 1)
            prev = digest
            last_good = ev.index
        return VerifyResult(ok=True)

    # -- queries ------------------------------------------------------------------

    def _candidates(self, spec: QuerySpec) -> Iterable[AuditEvent]:
        cols = (
            [self._col(spec.device)]
            if spec.device is not None
            else [self._collections[n] for n in sorted(self._collections)]
        )
        for col in cols:
            # narrow by the most selective available secondary index
            if spec.fid is not None:
                pool = col.by_fid.get(spec.fid, [])
                pool = [e for e in pool if str(e.record.target) == spec.fid]
            elif spec.uid is not None:
                pool = col.by_uid.get(spec.uid, [])
            elif spec.nid is not None:
                pool = col.by_nid.get(spec.nid, [])
            elif spec.types is not None:
                pool = sorted(
                    (e for t in spec.types for e in col.by_type.get(t, [])),
                    key=lambda e: e.index,
                )
            else:
                pool = col.events
            yield from (e for e in pool if spec.matches(e))

    def _matching(self, spec: QuerySpec) -> list[AuditEvent]:
        spec.validate()
        return sorted(self._candidates(spec), key=lambda e: e.key())

    def query(self, spec: QuerySpec) -> QueryPage:
        """Page of events matching every present filter, (device,index) order."""
        with self._lock:
            matching = self._matching(spec)
        if spec.cursor is not None:
            after = decode_cursor(spec.cursor)
            matching = [e for e in matching if e.key() > after]
        page = matching[: spec.limit]
        next_cursor = None
        if len(matching) > spec.limit:
            next_cursor = encode_cursor(*page[-1].key())
        return QueryPage(events=page, next_cursor=next_cursor)

    def trail(self, fid: str) -> list[AuditEvent]:
        """Every event whose target or parent is fid, (device,index) order."""
        with self._lock:
            out = []
            for name in sorted(self._collections):
                out.extend(self._collections[name].by_fid.get(fid, []))
            return sorted(out, key=lambda e: e.key())

    def counts_by(self, dimension: str, spec: QuerySpec) -> dict:
        """Group-by counts over the full (unpaginated) query result."""
        if dimension not in ("type", "uid", "nid"):
            raise BadSpec(f"unknown dimension: {dimension!r}")
        with self._lock:
            matching = self._matching(spec)
        counts: dict = {}
        for ev in matching:
            r = ev.record
            key = {
                "type": r.rtype.name,
                "uid": r.uid,
                "nid": None if r.nid is None else str(r.nid),
            }[dimension]
            counts[key] = counts.get(key, 0) + 1
        return counts

    def timeline(self, spec: QuerySpec, bucket_seconds: int) -> list[tuple[int, int]]:
        """(bucket_start_sec, count) pairs, UTC-aligned, empty buckets omitted."""
        if bucket_seconds < 1:
            raise BadSpec("bucket_seconds must be >= 1")
        with self._lock:
            matching = self._matching(spec)
        buckets: dict[int, int] = {}
        for ev in matching:
            start = (ev.ts_utc // 1_000_000_000) // bucket_seconds * bucket_seconds
            buckets[start] = buckets.get(start, 0) + 1
        return sorted(buckets.items())

    def denied_open_report(self, spec: QuerySpec) -> list[dict]:
        """NOPEN events grouped by (uid, nid), descending count."""
        spec.validate()
        nopen_spec = QuerySpec(**{**spec.__dict__, "types": frozenset({"NOPEN"})})
        with self._lock:
            matching = self._matching(nopen_spec)
        groups: dict[tuple, dict] = {}
        for ev in matching:
            key = (ev.record.uid, str(ev.record.nid))
            g = groups.setdefault(
                key,
                {
                    "uid": key[0],
                    "nid": key[1],
                    "count": 0,
                    "first_ts": ev.ts_utc,
                    "last_ts": ev.ts_utc,
                },
            )
            g["count"] += 1
            g["first_ts"] = min(g["first_ts"], ev.ts_utc)
            g["last_ts"] = max(g["last_ts"], ev.ts_utc)
        return sorted(groups.values(), key=lambda g: (-g["count"], g["uid"], g["nid"]))
