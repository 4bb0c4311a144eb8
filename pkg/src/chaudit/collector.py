"""Changelog ingestion: poll a device, normalize records, append, clear.

The cycle order is append-then-clear: records are cleared from the device
only after the store acknowledges them, and the checkpoint is persisted
after the clear. Replays after a crash are absorbed by the store's
(device, index) dedup, giving effectively exactly-once ingestion.

A lock file in store_dir enforces a single collector per device.
"""

from __future__ import annotations

import fcntl
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import (
    CollectorLocked,
    DeviceUnavailable,
    MalformedRecord,
    StoreUnavailable,
    UnknownType,
)
from .model import AuditEvent, parse_record
from .store import Store

DEFAULT_POLL_SECS = 5.0


@dataclass
class CollectorConfig:
    device: str
    store_dir: Path
    poll_interval: float = DEFAULT_POLL_SECS
    batch_max: int = 1024
    userid: Optional[str] = None  # register fresh when absent
    retry_budget: int = 5
    backoff_cap: float = 60.0

    def __post_init__(self):
        self.store_dir = Path(self.store_dir)
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be positive")
        if self.batch_max < 1:
            raise ValueError("batch_max must be >= 1")


@dataclass
class CollectorCheckpoint:
    device: str
    userid: str
    last_ingested_index: int = 0

    def path(self, store_dir: Path) -> Path:
        return store_dir / f"{self.device}.checkpoint"

    def save(self, store_dir: Path) -> None:
        p = self.path(store_dir)
        tmp = p.with_suffix(".checkpoint.tmp")
        tmp.write_text(json.dumps(self.__dict__) + "\n")
        os.replace(tmp, p)

    @classmethod
    def load(cls, store_dir: Path, device: str) -> Optional["CollectorCheckpoint"]:
        p = store_dir / f"{device}.checkpoint"
        if not p.exists():
            return None
        return cls(**json.loads(p.read_text()))


@dataclass
class CycleReport:
    read: int = 0
    ingested: int = 0
    duplicates: int = 0
    quarantined: int = 0
    cleared_to: int = 0


class Collector:
    """One ingestion loop for one device; use as a context manager."""

    def __init__(self, device_api, store: Store, cfg: CollectorConfig,
                 clock=time.time_ns):
        self.device_api = device_api
        self.store = store
        self.cfg = cfg
        self.clock = clock
        cfg.store_dir.mkdir(parents=True, exist_ok=True)
        self._lock_path = cfg.store_dir / f"{cfg.device}.lock"
        self._lock_fd = os.open(self._lock_path, os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            os.close(self._lock_fd)
            raise CollectorLocked(
                f"another collector holds {self._lock_path}"
            ) from None

        checkpoint = CollectorCheckpoint.load(cfg.store_dir, cfg.device)
        if checkpoint is None:
            userid = cfg.userid or device_api.changelog_register(cfg.device)
            checkpoint = CollectorCheckpoint(cfg.device, userid, 0)
            checkpoint.save(cfg.store_dir)
        self.checkpoint = checkpoint

    def close(self) -> None:
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    def __enter__(self) -> "Collector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _quarantine(self, line: str) -> None:
        dead = self.cfg.store_dir / f"{self.cfg.device}.deadletter"
        with dead.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def run_cycle(self) -> CycleReport:
        """One poll: read new lines, append as AuditEvents, clear, checkpoint."""
        report = CycleReport(cleared_to=self.checkpoint.last_ingested_index)
        device = self.cfg.device
        while True:
            try:
                lines = self.device_api.changelog_read_lines(
                    device,
                    self.checkpoint.userid,
                    since_index=self.checkpoint.last_ingested_index,
                    max_records=self.cfg.batch_max,
                )
            except Exception as e:
                raise DeviceUnavailable(str(e)) from e
            if not lines:
                return report
            report.read += len(lines)
            highest = self.checkpoint.last_ingested_index
            for line in lines:
                try:
                    rec = parse_record(line)
                except (MalformedRecord, UnknownType):
                    self._quarantine(line)
                    report.quarantined += 1
                    continue
                event = AuditEvent(
                    device=device, record=rec, ingested_at=self.clock()
                )
                # store failures propagate before any clear: nothing is lost
                stored, _ = self.store.append(device, event)
                if stored:
                    report.ingested += 1
                else:
                    report.duplicates += 1
                highest = max(highest, rec.index)
            if highest > self.checkpoint.last_ingested_index:
                self.device_api.changelog_clear(
                    device, self.checkpoint.userid, highest
                )
                report.cleared_to = highest
                self.checkpoint.last_ingested_index = highest
                self.checkpoint.save(self.cfg.store_dir)
            if len(lines) < self.cfg.batch_max:
                return report

    def run_loop(self, shutdown: threading.Event = None,
                 sleep=None) -> None:
        """Fixed-delay polling until the shutdown event is set.

        Transient store failures are retried with exponential backoff up to
        the configured budget, then propagate.
        """
        shutdown = shutdown or threading.Event()
        sleep = sleep or shutdown.wait
        while not shutdown.is_set():
            failures = 0
            while True:
                try:
                    self.run_cycle()
                    break
                except DeviceUnavailable:
                    break  # skip this cycle, device may come back
                except StoreUnavailable:
                    failures += 1
                    if failures > self.cfg.retry_budget:
                        self.checkpoint.save(self.cfg.store_dir)
                        raise
                    sleep(min(2.0 ** failures, self.cfg.backoff_cap))
                    if shutdown.is_set():
                        break
            if shutdown.is_set():
                break
            sleep(self.cfg.poll_interval)
        self.checkpoint.save(self.cfg.store_dir)
