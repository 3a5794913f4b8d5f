"""Append-only event log with periodic snapshots, plus the protected store.

Consent decisions must stay auditable, so session history is persisted as
an append-only JSONL event log. Every ``snapshot_interval`` appends, a full
snapshot is written so startup does not replay the whole history. Raw
values from central-DP sessions never enter the event log; they live in a
separate protected file that only the query path and token-gated export
may read.
"""

from __future__ import annotations

import json
import os
import threading
from typing import Callable, Iterator

from .errors import ValidationError

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "snapshot.json"
PROTECTED_FILE = "protected.jsonl"


class RecordLog:
    """Total-ordered event log; a directory path of None keeps it in memory."""

    def __init__(self, directory: str | None, snapshot_interval: int = 100):
        if snapshot_interval < 1:
            raise ValidationError("snapshot_interval must be >= 1")
        self._dir = directory
        self._interval = snapshot_interval
        self._lock = threading.Lock()
        self._seq = 0
        self._memory_events: list[dict] = []
        self._memory_protected: list[dict] = []
        self.snapshot_provider: Callable[[], dict] | None = None
        if directory is not None:
            os.makedirs(directory, exist_ok=True)

    def _path(self, name: str) -> str:
        assert self._dir is not None
        return os.path.join(self._dir, name)

    def append(self, event: dict) -> int:
        """Persist one event; returns its sequence number."""
        with self._lock:
            self._seq += 1
            stamped = {"seq": self._seq, **event}
            if self._dir is None:
                self._memory_events.append(stamped)
            else:
                with open(self._path(EVENTS_FILE), "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(stamped, ensure_ascii=False) + "\n")
                    fh.flush()
            if self._interval and self._seq % self._interval == 0:
                self._write_snapshot_locked()
            return self._seq

    def _write_snapshot_locked(self) -> None:
        if self.snapshot_provider is None or self._dir is None:
            return
        payload = {"last_seq": self._seq, "state": self.snapshot_provider()}
        tmp = self._path(SNAPSHOT_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)
        os.replace(tmp, self._path(SNAPSHOT_FILE))

    def snapshot_now(self) -> None:
        with self._lock:
            self._write_snapshot_locked()

    def append_protected(self, record: dict) -> None:
        with self._lock:
            if self._dir is None:
                self._memory_protected.append(dict(record))
            else:
                with open(self._path(PROTECTED_FILE), "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                    fh.flush()

    def load_protected(self) -> list[dict]:
        with self._lock:
            if self._dir is None:
                return [dict(r) for r in self._memory_protected]
            path = self._path(PROTECTED_FILE)
            if not os.path.exists(path):
                return []
            with open(path, "r", encoding="utf-8") as fh:
                return [json.loads(line) for line in fh if line.strip()]

    def load(self) -> tuple[dict | None, list[dict]]:
        """Snapshot state (if any) and the events appended after it."""
        with self._lock:
            if self._dir is None:
                return None, [dict(e) for e in self._memory_events]
            snapshot = None
            last_seq = 0
            snap_path = self._path(SNAPSHOT_FILE)
            if os.path.exists(snap_path):
                with open(snap_path, "r", encoding="utf-8") as fh:
                    payload = json.load(fh)
                snapshot = payload["state"]
                last_seq = payload["last_seq"]
            events: list[dict] = []
            events_path = self._path(EVENTS_FILE)
            max_seq = last_seq
            if os.path.exists(events_path):
                with open(events_path, "r", encoding="utf-8") as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        event = json.loads(line)
                        max_seq = max(max_seq, event["seq"])
                        if event["seq"] > last_seq:
                            events.append(event)
            self._seq = max_seq
            return snapshot, events

    def iter_events(self) -> Iterator[dict]:
        """Every event currently persisted, in order (memory path only sees
        memory events)."""
        if self._dir is None:
            with self._lock:
                yield from [dict(e) for e in self._memory_events]
            return
        path = self._path(EVENTS_FILE)
        if not os.path.exists(path):
            return
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)
