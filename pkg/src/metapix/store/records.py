"""Journaled document collections.

Each collection is a single append-only JSONL file under
``<root>/collections/<name>.jsonl``. Every line is a full record
``{"id", "revision", "body", "ts"}``; the last line per id wins. Writes
are flushed and fsynced before they are acknowledged, so replaying the
journal after a crash recovers every acknowledged write. A torn final
line (the one write that may have been in flight during a crash) is
ignored on replay.
"""

from __future__ import annotations

import copy
import json
import os
import threading
import time
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from metapix.errors import MetapixError


class Collection(str, Enum):
    DATASOURCES = "datasources"
    DATASETS = "datasets"
    ANNOTATIONS = "annotations"
    OBJECT_TABLE = "object_table"
    ATTRIBUTES = "attributes"
    EMBEDDINGS_META = "embeddings_meta"
    OPERATIONS = "operations"


class _Absent:
    """Explicit absent marker so callers can distinguish 'no record' from a null body."""

    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        return False


ABSENT = _Absent()


class MetadataStore:
    """Document store over per-collection JSONL journals.

    Safe for concurrent callers within one process: writes to a single
    record are serialized per collection, and readers always see fully
    written bodies. Multi-process sharing is out of contract.
    """

    def __init__(self, root: str | Path, fsync: bool = True):
        self.root = Path(root)
        self._fsync = fsync
        self._dir = self.root / "collections"
        self._dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[Collection, threading.RLock] = {c: threading.RLock() for c in Collection}
        # collection -> id -> (revision, body)
        self._state: dict[Collection, dict[str, tuple[int, Any]]] = {c: {} for c in Collection}
        self._files: dict[Collection, Any] = {}
        self._replay()

    # -- journal plumbing ---------------------------------------------------

    def _path(self, collection: Collection) -> Path:
        return self._dir / f"{collection.value}.jsonl"

    def _replay(self) -> None:
        for collection in Collection:
            path = self._path(collection)
            if not path.exists():
                continue
            table = self._state[collection]
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError:
                        # Torn tail from an interrupted write; everything
                        # after it was never acknowledged.
                        break
                    table[entry["id"]] = (entry["revision"], entry["body"])

    def _handle(self, collection: Collection):
        fh = self._files.get(collection)
        if fh is None or fh.closed:
            fh = self._path(collection).open("a", encoding="utf-8")
            self._files[collection] = fh
        return fh

    def _append(self, collection: Collection, entry: dict[str, Any]) -> None:
        try:
            fh = self._handle(collection)
            fh.write(json.dumps(entry, separators=(",", ":"), sort_keys=True) + "\n")
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())
        except OSError as exc:
            raise MetapixError("STORAGE_IO", f"cannot append to {collection.value} journal: {exc}") from exc

    # -- public surface -----------------------------------------------------

    def put_record(
        self,
        collection: Collection,
        id: str,
        body: Any,
        expected_revision: int | None = None,
    ) -> int:
        """Write a record, returning its new revision.

        A caller may pass ``expected_revision`` for optimistic locking;
        a stale expectation raises CONFLICT and writes nothing.
        """
        if not id:
            raise ValueError("record id must be non-empty")
        with self._locks[collection]:
            current = self._state[collection].get(id)
            current_rev = current[0] if current else 0
            if expected_revision is not None and expected_revision != current_rev:
                raise MetapixError(
                    "CONFLICT",
                    f"revision mismatch for {collection.value}/{id}: "
                    f"expected {expected_revision}, at {current_rev}",
                    {"expected": expected_revision, "actual": current_rev},
                )
            revision = current_rev + 1
            body_copy = copy.deepcopy(body)
            self._append(
                collection,
                {"id": id, "revision": revision, "body": body_copy, "ts": time.time()},
            )
            self._state[collection][id] = (revision, body_copy)
            return revision

    def get_record(self, collection: Collection, id: str) -> Any:
        """Return the latest acknowledged body, or ABSENT."""
        with self._locks[collection]:
            entry = self._state[collection].get(id)
            if entry is None:
                return ABSENT
            return copy.deepcopy(entry[1])

    def get_revision(self, collection: Collection, id: str) -> int:
        with self._locks[collection]:
            entry = self._state[collection].get(id)
            return entry[0] if entry else 0

    def list_records(self, collection: Collection) -> list[tuple[str, Any]]:
        """All (id, body) pairs, sorted by id for deterministic output."""
        with self._locks[collection]:
            return [
                (id, copy.deepcopy(body))
                for id, (_, body) in sorted(self._state[collection].items())
            ]

    def iter_ids(self, collection: Collection) -> Iterator[str]:
        with self._locks[collection]:
            return iter(sorted(self._state[collection].keys()))

    def journal_length(self, collection: Collection) -> int:
        """Number of journal lines on disk; used by idempotence checks."""
        path = self._path(collection)
        if not path.exists():
            return 0
        with path.open("r", encoding="utf-8") as fh:
            return sum(1 for _ in fh)

    def close(self) -> None:
        for fh in self._files.values():
            if not fh.closed:
                fh.close()
        self._files.clear()
