"""Content-addressed blob storage with reference counting.

Media bytes are stored once per distinct sha256 digest under
``<root>/blobs/<hh>/<hash>`` where ``hh`` is the first two hex chars.
References are owner tuples recorded in an append-only journal; a blob
is only reclaimed by an explicit garbage-collection call once no owner
references remain.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from metapix.errors import MetapixError

Owner = tuple


@dataclass(frozen=True)
class BlobEntry:
    content_hash: str
    size_bytes: int
    ref_count: int
    stored_at: float


def _owner_key(owner: Sequence) -> Owner:
    if isinstance(owner, (str, bytes)) or not isinstance(owner, (list, tuple)):
        raise ValueError("owner must be a tuple, e.g. (dataset_id, version)")
    return tuple(owner)


class BlobStore:
    """Deduplicating blob store rooted at a directory.

    All mutating calls are serialized by a single lock; the reference
    journal is flushed and fsynced before a call returns so the owner
    sets survive a crash. A torn final line (partial write at the
    moment of a crash) is ignored on replay.
    """

    def __init__(self, root: str | Path, fsync: bool = True) -> None:
        self._root = Path(root)
        self._blob_dir = self._root / "blobs"
        self._blob_dir.mkdir(parents=True, exist_ok=True)
        self._fsync = fsync
        self._lock = threading.RLock()
        self._refs_path = self._blob_dir / "refs.jsonl"
        self._owners: dict[str, set[Owner]] = {}
        self._replay()
        self._refs_file = open(self._refs_path, "a", encoding="utf-8")

    # -- journal -----------------------------------------------------

    def _replay(self) -> None:
        if not self._refs_path.exists():
            return
        with open(self._refs_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # Torn tail from an interrupted write.
                    break
                owners = self._owners.setdefault(rec["hash"], set())
                owner = tuple(rec["owner"])
                if rec["op"] == "add":
                    owners.add(owner)
                else:
                    owners.discard(owner)

    def _append(self, rec: dict) -> None:
        try:
            self._refs_file.write(json.dumps(rec, separators=(",", ":")) + "\n")
            self._refs_file.flush()
            if self._fsync:
                os.fsync(self._refs_file.fileno())
        except OSError as exc:
            raise MetapixError("STORAGE_IO", f"blob journal write failed: {exc}") from exc

    # -- content -----------------------------------------------------

    def _path_for(self, content_hash: str) -> Path:
        return self._blob_dir / content_hash[:2] / content_hash

    def put_blob(self, data: bytes) -> str:
        """Store ``data`` and return its sha256 hex digest.

        Re-putting existing content is a cheap no-op that returns the
        same digest.
        """
        if len(data) == 0:
            raise MetapixError("EMPTY_BLOB", "refusing to store a zero-byte blob")
        content_hash = hashlib.sha256(data).hexdigest()
        with self._lock:
            path = self._path_for(content_hash)
            if path.exists():
                return content_hash
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.parent / (content_hash + ".tmp")
            try:
                with open(tmp, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    if self._fsync:
                        os.fsync(fh.fileno())
                os.replace(tmp, path)
            except OSError as exc:
                raise MetapixError("STORAGE_IO", f"blob write failed: {exc}") from exc
            self._owners.setdefault(content_hash, set())
        return content_hash

    def get_blob(self, content_hash: str) -> bytes:
        path = self._path_for(content_hash)
        try:
            with open(path, "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            raise MetapixError(
                "UNKNOWN_HASH", f"no blob stored for {content_hash}"
            ) from None

    def has_blob(self, content_hash: str) -> bool:
        return self._path_for(content_hash).exists()

    # -- references --------------------------------------------------

    def add_reference(self, content_hash: str, owner: Sequence) -> int:
        """Record ``owner`` as holding a reference. Idempotent per owner.

        Returns the reference count after the call.
        """
        key = _owner_key(owner)
        with self._lock:
            if not self.has_blob(content_hash):
                raise MetapixError("UNKNOWN_HASH", f"no blob stored for {content_hash}")
            owners = self._owners.setdefault(content_hash, set())
            if key not in owners:
                self._append({"hash": content_hash, "owner": list(key), "op": "add"})
                owners.add(key)
            return len(owners)

    def release_reference(self, content_hash: str, owner: Sequence) -> int:
        key = _owner_key(owner)
        with self._lock:
            if not self.has_blob(content_hash):
                raise MetapixError("UNKNOWN_HASH", f"no blob stored for {content_hash}")
            owners = self._owners.setdefault(content_hash, set())
            if key not in owners:
                raise MetapixError(
                    "UNDERFLOW",
                    f"owner {key!r} holds no reference to {content_hash}",
                )
            self._append({"hash": content_hash, "owner": list(key), "op": "release"})
            owners.discard(key)
            return len(owners)

    def owners_of(self, content_hash: str) -> list[Owner]:
        with self._lock:
            if not self.has_blob(content_hash):
                raise MetapixError("UNKNOWN_HASH", f"no blob stored for {content_hash}")
            return sorted(self._owners.get(content_hash, set()), key=repr)

    def ref_count(self, content_hash: str) -> int:
        return len(self.owners_of(content_hash))

    # -- inventory ---------------------------------------------------

    def get_entry(self, content_hash: str) -> BlobEntry:
        with self._lock:
            path = self._path_for(content_hash)
            try:
                st = path.stat()
            except FileNotFoundError:
                raise MetapixError(
                    "UNKNOWN_HASH", f"no blob stored for {content_hash}"
                ) from None
            return BlobEntry(
                content_hash=content_hash,
                size_bytes=st.st_size,
                ref_count=len(self._owners.get(content_hash, set())),
                stored_at=st.st_mtime,
            )

    def list_blobs(self) -> list[BlobEntry]:
        with self._lock:
            hashes: list[str] = []
            for shard in sorted(self._blob_dir.iterdir()):
                if not shard.is_dir():
                    continue
                for path in sorted(shard.iterdir()):
                    if path.suffix == ".tmp":
                        continue
                    hashes.append(path.name)
            return [self.get_entry(h) for h in sorted(hashes)]

    def collect_garbage(self) -> list[str]:
        """Delete every blob whose reference count is zero.

        Returns the digests removed. Reclamation never happens
        implicitly; callers decide when unreferenced content goes.
        """
        removed: list[str] = []
        with self._lock:
            for entry in self.list_blobs():
                if entry.ref_count > 0:
                    continue
                try:
                    self._path_for(entry.content_hash).unlink()
                except OSError as exc:
                    raise MetapixError(
                        "STORAGE_IO", f"blob delete failed: {exc}"
                    ) from exc
                self._owners.pop(entry.content_hash, None)
                removed.append(entry.content_hash)
        return removed

    def close(self) -> None:
        with self._lock:
            if not self._refs_file.closed:
                self._refs_file.close()
