"""Storage crawler: object table, attribute join, extended-attribute view.

Each registered storage location is rescanned on demand (or on a
polling interval). Media files become object-table rows keyed by uri
with a per-uri generation id that increases exactly when the content
hash changes. Business metadata loaded from JSONL/CSV files is stamped
with the generation current at load time and joined into the view;
rows whose generation went stale drop out until the next reload.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
from pathlib import Path
from typing import Callable, Optional

from metapix.errors import MetapixError
from metapix.store.blobs import BlobStore
from metapix.store.records import ABSENT, Collection, MetadataStore

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp"}
VIDEO_EXTENSIONS = {".mp4", ".avi", ".mov", ".mkv"}
MANIFEST_NAME = "manifest.jsonl"

TOPIC_MEDIA_ADDED = "media.added"

# owner tag for blob references held by a datasource's object table
OBJECT_TABLE_OWNER = "object_table"


def media_type_for(path: Path) -> Optional[str]:
    """IMAGE/VIDEO by extension; directories holding a manifest are VIDEO."""
    if path.is_dir():
        return "VIDEO" if (path / MANIFEST_NAME).is_file() else None
    suffix = path.suffix.lower()
    if suffix in IMAGE_EXTENSIONS:
        return "IMAGE"
    if suffix in VIDEO_EXTENSIONS:
        return "VIDEO"
    return None


def _coerce_scalar(raw: str):
    """CSV cells arrive as strings; queries want numbers to be numbers."""
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


class Crawler:
    """Maintains per-datasource object tables and attribute views.

    A per-datasource lock serializes crawls; reads see the last
    completed state because every row mutation goes through the
    metadata store.
    """

    def __init__(
        self,
        store: MetadataStore,
        blobs: BlobStore,
        publish: Optional[Callable[[str, dict], str]] = None,
        interval_seconds: float = 30.0,
    ):
        self._store = store
        self._blobs = blobs
        self._publish = publish
        self._interval = interval_seconds
        self._leases: dict[str, threading.Lock] = {}
        self._leases_guard = threading.Lock()
        self._monitors: dict[str, tuple[threading.Thread, threading.Event]] = {}

    # -- helpers ----------------------------------------------------------

    def _datasource(self, datasource_id: str) -> dict:
        record = self._store.get_record(Collection.DATASOURCES, datasource_id)
        if record is ABSENT:
            raise MetapixError(
                "UNKNOWN_DATASOURCE", f"no datasource {datasource_id}"
            )
        return record

    def _lease(self, datasource_id: str) -> threading.Lock:
        with self._leases_guard:
            return self._leases.setdefault(datasource_id, threading.Lock())

    def _object_id(self, datasource_id: str, uri: str) -> str:
        return f"{datasource_id}::{uri}"

    def object_rows(self, datasource_id: str, include_deleted: bool = False) -> list[dict]:
        rows = []
        for _, body in self._store.list_records(Collection.OBJECT_TABLE):
            if body.get("datasource_id") != datasource_id:
                continue
            if body.get("deleted") and not include_deleted:
                continue
            rows.append(body)
        rows.sort(key=lambda r: r["uri"])
        return rows

    # -- scanning ---------------------------------------------------------

    def _discover(self, root: Path, unreadable: list[str]) -> dict[str, Path]:
        """Map uri -> path for every media object under root.

        A directory containing a frame manifest is one VIDEO object and
        is not descended into.
        """
        found: dict[str, Path] = {}

        def visit(directory: Path) -> None:
            try:
                entries = sorted(directory.iterdir(), key=lambda e: e.name)
            except OSError:
                unreadable.append(str(directory))
                return
            if any(e.name == MANIFEST_NAME and e.is_file() for e in entries):
                found[str(directory)] = directory
                return
            for entry in entries:
                if entry.is_dir():
                    visit(entry)
                elif media_type_for(entry):
                    found[str(entry)] = entry

        visit(root)
        return found

    def _content_of(self, path: Path) -> tuple[bytes, float]:
        """(bytes that define the object's content, mtime).

        For a frame-directory video the manifest bytes are the content:
        captions drive every downstream consumer.
        """
        target = path / MANIFEST_NAME if path.is_dir() else path
        data = target.read_bytes()
        return data, target.stat().st_mtime

    def scan_location(self, datasource_id: str, path: str | Path) -> dict:
        """Rescan one registered location; returns {added, modified, deleted}.

        Raises UNREADABLE_LOCATION when the path itself is unusable and
        PARTIAL_SCAN (after updating what it could) when individual
        entries were unreadable.
        """
        datasource = self._datasource(datasource_id)
        root = Path(path)
        if str(root) not in [str(Path(p)) for p in datasource.get("storage_locations", [])]:
            raise ValueError(f"{path} is not a registered location of {datasource_id}")
        if not root.is_dir():
            raise MetapixError(
                "UNREADABLE_LOCATION", f"{path} is not a readable directory"
            )

        with self._lease(datasource_id):
            report = self._scan_locked(datasource_id, root)
        if report["unreadable"]:
            raise MetapixError(
                "PARTIAL_SCAN",
                f"{len(report['unreadable'])} entries could not be read",
                {"unreadable": report["unreadable"], "report": report},
            )
        return report

    def _scan_locked(self, datasource_id: str, root: Path) -> dict:
        unreadable: list[str] = []
        discovered = self._discover(root, unreadable)
        added = modified = deleted = 0
        released_candidates: set[str] = set()
        events: list[dict] = []

        for uri in sorted(discovered):
            path = discovered[uri]
            try:
                data, mtime = self._content_of(path)
            except OSError:
                unreadable.append(uri)
                continue
            if not data:  # zero-byte media is junk, not content
                unreadable.append(uri)
                continue
            content_hash = hashlib.sha256(data).hexdigest()
            media_type = media_type_for(path)
            record_id = self._object_id(datasource_id, uri)
            existing = self._store.get_record(Collection.OBJECT_TABLE, record_id)

            if existing is ABSENT:
                body = {
                    "datasource_id": datasource_id,
                    "uri": uri,
                    "generation_id": 1,
                    "content_hash": content_hash,
                    "size_bytes": len(data),
                    "modified_time": mtime,
                    "media_type": media_type,
                    "deleted": False,
                }
                added += 1
            elif existing["deleted"]:
                body = dict(existing)
                if existing["content_hash"] != content_hash:
                    body["generation_id"] = existing["generation_id"] + 1
                    released_candidates.add(existing["content_hash"])
                body.update(
                    content_hash=content_hash,
                    size_bytes=len(data),
                    modified_time=mtime,
                    media_type=media_type,
                    deleted=False,
                )
                added += 1
            elif existing["content_hash"] != content_hash:
                body = dict(existing)
                body.update(
                    generation_id=existing["generation_id"] + 1,
                    content_hash=content_hash,
                    size_bytes=len(data),
                    modified_time=mtime,
                    media_type=media_type,
                )
                released_candidates.add(existing["content_hash"])
                modified += 1
            else:
                continue  # unchanged: no journal growth

            if not self._blobs.has_blob(content_hash):
                self._blobs.put_blob(data)
            self._blobs.add_reference(content_hash, (OBJECT_TABLE_OWNER, datasource_id))
            self._store.put_record(Collection.OBJECT_TABLE, record_id, body)
            events.append(
                {
                    "datasource_id": datasource_id,
                    "uri": uri,
                    "content_hash": content_hash,
                    "media_type": media_type,
                }
            )

        # vanished files: only uris under this scan root
        prefix = str(root).rstrip("/") + "/"
        for row in self.object_rows(datasource_id):
            if row["uri"] in discovered or not row["uri"].startswith(prefix):
                continue
            body = dict(row)
            body["deleted"] = True
            self._store.put_record(
                Collection.OBJECT_TABLE, self._object_id(datasource_id, row["uri"]), body
            )
            released_candidates.add(row["content_hash"])
            deleted += 1

        # release blob ownership for hashes no longer held by any live row
        live = {row["content_hash"] for row in self.object_rows(datasource_id)}
        owner = (OBJECT_TABLE_OWNER, datasource_id)
        for content_hash in sorted(released_candidates - live):
            if owner in self._blobs.owners_of(content_hash):
                self._blobs.release_reference(content_hash, owner)

        if self._publish is not None:
            for event in events:
                self._publish(TOPIC_MEDIA_ADDED, event)
        return {
            "added": added,
            "modified": modified,
            "deleted": deleted,
            "unreadable": unreadable,
        }

    def scan_all(self, datasource_id: str) -> dict:
        """Scan every registered location; sums the reports."""
        datasource = self._datasource(datasource_id)
        total = {"added": 0, "modified": 0, "deleted": 0, "unreadable": []}
        for location in datasource.get("storage_locations", []):
            report = self.scan_location(datasource_id, location)
            for key in ("added", "modified", "deleted"):
                total[key] += report[key]
            total["unreadable"].extend(report["unreadable"])
        return total

    # -- attributes ---------------------------------------------------------

    def load_attributes(self, datasource_id: str, attribute_file: str | Path) -> dict:
        """Load JSONL/CSV business metadata; returns {loaded, unmatched}.

        Rows are matched to live object-table entries by uri and
        stamped with the generation current right now. Unmatched rows
        are reported, never stored.
        """
        datasource = self._datasource(datasource_id)
        uri_field = datasource["media_uri_field"]
        path = Path(attribute_file)
        rows = (
            self._read_csv(path, uri_field)
            if path.suffix.lower() == ".csv"
            else self._read_jsonl(path, uri_field)
        )

        by_uri = {row["uri"]: row for row in self.object_rows(datasource_id)}
        loaded = 0
        unmatched: list[str] = []
        for row in rows:
            uri = row.pop(uri_field)
            current = by_uri.get(uri)
            if current is None:
                unmatched.append(uri)
                continue
            body = {
                "datasource_id": datasource_id,
                "uri": uri,
                "generation_id": current["generation_id"],
                "attributes": row,
            }
            self._store.put_record(
                Collection.ATTRIBUTES, self._object_id(datasource_id, uri), body
            )
            loaded += 1
        return {"loaded": loaded, "unmatched": unmatched}

    def _read_jsonl(self, path: Path, uri_field: str) -> list[dict]:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise MetapixError("FORMAT_ERROR", f"cannot read {path}: {exc}") from exc
        rows = []
        for line_no, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetapixError(
                    "FORMAT_ERROR",
                    f"{path}:{line_no}: {exc.msg}",
                    {"line": line_no},
                ) from exc
            if not isinstance(row, dict):
                raise MetapixError(
                    "FORMAT_ERROR",
                    f"{path}:{line_no}: line must be a JSON object",
                    {"line": line_no},
                )
            if uri_field not in row:
                raise MetapixError(
                    "MISSING_URI_COLUMN",
                    f"{path}:{line_no}: no {uri_field!r} key",
                    {"line": line_no, "column": uri_field},
                )
            rows.append(row)
        return rows

    def _read_csv(self, path: Path, uri_field: str) -> list[dict]:
        try:
            with path.open(newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                header = reader.fieldnames or []
                if uri_field not in header:
                    raise MetapixError(
                        "MISSING_URI_COLUMN",
                        f"{path}: header {header} lacks {uri_field!r}",
                        {"column": uri_field},
                    )
                rows = []
                for line_no, row in enumerate(reader, 2):
                    if None in row or any(v is None for v in row.values()):
                        raise MetapixError(
                            "FORMAT_ERROR",
                            f"{path}:{line_no}: ragged row",
                            {"line": line_no},
                        )
                    rows.append(
                        {k: (_coerce_scalar(v) if k != uri_field else v) for k, v in row.items()}
                    )
                return rows
        except OSError as exc:
            raise MetapixError("FORMAT_ERROR", f"cannot read {path}: {exc}") from exc

    # -- the view -----------------------------------------------------------

    def build_view(self, datasource_id: str) -> dict:
        """Left-join live objects with generation-matched attributes.

        Updates the datasource's media_count to the row count and
        returns {rows, media_uri_field}.
        """
        datasource = self._datasource(datasource_id)
        uri_field = datasource["media_uri_field"]
        attributes = {}
        for _, body in self._store.list_records(Collection.ATTRIBUTES):
            if body.get("datasource_id") == datasource_id:
                attributes[body["uri"]] = body

        rows = []
        for obj in self.object_rows(datasource_id):
            row = {
                "generation_id": obj["generation_id"],
                "uri": obj["uri"],
                uri_field: obj["uri"],
                "content_hash": obj["content_hash"],
                "media_type": obj["media_type"],
                "size_bytes": obj["size_bytes"],
            }
            attr = attributes.get(obj["uri"])
            if attr is not None and attr["generation_id"] == obj["generation_id"]:
                for key, value in attr["attributes"].items():
                    row.setdefault(key, value)
            rows.append(row)

        datasource = self._datasource(datasource_id)
        if datasource.get("media_count") != len(rows):
            datasource["media_count"] = len(rows)
            self._store.put_record(Collection.DATASOURCES, datasource_id, datasource)
        return {"rows": rows, "media_uri_field": uri_field}

    # -- monitoring -----------------------------------------------------------

    def start_monitoring(self, datasource_id: str, interval_seconds: Optional[float] = None) -> None:
        """Poll-rescan all locations until stop_monitoring/close."""
        if datasource_id in self._monitors:
            return
        stop = threading.Event()
        interval = self._interval if interval_seconds is None else interval_seconds

        def loop() -> None:
            while not stop.wait(interval):
                try:
                    self.scan_all(datasource_id)
                    self.build_view(datasource_id)
                except MetapixError:
                    continue  # transient unreadable trees; retry next tick

        thread = threading.Thread(target=loop, daemon=True, name=f"crawl-{datasource_id}")
        self._monitors[datasource_id] = (thread, stop)
        thread.start()

    def stop_monitoring(self, datasource_id: str) -> None:
        entry = self._monitors.pop(datasource_id, None)
        if entry is not None:
            thread, stop = entry
            stop.set()
            thread.join(timeout=5)

    def close(self) -> None:
        for datasource_id in list(self._monitors):
            self.stop_monitoring(datasource_id)
