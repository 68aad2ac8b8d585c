"""Datasource and dataset lifecycle: creation, versioning, lineage.

Datasets snapshot their datasource's access settings at creation time
so lineage always describes origin; versions are append-only labels
v1..vn, each owning blob references for every media item it contains.
"""

from __future__ import annotations

import hashlib
import time
import uuid
from pathlib import Path
from typing import Optional

from metapix.annotations.coco import parse_coco
from metapix.annotations.jsonl import parse_jsonl
from metapix.catalog.access import Principal, check_access
from metapix.crawler import MANIFEST_NAME, Crawler, media_type_for
from metapix.errors import MetapixError
from metapix.query import materialize, parse
from metapix.search.index import Scope, VectorIndex, parse_scope
from metapix.store.blobs import BlobStore
from metapix.store.records import ABSENT, Collection, MetadataStore

_DATASOURCE_DEFAULTS = {
    "description": "",
    "security_category_level": 0,
    "namespace_id": "",
    "collection_name": "",
    "view": "",
    "media_uri_field": "media_uri",
    "storage_locations": [],
    "visualization_link": None,
    "region": [],
    "data_owner": "",
    "organization": "",
    "storage_system": "ON_PREM",
    "access_level": "UNRESTRICTED",
    "roles": [],
    "media_count": 0,
    "embeddings_enabled": False,
}


def _now() -> float:
    return time.time()


def _segment_key(segment: Optional[dict]):
    if segment is None:
        return None
    return (segment["start_seconds"], segment["end_seconds"])


class CatalogService:
    """Business logic over the metadata store, blob store, and index."""

    def __init__(
        self,
        store: MetadataStore,
        blobs: BlobStore,
        crawler: Optional[Crawler] = None,
        index: Optional[VectorIndex] = None,
        runner=None,
        annotations=None,
    ):
        self._store = store
        self._blobs = blobs
        self._crawler = crawler
        self._index = index
        self._runner = runner
        self._annotations = annotations

    # late wiring: the annotation service needs resolve_version from
    # this object, so the platform closes the loop after construction
    def set_annotations(self, annotations) -> None:
        self._annotations = annotations

    def set_runner(self, runner) -> None:
        self._runner = runner

    # -- datasources --------------------------------------------------------

    def create_datasource(self, spec: dict) -> dict:
        name = spec.get("name", "").strip()
        if not name:
            raise ValueError("datasource needs a name")
        for _, existing in self._store.list_records(Collection.DATASOURCES):
            if existing.get("name") == name:
                raise MetapixError(
                    "DUPLICATE_NAME", f"a datasource named {name!r} exists",
                    {"name": name},
                )
        record = dict(_DATASOURCE_DEFAULTS)
        record.update(spec)
        record["name"] = name
        if record["access_level"] == "GATED" and not record["roles"]:
            raise MetapixError(
                "GATED_WITHOUT_ROLES", "gated access needs at least one role"
            )
        if record["storage_system"] == "ON_PREM":
            for location in record["storage_locations"]:
                if not Path(location).is_dir():
                    raise MetapixError(
                        "UNREADABLE_LOCATION",
                        f"storage location {location} is not a readable directory",
                        {"location": str(location)},
                    )
        record["id"] = "ds-" + uuid.uuid4().hex[:12]
        record.setdefault("view", f"{name}-view")
        record["operations"] = []
        record["create_date"] = record["last_modified"] = _now()
        self._store.put_record(Collection.DATASOURCES, record["id"], record)

        if self._crawler is not None and record["storage_locations"]:
            self._crawler.scan_all(record["id"])
            self._crawler.build_view(record["id"])
            record = self.get_datasource(record["id"])
        return record

    def get_datasource(self, datasource_id: str) -> dict:
        record = self._store.get_record(Collection.DATASOURCES, datasource_id)
        if record is ABSENT:
            raise MetapixError("UNKNOWN_DATASOURCE", f"no datasource {datasource_id}")
        return record

    def list_datasources(self) -> list[dict]:
        return [body for _, body in self._store.list_records(Collection.DATASOURCES)]

    # -- dataset helpers ------------------------------------------------------

    def get_dataset(self, dataset_id: str) -> dict:
        record = self._store.get_record(Collection.DATASETS, dataset_id)
        if record is ABSENT:
            raise MetapixError("UNKNOWN_DATASET", f"no dataset {dataset_id}")
        return record

    def list_datasets(self) -> list[dict]:
        return [body for _, body in self._store.list_records(Collection.DATASETS)]

    def resolve_version(self, dataset_id: str, version: int) -> dict:
        """The version record, or UNKNOWN_VERSION (used by annotations)."""
        record = self._store.get_record(Collection.DATASETS, dataset_id)
        if record is ABSENT:
            raise MetapixError(
                "UNKNOWN_VERSION", f"no dataset {dataset_id}",
                {"dataset_id": dataset_id, "version": version},
            )
        label = f"v{version}"
        for entry in record["versions"]:
            if entry["label"] == label:
                return entry
        raise MetapixError(
            "UNKNOWN_VERSION",
            f"dataset {dataset_id} has no version {label}",
            {"dataset_id": dataset_id, "version": version},
        )

    def _require_access(self, principal: Principal, resource: dict) -> None:
        decision = check_access(principal, resource)
        if not decision:
            raise MetapixError("ACCESS_DENIED", decision.reason)

    def _ingest_path(self, uri: str) -> tuple[bytes, str]:
        """(content bytes, media_type) for a local media uri."""
        path = Path(uri)
        if path.is_dir():
            manifest = path / MANIFEST_NAME
            if not manifest.is_file():
                raise FileNotFoundError(uri)
            return manifest.read_bytes(), "VIDEO"
        if not path.is_file():
            raise FileNotFoundError(uri)
        return path.read_bytes(), media_type_for(path) or "IMAGE"

    def _new_dataset(
        self,
        principal: Principal,
        name: str,
        media_refs: list[dict],
        provenance: dict,
        datasource: Optional[dict] = None,
        visibility: str = "PUBLIC",
        storage_system: str = "ON_PREM",
        embeddings_enabled: bool = False,
        description: str = "",
        tags: Optional[list] = None,
    ) -> dict:
        dataset_id = "dset-" + uuid.uuid4().hex[:12]
        for ref in media_refs:
            self._blobs.add_reference(ref["content_hash"], (dataset_id, "v1"))
        record = {
            "id": dataset_id,
            "creator_id": principal.user_id,
            "name": name,
            "description": description,
            "tags": list(tags or []),
            "license": None,
            "versions": [
                {
                    "label": "v1",
                    "created_at": _now(),
                    "parent": None,
                    "media_refs": media_refs,
                    "provenance": provenance,
                    "applied_operations": [],
                }
            ],
            "datasource": datasource,
            "visibility": visibility,
            "storage_system": storage_system,
            "embeddings_enabled": embeddings_enabled,
            "has_annotations": False,
            "create_date": _now(),
            "last_modified": _now(),
        }
        self._store.put_record(Collection.DATASETS, dataset_id, record)
        return record

    # -- dataset creation -----------------------------------------------------

    def create_dataset_from_file(
        self,
        principal: Principal,
        manifest: str | Path,
        format: str,
        name: Optional[str] = None,
    ) -> dict:
        format = format.upper()
        if format not in ("JSONL", "COCO"):
            raise MetapixError(
                "UNSUPPORTED_FORMAT", f"cannot import {format}", {"format": format}
            )
        manifest = Path(manifest)
        if format == "JSONL":
            entries = parse_jsonl(manifest)
            uris = [entry["uri"] for entry in entries]
            has_boxes = any(entry.get("boxes") for entry in entries)
        else:
            items = parse_coco(manifest, str(manifest.parent))
            uris = [item.uri for item in items]
            has_boxes = any(item.boxes for item in items)

        media_refs, missing = [], []
        for uri in uris:
            try:
                data, media_type = self._ingest_path(uri)
            except (FileNotFoundError, OSError):
                missing.append(uri)
                continue
            content_hash = self._blobs.put_blob(data)
            media_refs.append(
                {
                    "content_hash": content_hash,
                    "uri": uri,
                    "media_type": media_type,
                    "segment": None,
                }
            )
        if missing:
            raise MetapixError(
                "MEDIA_NOT_FOUND",
                f"{len(missing)} media paths do not resolve",
                {"missing": missing},
            )

        record = self._new_dataset(
            principal,
            name or manifest.stem,
            media_refs,
            {"type": "FILE_IMPORT", "format": format, "source_name": manifest.name},
        )
        if format == "COCO" and self._annotations is not None:
            self._annotations.attach_annotation(
                record["id"],
                1,
                "COCO",
                manifest.stem,
                {"coco_file_path": str(manifest), "root_dir": str(manifest.parent)},
                make_default=True,
            )
            if has_boxes:
                record["has_annotations"] = True
                self._store.put_record(Collection.DATASETS, record["id"], record)
        return record

    def create_dataset_from_query(
        self,
        principal: Principal,
        datasource_id: str,
        query_text: str,
        name: Optional[str] = None,
    ) -> dict:
        datasource = self.get_datasource(datasource_id)
        self._require_access(principal, datasource)
        expr = parse(query_text)
        if self._crawler is None:
            raise MetapixError("STORAGE_IO", "no crawler wired; view unavailable")
        rows = self._crawler.build_view(datasource_id)["rows"]
        matching = materialize(rows, expr)

        media_refs = [
            {
                "content_hash": row["content_hash"],
                "uri": row["uri"],
                "media_type": row["media_type"],
                "segment": None,
            }
            for row in matching
        ]
        snapshot = {
            "datasource_id": datasource_id,
            "name": datasource["name"],
            "data_owner": datasource["data_owner"],
            "roles": list(datasource["roles"]),
            "access_level": datasource["access_level"],
        }
        record = self._new_dataset(
            principal,
            name or f"{datasource['name']} query",
            media_refs,
            {"type": "QUERY", "query_used": query_text, "datasource_id": datasource_id},
            datasource=snapshot,
            visibility="PUBLIC" if datasource["access_level"] == "UNRESTRICTED" else "RESTRICTED",
            storage_system=datasource["storage_system"],
            embeddings_enabled=datasource["embeddings_enabled"],
        )
        self._inherit_embeddings(record, Scope("datasource", datasource_id), media_refs)
        return record

    def _inherit_embeddings(
        self, dataset: dict, source_scope: Scope, media_refs: list[dict]
    ) -> None:
        """Link existing embeddings into the new dataset's scope.

        Media already embedded in the source scope are copied (no new
        job); anything missing is submitted as one embedding batch only
        when the source had embeddings enabled.
        """
        if self._index is None or not dataset["embeddings_enabled"] or not media_refs:
            return
        target = Scope("dataset", dataset["id"], version=1)
        wanted = {ref["content_hash"] for ref in media_refs}
        self._index.copy_records(source_scope, target, wanted)
        covered = {
            record["content_hash"] for record in self._index.records_for(target)
        }
        missing = [ref for ref in media_refs if ref["content_hash"] not in covered]
        if missing and self._runner is not None:
            items = [
                {"uri": ref["uri"], "content_hash": ref["content_hash"], "path": ref["uri"]}
                for ref in missing
            ]
            self._runner.submit_batch("EMBEDDING", target, items)

    def create_dataset_from_search(
        self,
        principal: Principal,
        scope_text: str,
        selected_segments: list,
        query_text: str = "",
        name: Optional[str] = None,
    ) -> dict:
        scope = parse_scope(scope_text)
        if scope.kind == "datasource":
            source = self.get_datasource_for_scope(scope)
            snapshot = {
                "datasource_id": source["id"],
                "name": source["name"],
                "data_owner": source["data_owner"],
                "roles": list(source["roles"]),
                "access_level": source["access_level"],
            }
            visibility = "PUBLIC" if source["access_level"] == "UNRESTRICTED" else "RESTRICTED"
            storage_system = source["storage_system"]
        else:
            source = self.get_dataset_for_scope(scope)
            snapshot = source.get("datasource")
            visibility = source["visibility"]
            storage_system = source["storage_system"]
        self._require_access(principal, source)

        if self._index is None:
            raise MetapixError("STORAGE_IO", "no vector index wired")
        available = {
            (record["content_hash"], _segment_key(record["segment"])): record
            for record in self._index.records_for(scope)
        }
        by_id = {record["id"]: record for record in available.values()}

        matched: list[dict] = []
        for selection in selected_segments:
            if isinstance(selection, str):
                record = by_id.get(selection)
            else:
                key = (
                    selection.get("content_hash"),
                    _segment_key(selection.get("segment")),
                )
                record = available.get(key)
            if record is None:
                raise MetapixError(
                    "UNKNOWN_SEGMENT",
                    f"selection {selection!r} matches no indexed embedding in {scope}",
                    {"selection": selection if isinstance(selection, str) else dict(selection)},
                )
            matched.append(record)

        media_refs, seen = [], set()
        for record in matched:
            key = (record["content_hash"], _segment_key(record["segment"]))
            if key in seen:
                continue
            seen.add(key)
            media_refs.append(
                {
                    "content_hash": record["content_hash"],
                    "uri": record["uri"],
                    "media_type": "VIDEO" if record["segment"] else "IMAGE",
                    "segment": record["segment"],
                }
            )

        dataset = self._new_dataset(
            principal,
            name or "search selection",
            media_refs,
            {
                "type": "SEARCH_SELECTION",
                "query_text": query_text,
                "source_scope": str(scope),
            },
            datasource=snapshot,
            visibility=visibility,
            storage_system=storage_system,
            embeddings_enabled=True,
        )
        target = Scope("dataset", dataset["id"], version=1)
        self._index.copy_records(
            scope, target, record_ids={record["id"] for record in matched}
        )
        return dataset

    def get_datasource_for_scope(self, scope: Scope) -> dict:
        record = self._store.get_record(Collection.DATASOURCES, scope.id)
        if record is ABSENT:
            raise MetapixError("UNKNOWN_SCOPE", f"no datasource behind {scope}")
        return record

    def get_dataset_for_scope(self, scope: Scope) -> dict:
        record = self._store.get_record(Collection.DATASETS, scope.id)
        if record is ABSENT:
            raise MetapixError("UNKNOWN_SCOPE", f"no dataset behind {scope}")
        labels = {entry["label"] for entry in record["versions"]}
        if f"v{scope.version}" not in labels:
            raise MetapixError("UNKNOWN_SCOPE", f"no version v{scope.version} behind {scope}")
        return record

    # -- versioning -------------------------------------------------------------

    def add_version(self, principal: Principal, dataset_id: str, changeset: dict) -> dict:
        dataset = self.get_dataset(dataset_id)
        self._require_access(principal, dataset)
        adds = list(changeset.get("add", []))
        removes = list(changeset.get("remove", []))
        if not adds and not removes:
            raise MetapixError("EMPTY_CHANGESET", "a new version needs changes")

        parent = dataset["versions"][-1]
        refs = {
            (ref["uri"], ref["content_hash"], _segment_key(ref.get("segment"))): dict(ref)
            for ref in parent["media_refs"]
        }
        for removal in removes:
            matched = [
                key
                for key, ref in refs.items()
                if (removal.get("uri") is None or ref["uri"] == removal["uri"])
                and (
                    removal.get("content_hash") is None
                    or ref["content_hash"] == removal["content_hash"]
                )
                and _segment_key(removal.get("segment")) == _segment_key(ref.get("segment"))
            ]
            if not matched or (
                removal.get("uri") is None and removal.get("content_hash") is None
            ):
                raise MetapixError(
                    "UNKNOWN_MEDIA",
                    f"cannot remove {removal.get('uri') or removal.get('content_hash')}: "
                    f"not in {parent['label']}",
                    {"removal": dict(removal)},
                )
            for key in matched:
                del refs[key]

        missing = []
        for addition in adds:
            uri = addition.get("uri")
            content_hash = addition.get("content_hash")
            media_type = addition.get("media_type")
            if content_hash and self._blobs.has_blob(content_hash):
                media_type = media_type or "IMAGE"
            else:
                try:
                    data, media_type = self._ingest_path(uri)
                except (FileNotFoundError, OSError, TypeError):
                    missing.append(uri or content_hash)
                    continue
                content_hash = self._blobs.put_blob(data)
            ref = {
                "content_hash": content_hash,
                "uri": uri,
                "media_type": media_type,
                "segment": addition.get("segment"),
            }
            refs.setdefault((uri, content_hash, _segment_key(ref["segment"])), ref)
        if missing:
            raise MetapixError(
                "MEDIA_NOT_FOUND",
                f"{len(missing)} media paths do not resolve",
                {"missing": missing},
            )

        label = f"v{len(dataset['versions']) + 1}"
        media_refs = [refs[key] for key in sorted(refs, key=lambda k: (k[0], k[1], str(k[2])))]
        for ref in media_refs:
            self._blobs.add_reference(ref["content_hash"], (dataset_id, label))
        version = {
            "label": label,
            "created_at": _now(),
            "parent": parent["label"],
            "media_refs": media_refs,
            "provenance": changeset.get("provenance") or {"type": "DERIVED"},
            "applied_operations": list(changeset.get("operation_ids", [])),
        }

        while True:
            fresh = self.get_dataset(dataset_id)
            fresh["versions"] = fresh["versions"] + [version]
            fresh["last_modified"] = _now()
            try:
                self._store.put_record(
                    Collection.DATASETS, dataset_id, fresh,
                    expected_revision=self._store.get_revision(Collection.DATASETS, dataset_id),
                )
                return version
            except MetapixError as exc:
                if exc.code != "CONFLICT":
                    raise

    # -- lineage / annotations ----------------------------------------------------

    def get_lineage(self, dataset_id: str) -> dict:
        dataset = self.get_dataset(dataset_id)
        versions = [
            {
                "label": entry["label"],
                "parent": entry["parent"],
                "created_at": entry["created_at"],
                "provenance": entry["provenance"],
                "media_count": len(entry["media_refs"]),
                "applied_operations": list(entry["applied_operations"]),
            }
            for entry in dataset["versions"]
        ]
        annotations = [
            {"id": body["id"], "name": body["name"], "type": body["type"],
             "version": body["version"]}
            for _, body in self._store.list_records(Collection.ANNOTATIONS)
            if body.get("dataset_id") == dataset_id
        ]
        return {
            "dataset_id": dataset_id,
            "name": dataset["name"],
            "datasource": dataset.get("datasource"),
            "versions": versions,
            "annotations": annotations,
        }

    def attach_annotation(
        self,
        principal: Principal,
        dataset_id: str,
        version: int,
        type: str,
        name: str,
        properties: dict,
        make_default: bool = False,
    ) -> dict:
        dataset = self.get_dataset(dataset_id)
        self._require_access(principal, dataset)
        if self._annotations is None:
            raise MetapixError("STORAGE_IO", "no annotation service wired")
        annotation = self._annotations.attach_annotation(
            dataset_id, version, type, name, properties, make_default
        )
        if not dataset.get("has_annotations"):
            dataset["has_annotations"] = True
            self._store.put_record(Collection.DATASETS, dataset_id, dataset)
        return annotation

    # -- job scope stamping ---------------------------------------------------------

    def stamp_scope(self, scope: Scope, operation_id: str) -> None:
        """Record the operation id on the scope's catalog record.

        Runs before any worker starts; raising UNKNOWN_SCOPE here
        prevents zombie operations against nonexistent scopes.
        """
        if scope.kind == "datasource":
            record = self.get_datasource_for_scope(scope)
            record.setdefault("operations", []).append(operation_id)
            self._store.put_record(Collection.DATASOURCES, scope.id, record)
            return
        record = self.get_dataset_for_scope(scope)
        for entry in record["versions"]:
            if entry["label"] == f"v{scope.version}":
                entry["applied_operations"].append(operation_id)
                break
        self._store.put_record(Collection.DATASETS, scope.id, record)
