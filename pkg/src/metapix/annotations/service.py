"""Annotation lifecycle: attach external label sources to dataset versions,
list them, and export a version's canonical form to a tool format.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable
import time
import uuid

from metapix.annotations.canonical import Box, LabeledItem, validate_box
from metapix.annotations.coco import export_coco as _export_coco_items
from metapix.annotations.coco import parse_coco
from metapix.annotations.jsonl import parse_jsonl
from metapix.annotations.yolo import export_yolo as _export_yolo_items
from metapix.annotations.yolo import validate_labels
from metapix.errors import MetapixError
from metapix.store.records import ABSENT, Collection, MetadataStore

# exact property keys mandated per annotation type
REQUIRED_PROPERTIES = {
    "COCO": frozenset({"coco_file_path", "root_dir"}),
    "YOLO": frozenset({"labels_dir", "classes_file"}),
    "JSONL": frozenset({"manifest_path"}),
    "QUERY": frozenset({"query_used", "datasource_info"}),
}

# types whose files hold enough geometry to rebuild pixel boxes.
# YOLO lacks image sizes at attach time and QUERY is provenance-only.
EXPORTABLE_TYPES = frozenset({"COCO", "JSONL"})


class AnnotationService:
    """Stores annotation records and renders exports on demand.

    ``resolve_version`` is injected by the catalog layer: it must raise
    UNKNOWN_VERSION when (dataset_id, version) does not exist.
    """

    def __init__(
        self,
        store: MetadataStore,
        resolve_version: Callable[[str, int], None] | None = None,
    ):
        self._store = store
        self._resolve_version = resolve_version or (lambda dataset_id, version: None)

    # -- attach / list ------------------------------------------------

    def attach_annotation(
        self,
        dataset_id: str,
        version: int,
        type: str,
        name: str,
        properties: dict,
        make_default: bool = False,
    ) -> dict:
        if type not in REQUIRED_PROPERTIES:
            raise MetapixError(
                "INVALID_PROPERTIES",
                f"unknown annotation type {type!r}",
                {"type": type},
            )
        required = REQUIRED_PROPERTIES[type]
        got = set(properties or {})
        if got != required:
            raise MetapixError(
                "INVALID_PROPERTIES",
                f"{type} annotation needs exactly {sorted(required)}, got {sorted(got)}",
                {"type": type, "missing": sorted(required - got), "extra": sorted(got - required)},
            )
        self._resolve_version(dataset_id, version)
        self._validate_source(type, properties)

        if make_default:
            self._clear_default(dataset_id, version)

        annotation = {
            "id": f"ann-{uuid.uuid4().hex[:12]}",
            "dataset_id": dataset_id,
            "version": version,
            "name": name,
            "is_default": bool(make_default),
            "type": type,
            "properties": dict(properties),
            "create_date": time.time(),
        }
        self._store.put_record(Collection.ANNOTATIONS, annotation["id"], annotation)
        return annotation

    def _validate_source(self, type: str, properties: dict) -> None:
        """Parse referenced files up front so a broken source never attaches."""
        if type == "COCO":
            parse_coco(properties["coco_file_path"], properties["root_dir"])
        elif type == "YOLO":
            validate_labels(properties["labels_dir"], properties["classes_file"])
        elif type == "JSONL":
            parse_jsonl(properties["manifest_path"])
        # QUERY: provenance only, nothing to parse

    def _clear_default(self, dataset_id: str, version: int) -> None:
        for record in self.list_annotations(dataset_id, version):
            if record.get("is_default"):
                record["is_default"] = False
                self._store.put_record(Collection.ANNOTATIONS, record["id"], record)

    def list_annotations(self, dataset_id: str, version: int | None = None) -> list[dict]:
        out = []
        for _, record in self._store.list_records(Collection.ANNOTATIONS):
            if record.get("dataset_id") != dataset_id:
                continue
            if version is not None and record.get("version") != version:
                continue
            out.append(record)
        out.sort(key=lambda r: (r.get("create_date", 0), r["id"]))
        return out

    def get_annotation(self, annotation_id: str) -> dict:
        record = self._store.get_record(Collection.ANNOTATIONS, annotation_id)
        if record is ABSENT:
            raise MetapixError(
                "NO_ANNOTATIONS", f"no annotation {annotation_id}", {"id": annotation_id}
            )
        return record

    # -- export -------------------------------------------------------

    def export_annotation(
        self, dataset_id: str, version: int, format: str = "COCO"
    ) -> dict:
        """Render the version's canonical labels in ``format``.

        Returns {"format", "annotation_id", "files": {filename: content}}.
        COCO output is a single `annotations.json`; YOLO output is one
        label file per image plus `classes.txt`.
        """
        self._resolve_version(dataset_id, version)
        source = self._exportable_source(dataset_id, version)
        return self._render(source, format)

    def export_by_id(self, annotation_id: str, format: str = "COCO") -> dict:
        """Render one specific annotation's source files in ``format``."""
        source = self.get_annotation(annotation_id)
        if source["type"] not in EXPORTABLE_TYPES:
            raise MetapixError(
                "NO_ANNOTATIONS",
                f"annotation {annotation_id} is {source['type']}: its files "
                "cannot rebuild pixel geometry",
                {"id": annotation_id, "type": source["type"]},
            )
        return self._render(source, format)

    def _render(self, source: dict, format: str) -> dict:
        format = format.upper()
        if format not in ("COCO", "YOLO"):
            raise MetapixError(
                "UNSUPPORTED_FORMAT", f"cannot export to {format}", {"format": format}
            )
        items = self._canonical_items(source)
        if format == "COCO":
            files = {"annotations.json": _export_coco_items(items)}
        else:
            files = _export_yolo_items(items)
        return {"format": format, "annotation_id": source["id"], "files": files}

    def _exportable_source(self, dataset_id: str, version: int) -> dict:
        """Pick the annotation whose files can rebuild pixel geometry.

        The default wins when it is exportable; otherwise fall back to
        the newest COCO/JSONL attachment.
        """
        records = self.list_annotations(dataset_id, version)
        if not records:
            raise MetapixError(
                "NO_ANNOTATIONS",
                f"dataset {dataset_id} v{version} has no annotations",
                {"dataset_id": dataset_id, "version": version},
            )
        default = next((r for r in records if r.get("is_default")), None)
        if default is not None and default["type"] in EXPORTABLE_TYPES:
            return default
        for record in reversed(records):
            if record["type"] in EXPORTABLE_TYPES:
                return record
        raise MetapixError(
            "NO_ANNOTATIONS",
            f"dataset {dataset_id} v{version} has no exportable annotation "
            "(YOLO sources lack image sizes; QUERY sources are provenance only)",
            {"dataset_id": dataset_id, "version": version},
        )

    def _canonical_items(self, annotation: dict) -> list[LabeledItem]:
        props = annotation["properties"]
        if annotation["type"] == "COCO":
            return parse_coco(props["coco_file_path"], props["root_dir"])
        assert annotation["type"] == "JSONL"
        items = []
        for entry in parse_jsonl(props["manifest_path"]):
            width = float(entry.get("width", 0))
            height = float(entry.get("height", 0))
            boxes = []
            for raw in entry.get("boxes", []):
                box = Box(
                    category=str(raw["category"]),
                    x=float(raw["x"]),
                    y=float(raw["y"]),
                    w=float(raw["w"]),
                    h=float(raw["h"]),
                )
                boxes.append(validate_box(box, width, height, context=entry["uri"]))
            items.append(
                LabeledItem(
                    uri=entry["uri"],
                    width=width,
                    height=height,
                    boxes=boxes,
                    attributes=dict(entry.get("attributes", {})),
                    content_hash=entry.get("content_hash"),
                )
            )
        return items
