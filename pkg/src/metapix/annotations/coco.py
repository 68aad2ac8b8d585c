"""COCO object-detection subset: parse and export.

Understood keys: ``images(id, file_name, width, height)``,
``annotations(id, image_id, category_id, bbox)``, ``categories(id,
name)``. Unknown annotation keys (segmentation, iscrowd, keypoints,
...) ride along untouched and reappear on export.
"""

from __future__ import annotations

import json
from pathlib import Path

from metapix.annotations.canonical import Box, LabeledItem, validate_box
from metapix.errors import MetapixError

_IMAGE_KEYS = {"id", "file_name", "width", "height"}
_ANN_KEYS = {"id", "image_id", "category_id", "bbox"}


def _load_json(file: str | Path) -> dict:
    try:
        text = Path(file).read_text(encoding="utf-8")
    except OSError as exc:
        raise MetapixError("PARSE_ERROR", f"cannot read {file}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetapixError("PARSE_ERROR", f"{file} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MetapixError("PARSE_ERROR", f"{file}: top level must be an object")
    return doc


def parse_coco(file: str | Path, root_dir: str) -> list[LabeledItem]:
    """Parse a COCO detection file into canonical items, ordered by image id.

    ``root_dir`` prefixes every file_name to form the media uri.
    """
    doc = _load_json(file)
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise MetapixError("PARSE_ERROR", f"{file}: missing array {key!r}")

    categories: dict = {}
    for cat in doc["categories"]:
        try:
            categories[cat["id"]] = str(cat["name"])
        except (TypeError, KeyError) as exc:
            raise MetapixError("PARSE_ERROR", f"bad category entry {cat!r}") from exc

    items: dict = {}
    for img in doc["images"]:
        try:
            image_id = img["id"]
            uri = root_dir.rstrip("/") + "/" + str(img["file_name"])
            width, height = int(img["width"]), int(img["height"])
        except (TypeError, KeyError, ValueError) as exc:
            raise MetapixError("PARSE_ERROR", f"bad image entry {img!r}") from exc
        extras = {k: v for k, v in img.items() if k not in _IMAGE_KEYS}
        items[image_id] = LabeledItem(
            uri=uri, width=width, height=height, attributes=extras
        )

    for ann in doc["annotations"]:
        if not isinstance(ann, dict):
            raise MetapixError("PARSE_ERROR", f"bad annotation entry {ann!r}")
        image_id = ann.get("image_id")
        category_id = ann.get("category_id")
        if image_id not in items:
            raise MetapixError(
                "DANGLING_REF",
                f"annotation {ann.get('id')} references unknown image_id {image_id}",
                {"image_id": image_id},
            )
        if category_id not in categories:
            raise MetapixError(
                "DANGLING_REF",
                f"annotation {ann.get('id')} references unknown category_id {category_id}",
                {"category_id": category_id},
            )
        bbox = ann.get("bbox")
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise MetapixError("PARSE_ERROR", f"annotation {ann.get('id')}: bad bbox {bbox!r}")
        item = items[image_id]
        box = Box(
            category=categories[category_id],
            x=float(bbox[0]),
            y=float(bbox[1]),
            w=float(bbox[2]),
            h=float(bbox[3]),
            extra={k: v for k, v in ann.items() if k not in _ANN_KEYS},
        )
        validate_box(box, item.width, item.height, context=f"image {image_id}")
        item.boxes.append(box)

    # image ids are usually ints but the format allows strings
    order = sorted(items, key=lambda i: (isinstance(i, str), i))
    return [items[image_id] for image_id in order]


def export_coco(items: list[LabeledItem]) -> dict:
    """Canonical items back to a COCO document.

    Ids are dense from 1; categories are sorted by name; annotation
    extras captured at parse time are merged back in.
    """
    names = sorted({box.category for item in items for box in item.boxes})
    category_ids = {name: i + 1 for i, name in enumerate(names)}
    doc = {
        "images": [],
        "annotations": [],
        "categories": [{"id": i, "name": n} for n, i in sorted(category_ids.items(), key=lambda kv: kv[1])],
    }
    ann_id = 1
    for image_id, item in enumerate(sorted(items, key=lambda it: it.uri), start=1):
        file_name = item.uri.rsplit("/", 1)[-1]
        entry = {
            "id": image_id,
            "file_name": file_name,
            "width": item.width,
            "height": item.height,
        }
        entry.update(item.attributes)
        doc["images"].append(entry)
        for box in item.boxes:
            ann = {
                "id": ann_id,
                "image_id": image_id,
                "category_id": category_ids[box.category],
                "bbox": [box.x, box.y, box.w, box.h],
            }
            ann.update(box.extra)
            doc["annotations"].append(ann)
            ann_id += 1
    return doc
