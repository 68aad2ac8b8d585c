"""YOLO label-file support.

One ``<image-stem>.txt`` per image with lines ``class_index cx cy w h``
(center coordinates and sizes normalized to [0, 1]) plus a
``classes.txt`` listing category names by index. Pixel conversion:
x = (cx - w/2)*W, y = (cy - h/2)*H, width = w*W, height = h*H.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from metapix.annotations.canonical import Box, LabeledItem, validate_box
from metapix.errors import MetapixError


def read_classes(classes_file: str | Path) -> list[str]:
    try:
        lines = Path(classes_file).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise MetapixError("PARSE_ERROR", f"cannot read {classes_file}: {exc}") from exc
    classes = [line.strip() for line in lines if line.strip()]
    if not classes:
        raise MetapixError("PARSE_ERROR", f"{classes_file} lists no classes")
    return classes


def _parse_line(line: str, classes: list[str], file: str, line_no: int) -> tuple:
    parts = line.split()
    if len(parts) != 5:
        raise MetapixError(
            "BAD_LINE",
            f"{file}:{line_no}: expected 'class cx cy w h', got {len(parts)} fields",
            {"file": file, "line": line_no},
        )
    try:
        class_index = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise MetapixError(
            "BAD_LINE",
            f"{file}:{line_no}: non-numeric field in {line!r}",
            {"file": file, "line": line_no},
        ) from exc
    if not 0 <= class_index < len(classes):
        raise MetapixError(
            "CLASS_OUT_OF_RANGE",
            f"{file}:{line_no}: class index {class_index} with {len(classes)} classes",
            {"file": file, "line": line_no, "class_index": class_index},
        )
    for value in (cx, cy, w, h):
        if not 0.0 <= value <= 1.0:
            raise MetapixError(
                "NORMALIZED_OUT_OF_RANGE",
                f"{file}:{line_no}: value {value} outside [0, 1]",
                {"file": file, "line": line_no, "value": value},
            )
    return class_index, cx, cy, w, h


def validate_labels(labels_dir: str | Path, classes_file: str | Path) -> int:
    """Line-level validation without image sizes; returns the line count."""
    classes = read_classes(classes_file)
    count = 0
    for path in _label_files(labels_dir):
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            _parse_line(line, classes, str(path), line_no)
            count += 1
    return count


def _label_files(labels_dir: str | Path) -> list[Path]:
    directory = Path(labels_dir)
    if not directory.is_dir():
        raise MetapixError("PARSE_ERROR", f"{labels_dir} is not a directory")
    return sorted(
        p for p in directory.iterdir() if p.suffix == ".txt" and p.name != "classes.txt"
    )


def parse_yolo(
    labels_dir: str | Path,
    classes_file: str | Path,
    image_sizes: dict[str, dict],
) -> list[LabeledItem]:
    """Parse a YOLO label directory into canonical items.

    ``image_sizes`` maps each image stem to {"width", "height"} plus an
    optional "uri" (the stem itself otherwise). A label file with no
    size entry is a dangling reference.
    """
    classes = read_classes(classes_file)
    items = []
    for path in _label_files(labels_dir):
        stem = path.stem
        size = image_sizes.get(stem)
        if size is None:
            raise MetapixError(
                "DANGLING_REF",
                f"{path}: no image size known for stem {stem!r}",
                {"stem": stem},
            )
        width, height = size["width"], size["height"]
        item = LabeledItem(uri=size.get("uri", stem), width=width, height=height)
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            class_index, cx, cy, w, h = _parse_line(line, classes, str(path), line_no)
            box = Box(
                category=classes[class_index],
                x=(cx - w / 2) * width,
                y=(cy - h / 2) * height,
                w=w * width,
                h=h * height,
            )
            validate_box(box, width, height, context=f"{path}:{line_no}")
            item.boxes.append(box)
        items.append(item)
    return items


def export_yolo(items: list[LabeledItem], out_dir: Optional[str | Path] = None) -> dict[str, str]:
    """Canonical items to YOLO text files.

    Returns {file_name: content}; when ``out_dir`` is given the files
    are also written there. Class indices follow name-sorted order.
    """
    names = sorted({box.category for item in items for box in item.boxes})
    class_index = {name: i for i, name in enumerate(names)}
    files = {"classes.txt": "".join(name + "\n" for name in names)}
    for item in sorted(items, key=lambda it: it.uri):
        stem = item.uri.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        lines = []
        for box in item.boxes:
            cx = (box.x + box.w / 2) / item.width
            cy = (box.y + box.h / 2) / item.height
            w = box.w / item.width
            h = box.h / item.height
            lines.append(f"{class_index[box.category]} {cx!r} {cy!r} {w!r} {h!r}")
        files[stem + ".txt"] = "".join(line + "\n" for line in lines)
    if out_dir is not None:
        directory = Path(out_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for name, content in files.items():
            (directory / name).write_text(content, encoding="utf-8")
    return files
