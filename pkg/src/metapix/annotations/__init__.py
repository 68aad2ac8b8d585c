from metapix.annotations.canonical import GEOM_EPS, Box, LabeledItem, validate_box
from metapix.annotations.coco import export_coco, parse_coco
from metapix.annotations.jsonl import parse_jsonl, parse_jsonl_text
from metapix.annotations.service import (
    EXPORTABLE_TYPES,
    REQUIRED_PROPERTIES,
    AnnotationService,
)
from metapix.annotations.yolo import (
    export_yolo,
    parse_yolo,
    read_classes,
    validate_labels,
)

__all__ = [
    "GEOM_EPS",
    "Box",
    "LabeledItem",
    "validate_box",
    "parse_coco",
    "export_coco",
    "parse_yolo",
    "export_yolo",
    "read_classes",
    "validate_labels",
    "parse_jsonl",
    "parse_jsonl_text",
    "AnnotationService",
    "REQUIRED_PROPERTIES",
    "EXPORTABLE_TYPES",
]
