"""JSONL media manifests: one JSON object per line, required key ``uri``.

Optional per-line keys: ``attributes`` (map), ``boxes`` (list of
{category, x, y, w, h} pixel boxes, which then require ``width`` and
``height``), and ``content_hash``.
"""

from __future__ import annotations

from pathlib import Path
import json

from metapix.annotations.canonical import Box, validate_box
from metapix.errors import MetapixError


def parse_jsonl(manifest: str | Path) -> list[dict]:
    """Parse a manifest file, preserving line order.

    Returns one dict per line with at least ``uri``. Blank lines are
    rejected: a manifest is a dense record stream, so a blank usually
    means a truncated or hand-mangled file.
    """
    try:
        text = Path(manifest).read_text(encoding="utf-8")
    except OSError as exc:
        raise MetapixError("PARSE_ERROR", f"cannot read {manifest}: {exc}") from exc
    return parse_jsonl_text(text, source=str(manifest))


def parse_jsonl_text(text: str, source: str = "<manifest>") -> list[dict]:
    entries = []
    lines = text.splitlines()
    # ignore a single trailing newline artifact, reject interior blanks
    if lines and not lines[-1].strip():
        lines = lines[:-1]
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            raise MetapixError(
                "PARSE_ERROR",
                f"{source}:{line_no}: blank line",
                {"line": line_no},
            )
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MetapixError(
                "PARSE_ERROR",
                f"{source}:{line_no}: {exc.msg}",
                {"line": line_no},
            ) from exc
        if not isinstance(entry, dict):
            raise MetapixError(
                "PARSE_ERROR",
                f"{source}:{line_no}: line must be a JSON object",
                {"line": line_no},
            )
        uri = entry.get("uri")
        if not uri or not isinstance(uri, str):
            raise MetapixError(
                "MISSING_URI",
                f"{source}:{line_no}: entry has no uri",
                {"line": line_no},
            )
        if "boxes" in entry:
            width, height = entry.get("width"), entry.get("height")
            if not isinstance(width, (int, float)) or not isinstance(height, (int, float)):
                raise MetapixError(
                    "PARSE_ERROR",
                    f"{source}:{line_no}: boxes need width and height",
                    {"line": line_no},
                )
            if not isinstance(entry["boxes"], list):
                raise MetapixError(
                    "PARSE_ERROR",
                    f"{source}:{line_no}: boxes must be a list",
                    {"line": line_no},
                )
            for raw in entry["boxes"]:
                try:
                    box = Box(
                        category=str(raw["category"]),
                        x=float(raw["x"]),
                        y=float(raw["y"]),
                        w=float(raw["w"]),
                        h=float(raw["h"]),
                    )
                except (TypeError, KeyError, ValueError) as exc:
                    raise MetapixError(
                        "PARSE_ERROR",
                        f"{source}:{line_no}: bad box {raw!r}",
                        {"line": line_no},
                    ) from exc
                validate_box(box, width, height, context=f"{source}:{line_no}")
        entries.append(entry)
    return entries
