"""Embedding interface and the deterministic stub implementation.

The stub stands in for a real text/media model: it hashes caption
tokens into a fixed-dimension space so that text queries and media
captions land in one comparable space. Real model adapters plug in by
implementing the same three-member surface (model_id, dimension,
embed_text/embed_media).
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from metapix.errors import MetapixError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = (h ^ byte) * _FNV_PRIME & _MASK64
    return h


class Embedder(Protocol):
    model_id: str
    dimension: int

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_media(
        self, path: str | Path, caption: Optional[str] = None
    ) -> list[tuple[Optional[dict], np.ndarray]]: ...


class StubEmbedder:
    """Token-hash embedder: deterministic, dependency-free.

    embed_text lowercases, splits on non-alphanumeric runs, FNV-1a
    hashes each token, adds +/-1 (sign from bit 63) at component
    ``hash mod dimension``, then L2-normalizes. Media embedding reads a
    caption (sidecar file, manifest line, or a caller-supplied
    attribute value) and embeds it the same way, so text queries and
    media land in one space.
    """

    def __init__(
        self,
        dimension: int = 256,
        model_id: str = "stub-fnv1a",
        window_seconds: float = 5.0,
        stride_seconds: float = 5.0,
    ) -> None:
        self.dimension = dimension
        self.model_id = model_id
        self.window_seconds = window_seconds
        self.stride_seconds = stride_seconds

    # -- text ----------------------------------------------------------

    def embed_text(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise MetapixError("EMPTY_QUERY", "query text has no tokens")
        acc = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            h = _fnv1a(token.encode("utf-8"))
            sign = 1.0 if (h >> 63) & 1 else -1.0
            acc[h % self.dimension] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # tokens cancelled each other out; fall back to a single
            # deterministic component so the vector stays unit-norm
            acc[_fnv1a(" ".join(tokens).encode("utf-8")) % self.dimension] = 1.0
            return acc
        return acc / norm

    # -- media ---------------------------------------------------------

    def embed_media(
        self, path: str | Path, caption: Optional[str] = None
    ) -> list[tuple[Optional[dict], np.ndarray]]:
        """Embed one media object.

        Images yield a single (None, vector) entry. A video (a
        directory holding ``manifest.jsonl``) yields one entry per time
        window, each vector the renormalized mean of the window's
        per-frame caption vectors.

        Caption resolution for images: sidecar ``<path>.txt`` first,
        then the ``caption`` argument (the extended-attribute column),
        else MISSING_CAPTION_SOURCE.
        """
        p = Path(path)
        manifest = p / "manifest.jsonl"
        if p.is_dir() and manifest.exists():
            return self._embed_video(manifest)
        if p.is_dir() or not p.exists():
            raise MetapixError("UNREADABLE_MEDIA", f"cannot read media at {p}")
        sidecar = Path(str(p) + ".txt")
        if sidecar.exists():
            caption = sidecar.read_text(encoding="utf-8").strip()
        if caption is None or not _TOKEN_RE.findall(caption.lower()):
            raise MetapixError(
                "MISSING_CAPTION_SOURCE",
                f"no caption sidecar or caption attribute for {p}",
            )
        return [(None, self.embed_text(caption))]

    def _embed_video(self, manifest: Path) -> list[tuple[Optional[dict], np.ndarray]]:
        try:
            lines = manifest.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise MetapixError("UNREADABLE_MEDIA", f"cannot read {manifest}: {exc}") from exc
        frames: list[tuple[float, str]] = []
        for line in lines:
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                t = float(entry["t"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MetapixError(
                    "UNREADABLE_MEDIA", f"bad manifest line in {manifest}: {line[:80]}"
                ) from exc
            caption = entry.get("caption")
            if not caption or not _TOKEN_RE.findall(str(caption).lower()):
                raise MetapixError(
                    "MISSING_CAPTION_SOURCE",
                    f"manifest frame at t={t} has no caption ({manifest})",
                )
            frames.append((t, str(caption)))
        if not frames:
            raise MetapixError("UNREADABLE_MEDIA", f"empty manifest {manifest}")

        duration = max(t for t, _ in frames)
        out: list[tuple[Optional[dict], np.ndarray]] = []
        for start, end in self.windows(duration):
            # half-open windows; the final instant belongs to the last one
            members = [
                cap
                for t, cap in frames
                if (start <= t < end) or (t == end == duration)
            ]
            if not members:
                continue
            acc = np.zeros(self.dimension, dtype=np.float64)
            for cap in members:
                acc += self.embed_text(cap)
            acc /= len(members)
            norm = float(np.linalg.norm(acc))
            if norm == 0.0:
                continue
            segment = {"start_seconds": start, "end_seconds": end}
            out.append((segment, acc / norm))
        return out

    def windows(self, duration: float) -> list[tuple[float, float]]:
        """Half-open [start, min(start+window, duration)) time windows."""
        out = []
        start = 0.0
        while start < duration:
            out.append((start, min(start + self.window_seconds, duration)))
            start += self.stride_seconds
        return out
