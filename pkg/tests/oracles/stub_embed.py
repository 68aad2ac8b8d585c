"""Independent reference implementation of the stub text embedder.

Hand-rolled FNV-1a and windowing, kept free of any production imports
so agreement between this and the package is a real check.

Contract: lowercase the text, split on non-alphanumeric runs, drop
empty tokens; FNV-1a 64-bit hash each token; add +1 (bit 63 of the
hash set) or -1 at component ``hash mod dimension``; L2-normalize.
"""

from __future__ import annotations

import math

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = h ^ byte
        h = (h * FNV_PRIME) & MASK64
    return h


def tokenize(text: str) -> list[str]:
    tokens = []
    current = []
    for ch in text.lower():
        if ch.isascii() and (ch.isalpha() or ch.isdigit()):
            current.append(ch)
        else:
            if current:
                tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def oracle_embed_text(text: str, dimension: int = 256) -> list[float]:
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("no tokens")
    acc = [0.0] * dimension
    for token in tokens:
        h = fnv1a_64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) & 1 else -1.0
        acc[h % dimension] += sign
    norm = math.sqrt(sum(x * x for x in acc))
    if norm == 0.0:
        fallback = [0.0] * dimension
        fallback[fnv1a_64(" ".join(tokens).encode("utf-8")) % dimension] = 1.0
        return fallback
    return [x / norm for x in acc]


def oracle_cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


def oracle_windows(duration: float, window: float, stride: float) -> list[tuple]:
    out = []
    start = 0.0
    while start < duration:
        out.append((start, min(start + window, duration)))
        start += stride
    return out
