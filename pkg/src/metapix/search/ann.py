"""Approximate candidate generation via random-hyperplane bucketing.

Vectors are signed against seeded hyperplanes to form short bit
signatures; rows sharing a signature land in one bucket. At query time
every bucket within a small Hamming radius of the query's signature is
probed per table (plain single-bucket probing cannot reach the required
recall on near-orthogonal vector clouds), and the union of candidates
is exact-scored by the caller.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def _probe_masks(bits: int, radius: int) -> list[int]:
    masks = [0]
    for r in range(1, radius + 1):
        for positions in combinations(range(bits), r):
            mask = 0
            for pos in positions:
                mask |= 1 << pos
            masks.append(mask)
    return masks


class HyperplaneLsh:
    """Seeded multi-table signature index over unit vectors."""

    def __init__(
        self,
        dimension: int,
        tables: int = 16,
        bits: int = 12,
        seed: int = 20240901,
        probe_radius: int = 3,
    ) -> None:
        self.tables = tables
        self.bits = bits
        self.probe_radius = probe_radius
        rng = np.random.default_rng(seed)
        # planes[t] has one row per signature bit
        self._planes = rng.standard_normal((tables, bits, dimension))
        self._weights = (1 << np.arange(bits)).astype(np.int64)
        self._buckets: list[dict[int, np.ndarray]] = [dict() for _ in range(tables)]
        self._masks = _probe_masks(bits, probe_radius)

    def _signatures(self, matrix: np.ndarray) -> np.ndarray:
        """(n, tables) signature ints for the given row matrix."""
        sigs = np.empty((matrix.shape[0], self.tables), dtype=np.int64)
        for t in range(self.tables):
            projected = matrix @ self._planes[t].T  # (n, bits)
            sigs[:, t] = (projected > 0).astype(np.int64) @ self._weights
        return sigs

    def fit(self, matrix: np.ndarray) -> None:
        sigs = self._signatures(matrix.astype(np.float64, copy=False))
        self._buckets = []
        for t in range(self.tables):
            table: dict[int, list[int]] = {}
            for row, sig in enumerate(sigs[:, t]):
                table.setdefault(int(sig), []).append(row)
            self._buckets.append(
                {sig: np.asarray(rows, dtype=np.int64) for sig, rows in table.items()}
            )

    def candidates(self, vector: np.ndarray) -> np.ndarray:
        """Row indices from every probed bucket, sorted and deduplicated."""
        sigs = self._signatures(vector.reshape(1, -1).astype(np.float64))[0]
        found: list[np.ndarray] = []
        for t in range(self.tables):
            table = self._buckets[t]
            base = int(sigs[t])
            for mask in self._masks:
                rows = table.get(base ^ mask)
                if rows is not None:
                    found.append(rows)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(found))
