"""Segment-level vector index with exact and approximate retrieval.

One index per scope (a datasource, or a dataset at a version). Each
scope persists as ``<root>/index/<scope>/vectors.bin`` (little-endian
float32 rows) plus ``records.jsonl`` (one metadata line per row, same
order). Rows are kept sorted by (content_hash, segment start, model_id)
so the files are byte-identical however the records arrived.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from metapix.errors import MetapixError
from metapix.search.ann import HyperplaneLsh
from metapix.search.embedder import Embedder

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Scope:
    """Search scope: a whole datasource or one dataset version."""

    kind: str  # "datasource" | "dataset"
    id: str
    version: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("datasource", "dataset"):
            raise ValueError(f"bad scope kind {self.kind!r}")
        if self.kind == "dataset" and self.version is None:
            raise ValueError("dataset scope needs a version")

    def __str__(self) -> str:
        if self.kind == "datasource":
            return f"ds:{self.id}"
        return f"dataset:{self.id}:v{self.version}"


def parse_scope(text: str) -> Scope:
    """Parse ``ds:<id>`` or ``dataset:<id>:v<n>``."""
    parts = text.split(":")
    if len(parts) == 2 and parts[0] == "ds" and parts[1]:
        return Scope("datasource", parts[1])
    if (
        len(parts) == 3
        and parts[0] == "dataset"
        and parts[1]
        and parts[2].startswith("v")
        and parts[2][1:].isdigit()
    ):
        return Scope("dataset", parts[1], int(parts[2][1:]))
    raise MetapixError(
        "UNKNOWN_SCOPE",
        f"bad scope {text!r}; use ds:<datasource-id> or dataset:<id>:v<n>",
    )


@dataclass(frozen=True)
class SearchHit:
    uri: str
    content_hash: str
    segment: Optional[dict]
    score: float  # cosine similarity, reported to 6 decimal places
    rank: int

    def to_dict(self) -> dict:
        return {
            "uri": self.uri,
            "content_hash": self.content_hash,
            "segment": self.segment,
            "score": self.score,
            "rank": self.rank,
        }


def _segment_start(segment: Optional[dict]) -> float:
    return float(segment["start_seconds"]) if segment else -1.0


def _record_key(record: dict) -> tuple:
    seg = record.get("segment")
    seg_key = (seg["start_seconds"], seg["end_seconds"]) if seg else None
    return (record["content_hash"], seg_key, record["model_id"])


def _sort_key(record: dict) -> tuple:
    return (record["content_hash"], _segment_start(record.get("segment")), record["model_id"])


class _ScopeState:
    """Immutable snapshot swapped in atomically on every write."""

    def __init__(self, records: list[dict], matrix: np.ndarray):
        self.records = records
        self.matrix = matrix
        self.lsh: Optional[HyperplaneLsh] = None
        self.lsh_guard = threading.Lock()


class VectorIndex:
    """Persistent per-scope vector store with EXACT and APPROX knn.

    Reads are lock-free against immutable snapshots; writes serialize
    on one lock and never expose a partially applied batch.
    """

    def __init__(
        self,
        root: str | Path,
        dimension: int = 256,
        ann_tables: int = 16,
        ann_bits: int = 12,
        ann_seed: int = 20240901,
        ann_probe_radius: int = 3,
    ) -> None:
        self.root = Path(root) / "index"
        self.dimension = dimension
        self._ann_params = (ann_tables, ann_bits, ann_seed, ann_probe_radius)
        self._write_lock = threading.RLock()
        self._scopes: dict[str, _ScopeState] = {}
        self._load_all()

    # -- persistence ---------------------------------------------------

    def _scope_dir(self, scope: Scope) -> Path:
        return self.root / str(scope)

    def _load_all(self) -> None:
        if not self.root.exists():
            return
        for scope_dir in sorted(self.root.iterdir()):
            records_path = scope_dir / "records.jsonl"
            vectors_path = scope_dir / "vectors.bin"
            if not (records_path.exists() and vectors_path.exists()):
                continue
            records = [
                json.loads(line)
                for line in records_path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            raw = np.fromfile(vectors_path, dtype="<f4")
            if raw.size != len(records) * self.dimension:
                raise MetapixError(
                    "STORAGE_IO",
                    f"index at {scope_dir} is inconsistent: "
                    f"{raw.size} floats for {len(records)} records",
                )
            matrix = raw.reshape(len(records), self.dimension)
            self._scopes[scope_dir.name] = _ScopeState(records, matrix)

    def _flush(self, scope: Scope, state: _ScopeState) -> None:
        scope_dir = self._scope_dir(scope)
        scope_dir.mkdir(parents=True, exist_ok=True)
        tmp_vec = scope_dir / "vectors.bin.tmp"
        tmp_rec = scope_dir / "records.jsonl.tmp"
        try:
            state.matrix.astype("<f4").tofile(tmp_vec)
            with open(tmp_rec, "w", encoding="utf-8") as fh:
                for record in state.records:
                    fh.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")
            tmp_vec.replace(scope_dir / "vectors.bin")
            tmp_rec.replace(scope_dir / "records.jsonl")
        except OSError as exc:
            raise MetapixError("STORAGE_IO", f"cannot persist index: {exc}") from exc

    # -- writes ----------------------------------------------------------

    def index_add(self, scope: Scope, records: Iterable[dict]) -> int:
        """Upsert embedding records; returns the scope's new row count.

        Each record needs content_hash, uri, model_id, vector, and an
        optional segment {start_seconds, end_seconds}. Re-inserting an
        existing (content_hash, segment, model_id) replaces it.
        """
        incoming = list(records)
        for record in incoming:
            vector = np.asarray(record["vector"], dtype=np.float64)
            if vector.shape != (self.dimension,):
                raise MetapixError(
                    "DIMENSION_MISMATCH",
                    f"vector for {record.get('uri')} has {vector.size} components, "
                    f"index dimension is {self.dimension}",
                )
            norm = float(np.linalg.norm(vector))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise MetapixError(
                    "NOT_NORMALIZED",
                    f"vector for {record.get('uri')} has norm {norm:.8f}",
                )
        with self._write_lock:
            current = self._scopes.get(str(scope))
            by_key: dict[tuple, tuple[dict, np.ndarray]] = {}
            if current is not None:
                for row, record in enumerate(current.records):
                    by_key[_record_key(record)] = (record, current.matrix[row])
            for record in incoming:
                vector = np.asarray(record["vector"], dtype=np.float64).astype("<f4")
                meta = {
                    "content_hash": record["content_hash"],
                    "uri": record["uri"],
                    "segment": record.get("segment"),
                    "model_id": record["model_id"],
                    "scope": str(scope),
                }
                meta["id"] = "emb:{}:{}:{}".format(
                    meta["content_hash"],
                    _segment_start(meta["segment"]),
                    meta["model_id"],
                )
                by_key[_record_key(meta)] = (meta, vector)
            merged = sorted(by_key.values(), key=lambda pair: _sort_key(pair[0]))
            new_records = [record for record, _ in merged]
            if merged:
                new_matrix = np.stack([vec for _, vec in merged]).astype("<f4")
            else:
                new_matrix = np.empty((0, self.dimension), dtype="<f4")
            state = _ScopeState(new_records, new_matrix)
            self._flush(scope, state)
            self._scopes[str(scope)] = state
            return len(new_records)

    # -- reads -----------------------------------------------------------

    def size(self, scope: Scope) -> int:
        state = self._scopes.get(str(scope))
        return len(state.records) if state else 0

    def records_for(self, scope: Scope) -> list[dict]:
        state = self._scopes.get(str(scope))
        return [dict(r) for r in state.records] if state else []

    def copy_records(
        self,
        source: Scope,
        target: Scope,
        content_hashes: Optional[set] = None,
        record_ids: Optional[set] = None,
    ) -> int:
        """Copy (a filtered subset of) one scope's records into another.

        Used to inherit embeddings without recomputation; filters by
        content hash and/or record id when given. Returns the number of
        records copied.
        """
        state = self._scopes.get(str(source))
        if state is None:
            return 0
        rows = []
        for position, record in enumerate(state.records):
            if content_hashes is not None and record["content_hash"] not in content_hashes:
                continue
            if record_ids is not None and record["id"] not in record_ids:
                continue
            rows.append({**record, "vector": state.matrix[position].astype(np.float64)})
        if rows:
            self.index_add(target, rows)
        return len(rows)

    def has_key(self, scope: Scope, content_hash: str, segment: Optional[dict], model_id: str) -> bool:
        state = self._scopes.get(str(scope))
        if state is None:
            return False
        key = _record_key(
            {"content_hash": content_hash, "segment": segment, "model_id": model_id}
        )
        return any(_record_key(r) == key for r in state.records)

    def has_content(self, scope: Scope, content_hash: str, model_id: str) -> bool:
        """True if any record (any segment) exists for the hash and model."""
        state = self._scopes.get(str(scope))
        if state is None:
            return False
        return any(
            r["content_hash"] == content_hash and r["model_id"] == model_id
            for r in state.records
        )

    def knn(
        self, scope: Scope, query_vector: np.ndarray, k: int, mode: str = "EXACT"
    ) -> list[SearchHit]:
        """Top-k by cosine similarity (vectors are unit norm, so dot).

        Scores are rounded to 6 decimal places and order is total:
        descending score, then ascending (content_hash, segment start).
        APPROX prunes via hyperplane bucketing and exact-scores the
        candidate union; if pruning leaves fewer than k candidates the
        scan falls back to the full scope so the result-length contract
        (min(k, scope size)) always holds.
        """
        if k < 1:
            raise MetapixError("BAD_K", f"k must be >= 1, got {k}")
        if mode not in ("EXACT", "APPROX"):
            raise ValueError(f"bad knn mode {mode!r}")
        state = self._scopes.get(str(scope))
        if state is None or not state.records:
            return []
        query = np.asarray(query_vector, dtype=np.float64)
        if query.shape != (self.dimension,):
            raise MetapixError(
                "DIMENSION_MISMATCH",
                f"query vector has {query.size} components, index dimension is {self.dimension}",
            )

        if mode == "APPROX":
            rows = self._approx_rows(state, query)
            if rows.size < min(k, len(state.records)):
                rows = np.arange(len(state.records))
        else:
            rows = np.arange(len(state.records))

        scores = state.matrix[rows].astype(np.float64) @ query
        ranked = sorted(
            (
                (
                    -round(float(score), 6),
                    state.records[row]["content_hash"],
                    _segment_start(state.records[row].get("segment")),
                    row,
                )
                for row, score in zip(rows.tolist(), scores)
            )
        )
        hits = []
        for rank, (neg_score, _, _, row) in enumerate(ranked[:k], start=1):
            record = state.records[row]
            hits.append(
                SearchHit(
                    uri=record["uri"],
                    content_hash=record["content_hash"],
                    segment=record.get("segment"),
                    score=-neg_score,
                    rank=rank,
                )
            )
        return hits

    def _approx_rows(self, state: _ScopeState, query: np.ndarray) -> np.ndarray:
        with state.lsh_guard:
            if state.lsh is None:
                tables, bits, seed, radius = self._ann_params
                lsh = HyperplaneLsh(
                    self.dimension, tables=tables, bits=bits, seed=seed, probe_radius=radius
                )
                lsh.fit(state.matrix.astype(np.float64))
                state.lsh = lsh
        return state.lsh.candidates(query)


def search(
    index: VectorIndex,
    embedder: Embedder,
    scope: Scope,
    query_text: str,
    k: int,
    mode: str = "EXACT",
) -> list[SearchHit]:
    """Embed query text and retrieve the nearest indexed segments."""
    vector = embedder.embed_text(query_text)
    return index.knn(scope, vector, k, mode=mode)
