"""Batch job runner with operation tracking.

A batch is a list of media items processed by a bounded worker pool.
Progress lives in an Operation record (PENDING -> RUNNING -> SUCCEEDED
or FAILED) persisted on every counter change, so polling clients see
monotonic progress and terminal snapshots never change afterwards.
"""

from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from metapix.errors import MetapixError
from metapix.jobs.bus import MessageBus
from metapix.search.embedder import Embedder
from metapix.search.index import Scope, VectorIndex, _segment_start
from metapix.store import ABSENT, Collection, MetadataStore

TOPIC_EMBED_REQUESTED = "embeddings.requested"
TOPIC_EMBED_COMPLETED = "embeddings.completed"

KIND_EMBEDDING = "EMBEDDING"
EXTRACTOR_PREFIX = "EXTRACTOR:"


def _now() -> float:
    return time.time()


class JobRunner:
    """Runs EMBEDDING and extractor batches over a worker pool.

    ``stamp_scope(scope, operation_id)`` is called before any worker
    starts; it must verify the scope exists (raising UNKNOWN_SCOPE
    otherwise) and record the operation id on the scope's catalog
    record. Extractor kinds are registrable; unregistered ones mark
    items done without side effects.
    """

    def __init__(
        self,
        store: MetadataStore,
        index: VectorIndex,
        embedder: Embedder,
        bus: Optional[MessageBus] = None,
        workers: int = 4,
        stamp_scope: Optional[Callable[[Scope, str], None]] = None,
    ) -> None:
        self.store = store
        self.index = index
        self.embedder = embedder
        self.bus = bus
        self.workers = max(1, workers)
        self.stamp_scope = stamp_scope
        self._extractors: dict[str, Optional[Callable[[dict], None]]] = {}
        self._op_lock = threading.Lock()
        self._threads: dict[str, threading.Thread] = {}

    def register_extractor(self, name: str, fn: Optional[Callable[[dict], None]] = None) -> None:
        self._extractors[name] = fn

    # -- submission -----------------------------------------------------

    def submit_batch(self, kind: str, scope: Scope, items: list[dict]) -> str:
        """Start a batch; returns its operation id immediately.

        Items need uri, content_hash, and (for EMBEDDING) path; an
        optional caption feeds the embedder when media has no sidecar.
        """
        if not items:
            raise MetapixError("EMPTY_BATCH", "a batch needs at least one item")
        if kind != KIND_EMBEDDING and not kind.startswith(EXTRACTOR_PREFIX):
            raise ValueError(f"unknown job kind {kind!r}")
        operation_id = "op-" + uuid.uuid4().hex[:12]
        if self.stamp_scope is not None:
            # validates the scope and records the operation id on it,
            # before any worker starts
            self.stamp_scope(scope, operation_id)
        body = {
            "operation_id": operation_id,
            "kind": kind,
            "scope": str(scope),
            "status": "PENDING",
            "items_total": len(items),
            "items_done": 0,
            "items_failed": 0,
            "item_results": [
                {"uri": item.get("uri"), "content_hash": item.get("content_hash"),
                 "status": "pending", "records": []}
                for item in items
            ],
            "error": None,
            "created": _now(),
            "started": None,
            "finished": None,
        }
        self.store.put_record(Collection.OPERATIONS, operation_id, body)
        thread = threading.Thread(
            target=self._run_batch,
            args=(operation_id, kind, scope, [dict(item) for item in items]),
            daemon=True,
        )
        self._threads[operation_id] = thread
        thread.start()
        return operation_id

    # -- execution ------------------------------------------------------

    def _update_op(self, operation_id: str, mutate) -> dict:
        with self._op_lock:
            body = self.store.get_record(Collection.OPERATIONS, operation_id)
            mutate(body)
            self.store.put_record(Collection.OPERATIONS, operation_id, body)
            return body

    def _run_batch(self, operation_id: str, kind: str, scope: Scope, items: list[dict]) -> None:
        def start(body):
            body["status"] = "RUNNING"
            body["started"] = _now()

        self._update_op(operation_id, start)

        if self.bus is not None and kind == KIND_EMBEDDING:
            for item in items:
                self.bus.publish(
                    TOPIC_EMBED_REQUESTED,
                    {
                        "operation_id": operation_id,
                        "scope": str(scope),
                        "uri": item.get("uri"),
                        "content_hash": item.get("content_hash"),
                    },
                )

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            futures = [
                pool.submit(self._run_item, operation_id, kind, scope, position, item)
                for position, item in enumerate(items)
            ]
            for future in futures:
                future.result()

        def finish(body):
            body["finished"] = _now()
            if body["items_failed"] == 0:
                body["status"] = "SUCCEEDED"
            else:
                body["status"] = "FAILED"
                body["error"] = (
                    f"{body['items_failed']} of {body['items_total']} items failed"
                )

        self._update_op(operation_id, finish)

    def _run_item(
        self, operation_id: str, kind: str, scope: Scope, position: int, item: dict
    ) -> None:
        try:
            if kind == KIND_EMBEDDING:
                status, record_ids = self._embed_item(scope, item)
            else:
                fn = self._extractors.get(kind[len(EXTRACTOR_PREFIX):])
                if fn is not None:
                    fn(item)
                status, record_ids = "done", []
            error = None
        except MetapixError as exc:
            status, record_ids, error = "failed", [], {"code": exc.code, "message": exc.message}
        except Exception as exc:  # defensive: a worker must never hang the batch
            status, record_ids, error = (
                "failed",
                [],
                {"code": "INTERNAL", "message": f"{type(exc).__name__}: {exc}"},
            )

        def apply(body):
            result = body["item_results"][position]
            result["status"] = status
            result["records"] = record_ids
            if error is not None:
                result["error"] = error
                body["items_failed"] += 1
            else:
                body["items_done"] += 1

        self._update_op(operation_id, apply)
        if self.bus is not None and kind == KIND_EMBEDDING:
            self.bus.publish(
                TOPIC_EMBED_COMPLETED,
                {
                    "operation_id": operation_id,
                    "scope": str(scope),
                    "uri": item.get("uri"),
                    "content_hash": item.get("content_hash"),
                    "status": status,
                    "records": record_ids,
                },
            )

    def _embed_item(self, scope: Scope, item: dict) -> tuple[str, list[str]]:
        content_hash = item["content_hash"]
        model_id = self.embedder.model_id
        if self.index.has_content(scope, content_hash, model_id):
            # already embedded for this scope and model: count done
            return "skipped", []
        entries = self.embedder.embed_media(item["path"], caption=item.get("caption"))
        records = []
        for segment, vector in entries:
            records.append(
                {
                    "content_hash": content_hash,
                    "uri": item["uri"],
                    "segment": segment,
                    "model_id": model_id,
                    "vector": [float(x) for x in vector],
                }
            )
        self.index.index_add(scope, records)
        record_ids = [
            "emb:{}:{}:{}".format(content_hash, _segment_start(r["segment"]), model_id)
            for r in records
        ]
        return "done", record_ids

    # -- queries ----------------------------------------------------------

    def get_operation(self, operation_id: str) -> dict:
        body = self.store.get_record(Collection.OPERATIONS, operation_id)
        if body is ABSENT:
            raise MetapixError("UNKNOWN_OPERATION", f"no operation {operation_id}")
        return body

    def wait(self, operation_id: str, timeout: float = 60.0) -> dict:
        """Block until the operation reaches a terminal status."""
        thread = self._threads.get(operation_id)
        if thread is not None:
            thread.join(timeout)
        deadline = time.time() + timeout
        while True:
            body = self.get_operation(operation_id)
            if body["status"] in ("SUCCEEDED", "FAILED"):
                return body
            if time.time() > deadline:
                raise TimeoutError(f"operation {operation_id} still {body['status']}")
            time.sleep(0.02)
