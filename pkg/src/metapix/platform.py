"""One-call assembly of every service over a shared data root.

The platform owns construction order and the event wiring between
components: the crawler publishes media events, and an embeddings
subscriber turns them into batch jobs for datasources that opted in.
"""

from __future__ import annotations

import threading
import time
import uuid
from pathlib import Path
from typing import Optional

from metapix.annotations.service import AnnotationService
from metapix.catalog.service import CatalogService
from metapix.config import Config
from metapix.crawler import TOPIC_MEDIA_ADDED, Crawler
from metapix.jobs.bus import MessageBus
from metapix.jobs.runner import KIND_EMBEDDING, JobRunner
from metapix.search.embedder import StubEmbedder
from metapix.search.index import Scope, VectorIndex, parse_scope
from metapix.search.index import search as index_search
from metapix.store.blobs import BlobStore
from metapix.store.records import ABSENT, Collection, MetadataStore


class Platform:
    """Every service, wired, rooted at one directory."""

    def __init__(self, root: str | Path, config: Optional[Config] = None):
        self.root = Path(root)
        self.config = config or Config()
        get = self.config.get_int

        self.store = MetadataStore(self.root)
        self.blobs = BlobStore(self.root)
        self.bus = MessageBus(
            self.root,
            max_attempts=get("bus.max_attempts"),
            ttl_seconds=self.config.get_float("bus.ttl_seconds"),
        )
        self.embedder = StubEmbedder(
            dimension=get("embed.dimension"),
            model_id=self.config.get_str("embed.model_id"),
            window_seconds=self.config.get_float("video.window_seconds"),
            stride_seconds=self.config.get_float("video.stride_seconds"),
        )
        self.index = VectorIndex(
            self.root,
            dimension=get("embed.dimension"),
            ann_tables=get("ann.tables"),
            ann_bits=get("ann.bits"),
            ann_seed=get("ann.seed"),
            ann_probe_radius=get("ann.probe_radius"),
        )
        self.crawler = Crawler(
            self.store,
            self.blobs,
            publish=self.bus.publish,
            interval_seconds=self.config.get_float("crawl.interval_seconds"),
        )
        self.catalog = CatalogService(
            self.store, self.blobs, crawler=self.crawler, index=self.index
        )
        self.annotations = AnnotationService(
            self.store, resolve_version=self.catalog.resolve_version
        )
        self.catalog.set_annotations(self.annotations)
        self.runner = JobRunner(
            self.store,
            self.index,
            self.embedder,
            bus=self.bus,
            workers=get("jobs.workers"),
            stamp_scope=self.catalog.stamp_scope,
        )
        self.catalog.set_runner(self.runner)
        self._submitted: set[tuple] = set()
        self._submitted_lock = threading.Lock()
        self._media_sub = self.bus.subscribe(TOPIC_MEDIA_ADDED, self._on_media_added)

    def _on_media_added(self, message) -> None:
        """Queue an embedding job for each new media object.

        Idempotent against redelivery: media already indexed for the
        datasource scope are skipped before a batch is submitted.
        """
        payload = message.payload
        datasource_id = payload.get("datasource_id")
        if not datasource_id:
            return
        record = self.store.get_record(Collection.DATASOURCES, datasource_id)
        if record is ABSENT or not record.get("embeddings_enabled"):
            return
        scope = Scope("datasource", datasource_id)
        if self.index.has_content(scope, payload["content_hash"], self.embedder.model_id):
            return
        key = (str(scope), payload["content_hash"], self.embedder.model_id)
        with self._submitted_lock:
            # two uris with identical bytes, or a redelivery, must not
            # queue a second job while the first is still in flight
            if key in self._submitted:
                return
            self._submitted.add(key)
        self.runner.submit_batch(
            KIND_EMBEDDING,
            scope,
            [
                {
                    "uri": payload["uri"],
                    "content_hash": payload["content_hash"],
                    "path": payload["uri"],
                }
            ],
        )

    def start_crawl(self, datasource_id: str) -> str:
        """Kick off a crawl of every registered location; returns an
        operation id for polling."""
        self.catalog.get_datasource(datasource_id)  # UNKNOWN_DATASOURCE early
        operation_id = "op-" + uuid.uuid4().hex[:12]
        body = {
            "operation_id": operation_id,
            "kind": "CRAWL",
            "scope": f"ds:{datasource_id}",
            "status": "PENDING",
            "items_total": 0,
            "items_done": 0,
            "items_failed": 0,
            "item_results": [],
            "error": None,
            "report": None,
            "created": time.time(),
            "started": None,
            "finished": None,
        }
        self.store.put_record(Collection.OPERATIONS, operation_id, body)

        def run() -> None:
            current = self.store.get_record(Collection.OPERATIONS, operation_id)
            current.update(status="RUNNING", started=time.time())
            self.store.put_record(Collection.OPERATIONS, operation_id, current)
            try:
                report = self.crawler.scan_all(datasource_id)
                self.crawler.build_view(datasource_id)
            except Exception as exc:  # surfaced via the operation record
                current.update(
                    status="FAILED", error=str(exc), finished=time.time()
                )
                self.store.put_record(Collection.OPERATIONS, operation_id, current)
                return
            touched = report["added"] + report["modified"] + report["deleted"]
            current.update(
                status="SUCCEEDED",
                report=report,
                items_total=touched,
                items_done=touched,
                finished=time.time(),
            )
            self.store.put_record(Collection.OPERATIONS, operation_id, current)

        thread = threading.Thread(target=run, daemon=True, name=f"crawl-op-{datasource_id}")
        self.runner._threads[operation_id] = thread
        thread.start()
        return operation_id

    def search(self, scope_text: str, query_text: str, k: int, mode: str = "EXACT"):
        return index_search(
            self.index, self.embedder, parse_scope(scope_text), query_text, k, mode=mode
        )

    def settle(self, timeout: float = 60.0) -> None:
        """Wait until queued messages and the jobs they spawn are done."""
        while True:
            self.bus.drain(timeout=timeout)
            operations = sorted(self.runner._threads)
            for operation_id in operations:
                self.runner.wait(operation_id, timeout=timeout)
            self.bus.drain(timeout=timeout)
            if sorted(self.runner._threads) == operations:
                return

    def close(self) -> None:
        self.crawler.close()
        self.bus.close()
        self.store.close()
        self.blobs.close()
