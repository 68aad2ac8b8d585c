"""In-process publish/subscribe bus with retained messages.

Stands in for a hosted message broker: topics decouple publishers from
subscribers inside one process. Messages are retained (journaled and
replayable to late subscribers) until their TTL passes, delivery is
at-least-once per subscription, and a message that keeps failing is
parked in a dead-letter journal after ``max_attempts`` tries.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

_STOP = object()


@dataclass(frozen=True)
class Message:
    topic: str
    payload: dict
    message_id: str
    publish_time: float
    delivery_attempts: int = 0


class Subscription:
    """One handler bound to one topic, fed by its own delivery thread."""

    def __init__(self, bus: "MessageBus", topic: str, handler: Callable[[Message], None]):
        self.topic = topic
        self.handler = handler
        self._bus = bus
        self._queue: "queue.Queue" = queue.Queue()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _deliver(self, message: Message) -> None:
        self._queue.put((message, 1))

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is _STOP:
                self._queue.task_done()
                return
            message, attempt = item
            try:
                self.handler(replace(message, delivery_attempts=attempt))
            except Exception as exc:
                if attempt >= self._bus.max_attempts:
                    self._bus._dead_letter(message, attempt, exc)
                else:
                    self._queue.put((message, attempt + 1))
            finally:
                self._queue.task_done()

    def close(self) -> None:
        self._bus._detach(self)
        self._queue.put(_STOP)
        self._thread.join(timeout=5)


class MessageBus:
    """Topic-based at-least-once delivery within one process.

    Publishing with no subscribers is not an error: messages queue in
    the retained journal and are replayed to whoever subscribes within
    ``ttl_seconds``. Handlers may be redelivered the same message, so
    they should dedup by message_id if side effects must be once-only.
    """

    def __init__(
        self,
        root: str | Path,
        max_attempts: int = 5,
        ttl_seconds: float = 3600.0,
    ) -> None:
        self.max_attempts = max_attempts
        self.ttl_seconds = ttl_seconds
        self._dir = Path(root) / "bus"
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._subs: list[Subscription] = []
        self._retained: list[Message] = []
        self._journal = open(self._dir / "messages.jsonl", "a", encoding="utf-8")
        self._replay()

    def _replay(self) -> None:
        path = self._dir / "messages.jsonl"
        if not path.exists():
            return
        now = time.time()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    break
                if now - entry["publish_time"] <= self.ttl_seconds:
                    self._retained.append(
                        Message(
                            topic=entry["topic"],
                            payload=entry["payload"],
                            message_id=entry["message_id"],
                            publish_time=entry["publish_time"],
                        )
                    )

    def _prune(self, now: float) -> None:
        self._retained = [
            m for m in self._retained if now - m.publish_time <= self.ttl_seconds
        ]

    # -- publish/subscribe ----------------------------------------------

    def publish(self, topic: str, payload: dict) -> str:
        if not topic:
            raise ValueError("topic must be non-empty")
        message = Message(
            topic=topic,
            payload=payload,
            message_id=uuid.uuid4().hex,
            publish_time=time.time(),
        )
        with self._lock:
            self._journal.write(
                json.dumps(
                    {
                        "message_id": message.message_id,
                        "topic": topic,
                        "payload": payload,
                        "publish_time": message.publish_time,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
            self._journal.flush()
            self._prune(message.publish_time)
            self._retained.append(message)
            for sub in self._subs:
                if sub.topic == topic:
                    sub._deliver(message)
        return message.message_id

    def subscribe(self, topic: str, handler: Callable[[Message], None]) -> Subscription:
        """Attach a handler; retained messages on the topic replay to it."""
        if not topic:
            raise ValueError("topic must be non-empty")
        sub = Subscription(self, topic, handler)
        with self._lock:
            self._prune(time.time())
            self._subs.append(sub)
            for message in self._retained:
                if message.topic == topic:
                    sub._deliver(message)
        return sub

    def _detach(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def _dead_letter(self, message: Message, attempts: int, exc: Exception) -> None:
        entry = {
            "message_id": message.message_id,
            "topic": message.topic,
            "payload": message.payload,
            "attempts": attempts,
            "error": f"{type(exc).__name__}: {exc}",
        }
        with self._lock:
            with open(self._dir / "dead_letter.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, separators=(",", ":")) + "\n")

    def dead_letters(self) -> list[dict]:
        path = self._dir / "dead_letter.jsonl"
        if not path.exists():
            return []
        return [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    # -- lifecycle --------------------------------------------------------

    def drain(self, timeout: float = 30.0) -> None:
        """Block until every subscription's queue is fully worked off.

        Handlers may publish follow-up messages, so passes repeat until
        a full sweep finds nothing pending.
        """
        deadline = time.time() + timeout
        while True:
            with self._lock:
                subs = list(self._subs)
            for sub in subs:
                sub._queue.join()
            with self._lock:
                pending = any(s._queue.unfinished_tasks for s in self._subs)
            if not pending:
                return
            if time.time() > deadline:
                raise TimeoutError("bus did not drain in time")

    def close(self) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.close()
        with self._lock:
            if not self._journal.closed:
                self._journal.close()
