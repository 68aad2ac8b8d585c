"""Pub/sub bus and batch job runner."""

from metapix.jobs.bus import Message, MessageBus, Subscription
from metapix.jobs.runner import (
    EXTRACTOR_PREFIX,
    KIND_EMBEDDING,
    TOPIC_EMBED_COMPLETED,
    TOPIC_EMBED_REQUESTED,
    JobRunner,
)

TOPIC_MEDIA_ADDED = "media.added"
TOPIC_VERSION_CREATED = "dataset.version.created"

__all__ = [
    "EXTRACTOR_PREFIX",
    "KIND_EMBEDDING",
    "JobRunner",
    "Message",
    "MessageBus",
    "Subscription",
    "TOPIC_EMBED_COMPLETED",
    "TOPIC_EMBED_REQUESTED",
    "TOPIC_MEDIA_ADDED",
    "TOPIC_VERSION_CREATED",
]
