"""Durable persistence: journaled document collections and a deduplicating blob store."""

from metapix.store.blobs import BlobEntry, BlobStore
from metapix.store.records import ABSENT, Collection, MetadataStore

__all__ = ["ABSENT", "BlobEntry", "BlobStore", "Collection", "MetadataStore"]
