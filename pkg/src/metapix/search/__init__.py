"""Embedding space, vector index, and KNN retrieval."""

from metapix.search.ann import HyperplaneLsh
from metapix.search.embedder import Embedder, StubEmbedder
from metapix.search.index import Scope, SearchHit, VectorIndex, parse_scope, search

__all__ = [
    "Embedder",
    "HyperplaneLsh",
    "Scope",
    "SearchHit",
    "StubEmbedder",
    "VectorIndex",
    "parse_scope",
    "search",
]
