"""metapix: a self-contained dataset management service for unstructured CV media.

Governed datasources fed by a storage crawler, logical versioned datasets
with content deduplication and lineage, embedding-based semantic search
with a batch job pipeline, and annotation import/export parsers.
"""

from metapix.errors import MetapixError

__version__ = "0.1.0"

__all__ = ["MetapixError", "__version__"]
