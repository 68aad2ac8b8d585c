from metapix.catalog.access import ALLOW, AccessDecision, Principal, check_access
from metapix.catalog.service import CatalogService

__all__ = [
    "ALLOW",
    "AccessDecision",
    "Principal",
    "check_access",
    "CatalogService",
]
