"""Access decisions over datasources and datasets.

The role model is flat group names matched by set intersection. Owners
keep access to what they created regardless of role drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Principal:
    user_id: str
    roles: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(dict.fromkeys(self.roles)))


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


ALLOW = AccessDecision(True)


def _deny(reason: str) -> AccessDecision:
    return AccessDecision(False, reason)


def check_access(principal: Principal, resource: dict) -> AccessDecision:
    """Total function: ALLOW or DENY(reason), never an exception.

    Datasources gate on their own roles; datasets gate on the roles
    snapshotted from their datasource at creation time.
    """
    if "access_level" in resource:  # datasource
        if resource.get("data_owner") == principal.user_id:
            return ALLOW
        if resource["access_level"] == "UNRESTRICTED":
            return ALLOW
        shared = set(principal.roles) & set(resource.get("roles", []))
        if shared:
            return ALLOW
        return _deny(
            f"datasource {resource.get('id')} is gated to roles "
            f"{sorted(resource.get('roles', []))}"
        )

    # dataset
    if resource.get("creator_id") == principal.user_id:
        return ALLOW
    if resource.get("visibility") == "PUBLIC":
        return ALLOW
    snapshot = resource.get("datasource") or {}
    if snapshot.get("data_owner") == principal.user_id:
        return ALLOW
    shared = set(principal.roles) & set(snapshot.get("roles", []))
    if shared:
        return ALLOW
    return _deny(
        f"dataset {resource.get('id')} is restricted to roles "
        f"{sorted(snapshot.get('roles', []))}"
    )
