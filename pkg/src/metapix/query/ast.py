"""Filter-expression AST nodes and their canonical serialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

Literal = Union[str, int, float, bool, None]

CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp:
    """field <op> literal"""

    field: str
    op: str
    value: Literal

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class CmpLit:
    """literal <op> literal, e.g. the tautology 1 = 1"""

    left: Literal
    op: str
    right: Literal

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class In:
    field: str
    values: tuple

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("IN needs at least one literal")


@dataclass(frozen=True)
class Like:
    field: str
    pattern: str


@dataclass(frozen=True)
class Not:
    child: "FilterExpr"


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("AND needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("OR needs at least two children")


FilterExpr = Union[Cmp, CmpLit, In, Like, Not, And, Or]


def serialize_literal(value: Literal) -> str:
    if value is None:
        return "NULL"
    if value is True:
        return "TRUE"
    if value is False:
        return "FALSE"
    if isinstance(value, str):
        # v1 string literals cannot contain a single quote
        return "'" + value + "'"
    return repr(value)


def serialize(expr: FilterExpr) -> str:
    """Render an AST as canonical query text that re-parses to an equal AST.

    Parentheses are emitted only where the grammar's precedence
    (NOT > AND > OR) would otherwise reshape the tree.
    """
    if isinstance(expr, Cmp):
        return f"{expr.field} {expr.op} {serialize_literal(expr.value)}"
    if isinstance(expr, CmpLit):
        return (
            f"{serialize_literal(expr.left)} {expr.op} {serialize_literal(expr.right)}"
        )
    if isinstance(expr, In):
        inner = ", ".join(serialize_literal(v) for v in expr.values)
        return f"{expr.field} IN ({inner})"
    if isinstance(expr, Like):
        return f"{expr.field} LIKE {serialize_literal(expr.pattern)}"
    if isinstance(expr, Not):
        child = serialize(expr.child)
        if isinstance(expr.child, (And, Or)):
            return f"NOT ({child})"
        return f"NOT {child}"
    if isinstance(expr, And):
        parts = []
        for child in expr.children:
            text = serialize(child)
            # nested AND keeps parens so the tree shape survives re-parsing
            if isinstance(child, (And, Or)):
                text = f"({text})"
            parts.append(text)
        return " AND ".join(parts)
    if isinstance(expr, Or):
        parts = []
        for child in expr.children:
            text = serialize(child)
            if isinstance(child, Or):
                text = f"({text})"
            parts.append(text)
        return " OR ".join(parts)
    raise TypeError(f"not a filter expression: {expr!r}")
