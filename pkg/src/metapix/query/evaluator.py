"""Filter-expression evaluation against extended-attribute rows.

Evaluation is pure and total: every subexpression is evaluated (no
short-circuiting), so whether a row raises QUERY_TYPE_ERROR never
depends on operand order.
"""

from __future__ import annotations

import re
from typing import Iterable

from metapix.errors import MetapixError
from metapix.query.ast import And, Cmp, CmpLit, FilterExpr, In, Like, Not, Or


def _type_name(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    return "string"


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _type_error(field: str, left, right) -> MetapixError:
    return MetapixError(
        "QUERY_TYPE_ERROR",
        f"cannot order-compare {_type_name(left)} with {_type_name(right)} "
        f"on field {field}",
        {"field": field, "left_type": _type_name(left), "right_type": _type_name(right)},
    )


def _equal(a, b) -> bool:
    """Same-type equality; mismatched kinds are unequal, never an error."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if _is_number(a) and _is_number(b):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False


def _ordered(field: str, value, lit, op: str) -> bool:
    both_num = _is_number(value) and _is_number(lit)
    both_str = isinstance(value, str) and isinstance(lit, str)
    if not (both_num or both_str):
        raise _type_error(field, value, lit)
    if op == "<":
        return value < lit
    if op == "<=":
        return value <= lit
    if op == ">":
        return value > lit
    return value >= lit


def _compare(field: str, value, op: str, lit) -> bool:
    if lit is None:
        if op == "=":
            return value is None
        if op == "!=":
            return value is not None
        raise _type_error(field, value, lit)
    if value is None:
        return False
    if op == "=":
        return _equal(value, lit)
    if op == "!=":
        return not _equal(value, lit)
    return _ordered(field, value, lit, op)


def _compare_literals(left, op: str, right) -> bool:
    if left is None or right is None:
        if op == "=":
            return left is None and right is None
        if op == "!=":
            return not (left is None and right is None)
        raise _type_error("<constant>", left, right)
    if op == "=":
        return _equal(left, right)
    if op == "!=":
        return not _equal(left, right)
    return _ordered("<constant>", left, right, op)


def _like_pattern(pattern: str) -> "re.Pattern":
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def evaluate(expr: FilterExpr, row: dict) -> bool:
    """Decide whether ``row`` satisfies ``expr``.

    A predicate over an attribute the row lacks is false. Order
    comparisons between a number and a string raise QUERY_TYPE_ERROR
    naming the field.
    """
    if isinstance(expr, And):
        verdicts = [evaluate(child, row) for child in expr.children]
        return all(verdicts)
    if isinstance(expr, Or):
        verdicts = [evaluate(child, row) for child in expr.children]
        return any(verdicts)
    if isinstance(expr, Not):
        return not evaluate(expr.child, row)
    if isinstance(expr, Cmp):
        if expr.field not in row:
            return False
        return _compare(expr.field, row[expr.field], expr.op, expr.value)
    if isinstance(expr, CmpLit):
        return _compare_literals(expr.left, expr.op, expr.right)
    if isinstance(expr, In):
        if expr.field not in row:
            return False
        value = row[expr.field]
        hits = []
        for lit in expr.values:
            if lit is None or value is None:
                hits.append(lit is None and value is None)
            else:
                hits.append(_equal(value, lit))
        return any(hits)
    if isinstance(expr, Like):
        if expr.field not in row:
            return False
        value = row[expr.field]
        if value is None:
            return False
        if not isinstance(value, str):
            raise MetapixError(
                "QUERY_TYPE_ERROR",
                f"LIKE needs a string, field {expr.field} is {_type_name(value)}",
                {"field": expr.field, "left_type": _type_name(value)},
            )
        return _like_pattern(expr.pattern).fullmatch(value) is not None
    raise TypeError(f"not a filter expression: {expr!r}")


def materialize(rows: Iterable[dict], expr: FilterExpr) -> list[dict]:
    """Filter view rows by ``expr`` in stable (uri, generation_id) order.

    On a type mismatch the error is re-raised with the first offending
    row (in that same order) identified in its details.
    """
    ordered = sorted(rows, key=lambda r: (r.get("uri", ""), r.get("generation_id", 0)))
    kept = []
    for row in ordered:
        try:
            verdict = evaluate(expr, row)
        except MetapixError as exc:
            if exc.code != "QUERY_TYPE_ERROR":
                raise
            details = dict(exc.details or {})
            details["uri"] = row.get("uri")
            raise MetapixError(
                "QUERY_TYPE_ERROR",
                f"{exc.message} (first offending row: {row.get('uri')})",
                details,
            ) from None
        if verdict:
            kept.append(row)
    return kept
