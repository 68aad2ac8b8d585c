"""Filter-query language: parsing, canonical serialization, evaluation."""

from metapix.query.ast import (
    And,
    Cmp,
    CmpLit,
    FilterExpr,
    In,
    Like,
    Not,
    Or,
    serialize,
    serialize_literal,
)
from metapix.query.evaluator import evaluate, materialize
from metapix.query.parser import parse

__all__ = [
    "And",
    "Cmp",
    "CmpLit",
    "FilterExpr",
    "In",
    "Like",
    "Not",
    "Or",
    "evaluate",
    "materialize",
    "parse",
    "serialize",
    "serialize_literal",
]
