"""Recursive-descent parser for the dataset filter language.

Grammar (keywords case-insensitive, identifiers case-sensitive):

    expr  := or
    or    := and (OR and)*
    and   := not (AND not)*
    not   := NOT not | prim
    prim  := '(' expr ')' | pred
    pred  := ident cmpop lit
           | lit cmpop lit
           | ident IN '(' lit (',' lit)* ')'
           | ident LIKE string
    cmpop := '=' | '!=' | '<' | '<=' | '>' | '>='
    lit   := string | number | TRUE | FALSE | NULL
    ident := [A-Za-z_][A-Za-z0-9_.]*

Parse failures raise QUERY_PARSE_ERROR carrying the byte offset of the
offending token and the set of token kinds that would have been legal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from metapix.errors import MetapixError
from metapix.query.ast import And, Cmp, CmpLit, FilterExpr, In, Like, Not, Or

_KEYWORDS = {"AND", "OR", "NOT", "IN", "LIKE", "TRUE", "FALSE", "NULL"}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_NUMBER_RE = re.compile(r"-?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?")


@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT, STRING, NUMBER, keyword name, CMPOP, LPAREN, RPAREN, COMMA, EOF
    value: object
    pos: int  # character offset into the query text


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _parse_error(text: str, pos: int, expected: set[str], found: str) -> MetapixError:
    offset = _byte_offset(text, pos)
    wanted = ", ".join(sorted(expected))
    return MetapixError(
        "QUERY_PARSE_ERROR",
        f"at byte offset {offset}: expected {wanted}, found {found}",
        {"offset": offset, "expected": sorted(expected)},
    )


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("LPAREN", "(", i))
            i += 1
        elif ch == ")":
            tokens.append(_Token("RPAREN", ")", i))
            i += 1
        elif ch == ",":
            tokens.append(_Token("COMMA", ",", i))
            i += 1
        elif ch == "'":
            end = text.find("'", i + 1)
            if end == -1:
                raise _parse_error(text, n, {"closing quote"}, "end of input")
            tokens.append(_Token("STRING", text[i + 1 : end], i))
            i = end + 1
        elif ch in "=<>!":
            if text[i : i + 2] in ("<=", ">=", "!="):
                tokens.append(_Token("CMPOP", text[i : i + 2], i))
                i += 2
            elif ch in "=<>":
                tokens.append(_Token("CMPOP", ch, i))
                i += 1
            else:
                raise _parse_error(text, i, {"comparison operator"}, repr(ch))
        elif ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            m = _NUMBER_RE.match(text, i)
            lexeme = m.group(0)
            value = int(lexeme) if re.fullmatch(r"-?[0-9]+", lexeme) else float(lexeme)
            tokens.append(_Token("NUMBER", value, i))
            i = m.end()
        else:
            m = _IDENT_RE.match(text, i)
            if not m:
                raise _parse_error(text, i, {"identifier", "literal", "'('"}, repr(ch))
            lexeme = m.group(0)
            upper = lexeme.upper()
            if upper in _KEYWORDS:
                tokens.append(_Token(upper, upper, i))
            else:
                tokens.append(_Token("IDENT", lexeme, i))
            i = m.end()
    tokens.append(_Token("EOF", None, n))
    return tokens


_LITERAL_KINDS = {"STRING", "NUMBER", "TRUE", "FALSE", "NULL"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: set[str]) -> MetapixError:
        tok = self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(tok.value)
        return _parse_error(self.text, tok.pos, expected, found)

    def expect(self, kind: str, label: str) -> _Token:
        if self.peek().kind != kind:
            raise self.fail({label})
        return self.advance()

    # -- grammar ------------------------------------------------------

    def parse(self) -> FilterExpr:
        expr = self.or_expr()
        if self.peek().kind != "EOF":
            raise self.fail({"AND", "OR", "end of input"})
        return expr

    def or_expr(self) -> FilterExpr:
        children = [self.and_expr()]
        while self.peek().kind == "OR":
            self.advance()
            children.append(self.and_expr())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def and_expr(self) -> FilterExpr:
        children = [self.not_expr()]
        while self.peek().kind == "AND":
            self.advance()
            children.append(self.not_expr())
        return children[0] if len(children) == 1 else And(tuple(children))

    def not_expr(self) -> FilterExpr:
        if self.peek().kind == "NOT":
            self.advance()
            return Not(self.not_expr())
        return self.prim()

    def prim(self) -> FilterExpr:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.advance()
            expr = self.or_expr()
            self.expect("RPAREN", "')'")
            return expr
        if tok.kind == "IDENT":
            return self.pred(self.advance().value)
        if tok.kind in _LITERAL_KINDS:
            left = self.literal()
            op = self.expect("CMPOP", "comparison operator").value
            return CmpLit(left, op, self.literal())
        raise self.fail({"identifier", "literal", "'('"})

    def pred(self, field: str) -> FilterExpr:
        tok = self.peek()
        if tok.kind == "CMPOP":
            op = self.advance().value
            return Cmp(field, op, self.literal())
        if tok.kind == "IN":
            self.advance()
            self.expect("LPAREN", "'('")
            values = [self.literal()]
            while self.peek().kind == "COMMA":
                self.advance()
                values.append(self.literal())
            self.expect("RPAREN", "')'")
            return In(field, tuple(values))
        if tok.kind == "LIKE":
            self.advance()
            if self.peek().kind != "STRING":
                raise self.fail({"string"})
            return Like(field, self.advance().value)
        raise self.fail({"comparison operator", "IN", "LIKE"})

    def literal(self):
        tok = self.peek()
        if tok.kind == "STRING" or tok.kind == "NUMBER":
            return self.advance().value
        if tok.kind == "TRUE":
            self.advance()
            return True
        if tok.kind == "FALSE":
            self.advance()
            return False
        if tok.kind == "NULL":
            self.advance()
            return None
        raise self.fail({"literal"})


def parse(query_text: str) -> FilterExpr:
    """Parse query text into a filter AST.

    Raises QUERY_PARSE_ERROR with the byte offset of the problem and
    the token kinds that would have been accepted there.
    """
    return _Parser(query_text).parse()
