"""Tokenizer and recursive-descent parser for the supported SQL subset.

Grammar (keywords case-insensitive)::

    query    := SELECT items FROM from [WHERE expr] [GROUP BY exprs]
                [HAVING expr] [ORDER BY order_items] [LIMIT int]
    items    := '*' | item (',' item)*          item := expr [[AS] ident]
    from     := table_ref ( ',' table_ref | [INNER] JOIN table_ref ON expr )*
    table_ref:= ident [[AS] ident]
    expr     := or_expr
    or_expr  := and_expr (OR and_expr)*
    and_expr := not_expr (AND not_expr)*
    not_expr := NOT not_expr | predicate
    predicate:= EXISTS '(' query ')'
              | sum [ cmp sum | IS [NOT] NULL | [NOT] BETWEEN sum AND sum
                    | [NOT] IN '(' (query | exprs) ')' | [NOT] LIKE sum ]
    sum      := term (('+'|'-') term)*      term := unary (('*'|'/') unary)*
    unary    := '-' unary | primary
    primary  := literal | column | func '(' args ')' | CAST '(' expr AS type ')'
              | EXTRACT '(' (YEAR|MONTH|DAY) FROM expr ')' | '(' expr ')'
    literal  := int | decimal | float | string | TRUE | FALSE | NULL
              | DATE string | TIMESTAMP string
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from typing import Any

from . import ast as A


class SqlSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"syntax error at line {line}, column {col}: {message}")
        self.line = line
        self.col = col
        self.message = message


KEYWORDS = frozenset(
    """SELECT FROM WHERE GROUP BY HAVING ORDER ASC DESC LIMIT JOIN INNER ON AS AND OR NOT
    IN EXISTS BETWEEN LIKE IS NULL TRUE FALSE DATE TIMESTAMP CAST EXTRACT DISTINCT
    LEFT RIGHT OUTER FULL CROSS UNION INTERSECT EXCEPT INSERT UPDATE DELETE CREATE DROP""".split()
)

TYPE_NAMES = {
    "INTEGER": "integer", "INT": "integer", "BIGINT": "integer",
    "FLOAT": "float", "DOUBLE": "float", "REAL": "float",
    "DECIMAL": "decimal", "NUMERIC": "decimal",
    "VARCHAR": "varchar", "TEXT": "varchar",
    "BOOLEAN": "boolean", "DATE": "date", "TIMESTAMP": "timestamp",
}

FUNCTIONS = frozenset({"SUM", "COUNT", "MIN", "MAX", "AVG", "LOWER", "UPPER"})


@dataclass(frozen=True)
class Token:
    kind: str  # kw, ident, int, num, str, op, eof
    text: str
    line: int
    col: int
    value: Any = None


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>'(?:[^']|'')*')
  | (?P<qident>"[^"]+")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|[=<>+\-*/(),.;])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        raw = m.group()
        if kind == "num":
            if "e" in raw.lower():
                tokens.append(Token("num", raw, line, col, ("float", float(raw))))
            elif "." in raw:
                tokens.append(Token("num", raw, line, col, ("decimal", float(raw))))
            else:
                tokens.append(Token("num", raw, line, col, ("integer", int(raw))))
        elif kind == "str":
            tokens.append(Token("str", raw, line, col, raw[1:-1].replace("''", "'")))
        elif kind == "qident":
            tokens.append(Token("ident", raw, line, col, raw[1:-1]))
        elif kind == "ident":
            up = raw.upper()
            if up in KEYWORDS:
                tokens.append(Token("kw", up, line, col))
            else:
                tokens.append(Token("ident", raw, line, col, raw))
        elif kind == "op":
            tokens.append(Token("op", raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            line_start = pos + raw.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> SqlSyntaxError:
        tok = tok or self.tok
        return SqlSyntaxError(msg, tok.line, tok.col)

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "kw" and self.tok.text in words

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def take(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            raise self.error(f"expected {word}, found {self._describe()}")
        return self.take()

    def expect_op(self, op: str) -> Token:
        if not self.at_op(op):
            raise self.error(f"expected {op!r}, found {self._describe()}")
        return self.take()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind == "kw":
            raise self.error(f"reserved word {self.tok.text} cannot be used as {what}")
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}, found {self._describe()}")
        return self.take()

    def _describe(self) -> str:
        t = self.tok
        return "end of input" if t.kind == "eof" else repr(t.text)

    # -- grammar
    def parse(self) -> A.Select:
        q = self.query()
        if self.at_op(";"):
            self.take()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self._describe()} after end of query")
        return q

    def query(self) -> A.Select:
        start = self.expect_kw("SELECT")
        if self.at_kw("DISTINCT"):
            raise self.error("SELECT DISTINCT is not supported")
        star = False
        items: list[A.SelectItem] = []
        if self.at_op("*"):
            self.take()
            star = True
        else:
            items.append(self.select_item())
            while self.at_op(","):
                self.take()
                items.append(self.select_item())
        self.expect_kw("FROM")
        tables = [A.FromItem(self.table_ref(), None, "first")]
        while True:
            if self.at_op(","):
                self.take()
                tables.append(A.FromItem(self.table_ref(), None, "cross"))
            elif self.at_kw("JOIN", "INNER"):
                if self.take().text == "INNER":
                    self.expect_kw("JOIN")
                ref = self.table_ref()
                self.expect_kw("ON")
                tables.append(A.FromItem(ref, self.expr(), "inner"))
            elif self.at_kw("LEFT", "RIGHT", "FULL", "OUTER", "CROSS"):
                raise self.error(f"{self.tok.text} joins are not supported")
            else:
                break
        where = group = having = order = limit = None
        if self.at_kw("WHERE"):
            self.take()
            where = self.expr()
        if self.at_kw("GROUP"):
            self.take()
            self.expect_kw("BY")
            group = [self.expr()]
            while self.at_op(","):
                self.take()
                group.append(self.expr())
        if self.at_kw("HAVING"):
            self.take()
            having = self.expr()
        if self.at_kw("ORDER"):
            self.take()
            self.expect_kw("BY")
            order = [self.order_item()]
            while self.at_op(","):
                self.take()
                order.append(self.order_item())
        if self.at_kw("LIMIT"):
            self.take()
            t = self.tok
            if t.kind != "num" or t.value[0] != "integer":
                raise self.error("LIMIT expects an integer")
            self.take()
            limit = t.value[1]
        if self.at_kw("UNION", "INTERSECT", "EXCEPT"):
            raise self.error("set operations are not supported")
        return A.Select(
            items=items, star=star, from_items=tables, where=where, group_by=group,
            having=having, order_by=order, limit=limit, pos=(start.line, start.col),
        )

    def select_item(self) -> A.SelectItem:
        e = self.expr()
        alias = None
        if self.at_kw("AS"):
            self.take()
            alias = self.expect_ident("alias").value
        elif self.tok.kind == "ident":
            alias = self.take().value
        return A.SelectItem(e, alias)

    def table_ref(self) -> A.TableRef:
        t = self.expect_ident("table name")
        alias = None
        if self.at_kw("AS"):
            self.take()
            alias = self.expect_ident("alias").value
        elif self.tok.kind == "ident":
            alias = self.take().value
        return A.TableRef(t.value, alias, (t.line, t.col))

    def order_item(self) -> A.OrderItem:
        e = self.expr()
        desc = False
        if self.at_kw("ASC", "DESC"):
            desc = self.take().text == "DESC"
        return A.OrderItem(e, desc)

    def expr(self) -> A.Node:
        left = self.and_expr()
        while self.at_kw("OR"):
            t = self.take()
            left = A.Binary("or", left, self.and_expr(), (t.line, t.col))
        return left

    def and_expr(self) -> A.Node:
        left = self.not_expr()
        while self.at_kw("AND"):
            t = self.take()
            left = A.Binary("and", left, self.not_expr(), (t.line, t.col))
        return left

    def not_expr(self) -> A.Node:
        if self.at_kw("NOT"):
            t = self.take()
            return A.Unary("not", self.not_expr(), (t.line, t.col))
        return self.predicate()

    def predicate(self) -> A.Node:
        if self.at_kw("EXISTS"):
            t = self.take()
            self.expect_op("(")
            q = self.query()
            self.expect_op(")")
            return A.Exists(q, (t.line, t.col))
        left = self.sum()
        t = self.tok
        pos = (t.line, t.col)
        if self.at_op("=", "<>", "!=", "<", "<=", ">", ">="):
            op = {"=": "eq", "<>": "ne", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}[self.take().text]
            return A.Binary(op, left, self.sum(), pos)
        if self.at_kw("IS"):
            self.take()
            neg = False
            if self.at_kw("NOT"):
                self.take()
                neg = True
            self.expect_kw("NULL")
            return A.IsNull(left, neg, pos)
        neg = False
        if self.at_kw("NOT"):
            self.take()
            neg = True
            if not self.at_kw("BETWEEN", "IN", "LIKE"):
                raise self.error("expected BETWEEN, IN or LIKE after NOT")
        if self.at_kw("BETWEEN"):
            self.take()
            lo = self.sum()
            self.expect_kw("AND")
            return A.Between(left, lo, self.sum(), neg, pos)
        if self.at_kw("IN"):
            self.take()
            self.expect_op("(")
            if self.at_kw("SELECT"):
                q = self.query()
                self.expect_op(")")
                return A.InSubquery(left, q, neg, pos)
            items = [self.sum()]
            while self.at_op(","):
                self.take()
                items.append(self.sum())
            self.expect_op(")")
            return A.InList(left, items, neg, pos)
        if self.at_kw("LIKE"):
            self.take()
            return A.Like(left, self.sum(), neg, pos)
        return left

    def sum(self) -> A.Node:
        left = self.term()
        while self.at_op("+", "-"):
            t = self.take()
            left = A.Binary("add" if t.text == "+" else "sub", left, self.term(), (t.line, t.col))
        return left

    def term(self) -> A.Node:
        left = self.unary()
        while self.at_op("*", "/"):
            t = self.take()
            left = A.Binary("mul" if t.text == "*" else "div", left, self.unary(), (t.line, t.col))
        return left

    def unary(self) -> A.Node:
        if self.at_op("-"):
            t = self.take()
            return A.Unary("neg", self.unary(), (t.line, t.col))
        if self.at_op("+"):
            self.take()
            return self.unary()
        return self.primary()

    def primary(self) -> A.Node:
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "num":
            self.take()
            return A.Lit(t.value[0], t.value[1], False, pos)
        if t.kind == "str":
            self.take()
            return A.Lit("varchar", t.value, False, pos)
        if self.at_kw("TRUE", "FALSE"):
            self.take()
            return A.Lit("boolean", t.text == "TRUE", False, pos)
        if self.at_kw("NULL"):
            self.take()
            return A.Lit(None, None, False, pos)
        if self.at_kw("DATE", "TIMESTAMP"):
            self.take()
            s = self.tok
            if s.kind != "str":
                raise self.error(f"expected string after {t.text}")
            self.take()
            try:
                if t.text == "DATE":
                    value = dt.date.fromisoformat(s.value)
                    return A.Lit("date", value, True, pos)
                return A.Lit("timestamp", dt.datetime.fromisoformat(s.value), True, pos)
            except ValueError:
                raise self.error(f"invalid {t.text.lower()} literal {s.value!r}", s) from None
        if self.at_kw("CAST"):
            self.take()
            self.expect_op("(")
            e = self.expr()
            self.expect_kw("AS")
            tt = self.tok
            name = tt.text.upper() if tt.kind in ("kw", "ident") else ""
            if name not in TYPE_NAMES:
                raise self.error(f"unknown type {tt.text!r}")
            self.take()
            self.expect_op(")")
            return A.Cast(e, TYPE_NAMES[name], pos)
        if self.at_kw("EXTRACT"):
            self.take()
            self.expect_op("(")
            part = self.tok
            if part.kind != "ident" or part.text.upper() not in ("YEAR", "MONTH", "DAY"):
                raise self.error("expected YEAR, MONTH or DAY")
            self.take()
            self.expect_kw("FROM")
            e = self.expr()
            self.expect_op(")")
            return A.Func(f"EXTRACT_{part.text.upper()}", [e], False, False, pos)
        if self.at_op("("):
            self.take()
            if self.at_kw("SELECT"):
                raise self.error("scalar subqueries are not supported")
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "ident":
            self.take()
            if self.at_op("("):
                name = t.text.upper()
                if name not in FUNCTIONS:
                    raise self.error(f"unknown function {t.text}", t)
                self.take()
                if self.at_op("*"):
                    self.take()
                    self.expect_op(")")
                    if name != "COUNT":
                        raise self.error(f"{name}(*) is not allowed", t)
                    return A.Func(name, [], False, True, pos)
                distinct = False
                if self.at_kw("DISTINCT"):
                    self.take()
                    distinct = True
                args = [self.expr()]
                while self.at_op(","):
                    self.take()
                    args.append(self.expr())
                self.expect_op(")")
                return A.Func(name, args, distinct, False, pos)
            if self.at_op("."):
                self.take()
                col = self.expect_ident("column name")
                return A.Column(t.value, col.value, pos)
            return A.Column(None, t.value, pos)
        if t.kind == "kw":
            raise self.error(f"reserved word {t.text} cannot be used here")
        raise self.error(f"unexpected {self._describe()}")


def parse_sql(text: str) -> A.Select:
    """Parse one query into an :class:`~crossopt.sql.ast.Select`; raises SqlSyntaxError."""
    return _Parser(text).parse()
