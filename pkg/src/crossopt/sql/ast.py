"""Unresolved syntax tree produced by the parser."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

Pos = tuple  # (line, column)


@dataclass
class Column:
    table: Optional[str]
    name: str
    pos: Pos = (0, 0)


@dataclass
class Lit:
    dtype: Optional[str]  # None for an untyped NULL
    value: Any
    casted: bool = False
    pos: Pos = (0, 0)


@dataclass
class Unary:
    op: str  # not | neg
    arg: "Node"
    pos: Pos = (0, 0)


@dataclass
class Binary:
    op: str
    left: "Node"
    right: "Node"
    pos: Pos = (0, 0)


@dataclass
class Func:
    name: str
    args: list
    distinct: bool = False
    star: bool = False
    pos: Pos = (0, 0)


@dataclass
class Cast:
    arg: "Node"
    dtype: str
    pos: Pos = (0, 0)


@dataclass
class Between:
    arg: "Node"
    low: "Node"
    high: "Node"
    negated: bool = False
    pos: Pos = (0, 0)


@dataclass
class InList:
    arg: "Node"
    items: list
    negated: bool = False
    pos: Pos = (0, 0)


@dataclass
class InSubquery:
    arg: "Node"
    query: "Select"
    negated: bool = False
    pos: Pos = (0, 0)


@dataclass
class Exists:
    query: "Select"
    pos: Pos = (0, 0)


@dataclass
class IsNull:
    arg: "Node"
    negated: bool = False
    pos: Pos = (0, 0)


@dataclass
class Like:
    arg: "Node"
    pattern: "Node"
    negated: bool = False
    pos: Pos = (0, 0)


Node = Union[Column, Lit, Unary, Binary, Func, Cast, Between, InList, InSubquery, Exists, IsNull, Like]


@dataclass
class TableRef:
    name: str
    alias: Optional[str]
    pos: Pos = (0, 0)

    @property
    def label(self) -> str:
        return self.alias or self.name


@dataclass
class FromItem:
    table: TableRef
    condition: Optional[Node]
    join: str  # first | cross | inner


@dataclass
class SelectItem:
    expr: Node
    alias: Optional[str] = None


@dataclass
class OrderItem:
    expr: Node
    descending: bool = False


@dataclass
class Select:
    items: list
    star: bool
    from_items: list
    where: Optional[Node] = None
    group_by: Optional[list] = None
    having: Optional[Node] = None
    order_by: Optional[list] = None
    limit: Optional[int] = None
    pos: Pos = (1, 1)

    @property
    def has_aggregation(self) -> bool:
        if self.group_by or self.having is not None:
            return True
        return any(contains_aggregate(i.expr) for i in self.items)


AGG_FUNCS = frozenset({"SUM", "COUNT", "MIN", "MAX", "AVG"})


def children(node: Node) -> list:
    if isinstance(node, Unary):
        return [node.arg]
    if isinstance(node, Binary):
        return [node.left, node.right]
    if isinstance(node, Func):
        return list(node.args)
    if isinstance(node, Cast):
        return [node.arg]
    if isinstance(node, Between):
        return [node.arg, node.low, node.high]
    if isinstance(node, InList):
        return [node.arg, *node.items]
    if isinstance(node, (InSubquery,)):
        return [node.arg]
    if isinstance(node, (IsNull,)):
        return [node.arg]
    if isinstance(node, Like):
        return [node.arg, node.pattern]
    return []


def contains_aggregate(node: Node) -> bool:
    if isinstance(node, Func) and node.name in AGG_FUNCS:
        return True
    return any(contains_aggregate(c) for c in children(node))
