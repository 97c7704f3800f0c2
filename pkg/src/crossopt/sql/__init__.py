"""SQL text to initial logical plan."""

from .binder import BindError, bind, sql_to_plan
from .parser import SqlSyntaxError, parse_sql, tokenize

__all__ = ["BindError", "SqlSyntaxError", "bind", "parse_sql", "sql_to_plan", "tokenize"]
