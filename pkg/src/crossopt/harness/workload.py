"""Synthetic SQL workload generator.

Queries walk the foreign-key graph to pick up to ``max_joins + 1`` tables and
sample predicate literals from the catalog's materialized column values, so
predicates are satisfiable and joins follow real key relationships.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .. import dtypes
from ..catalog import Catalog
from ..dtypes import NUMERIC, TEMPORAL
from ..sql import BindError, SqlSyntaxError, sql_to_plan


@dataclass(frozen=True)
class WorkloadConfig:
    query_count: int = 2000
    max_joins: int = 3
    timeout_seconds: float = 60.0
    predicate_prob: float = 0.8  # chance of each of up to 3 WHERE predicates
    disjunction_prob: float = 0.1
    null_test_prob: float = 0.05
    aggregate_prob: float = 0.3
    group_by_prob: float = 0.75
    having_prob: float = 0.3
    subquery_prob: float = 0.15
    order_prob: float = 0.3
    limit_prob: float = 0.5
    max_retries: int = 50
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_prob") and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name} must be in [0, 1], got {v}")
        if self.max_joins < 0 or self.query_count < 0:
            raise ValueError("max_joins and query_count must be non-negative")


class _Draft:
    def __init__(self, catalog: Catalog, cfg: WorkloadConfig, rng: np.random.Generator):
        self.cat = catalog
        self.cfg = cfg
        self.rng = rng

    def chance(self, p: float) -> bool:
        return self.rng.random() < p

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    # -- schema walk ------------------------------------------------------

    def tables(self) -> tuple[list[str], list[str]]:
        n_joins = int(self.rng.integers(self.cfg.max_joins + 1))
        start = self.pick(self.cat.table_names())
        chosen = [start]
        conds = []
        for _ in range(n_joins):
            options = []
            for e in self.cat.fk_edges:
                if e.src_table in chosen and e.dst_table not in chosen:
                    options.append((e, e.dst_table))
                elif e.dst_table in chosen and e.src_table not in chosen:
                    options.append((e, e.src_table))
            if not options:
                break
            e, new = self.pick(options)
            chosen.append(new)
            conds.append(f"{e.src_table}.{e.src_column} = {e.dst_table}.{e.dst_column}")
        return chosen, conds

    def columns(self, tables: list[str], types=None) -> list[tuple[str, str, str]]:
        out = []
        for t in tables:
            for c in self.cat.table(t).columns:
                if types is None or c.dataType in types:
                    out.append((t, c.name, c.dataType))
        return out

    def value(self, table: str, column: str):
        t = self.cat.table(table)
        vals = t.data[t.column_index(column)]
        for _ in range(8):
            v = vals[int(self.rng.integers(len(vals)))]
            if v is not None:
                return v
        return next((v for v in vals if v is not None), None)

    # -- predicates -------------------------------------------------------

    def predicate(self, tables: list[str]) -> str | None:
        t, c, dtype = self.pick(self.columns(tables))
        ref = f"{t}.{c}"
        if self.chance(self.cfg.null_test_prob):
            return f"{ref} IS {'NOT ' if self.chance(0.5) else ''}NULL"
        v = self.value(t, c)
        if v is None:
            return None
        lit = lambda x: dtypes.sql_literal(dtype, x)
        if dtype == "boolean":
            return f"{ref} = {lit(v)}"
        if dtype == "varchar":
            kind = self.pick(["eq", "like", "in", "ne"])
            if kind == "like":
                prefix = v[: int(self.rng.integers(1, 4))]
                return f"{ref} LIKE {lit(prefix + '%')}"
            if kind == "in":
                items = sorted({self.value(t, c) for _ in range(int(self.rng.integers(2, 5)))} - {None})
                return f"{ref} IN ({', '.join(lit(x) for x in items)})"
            return f"{ref} {'=' if kind == 'eq' else '<>'} {lit(v)}"
        ops = ["<", ">", "<=", ">=", "between"]
        if dtype in NUMERIC:
            ops += ["=", "in"]
        op = self.pick(ops)
        if op == "between":
            w = self.value(t, c)
            lo, hi = sorted([v, w if w is not None else v])
            return f"{ref} BETWEEN {lit(lo)} AND {lit(hi)}"
        if op == "in":
            items = sorted({self.value(t, c) for _ in range(int(self.rng.integers(2, 5)))} - {None})
            return f"{ref} IN ({', '.join(lit(x) for x in items)})"
        return f"{ref} {op} {lit(v)}"

    def where(self, tables: list[str]) -> list[str]:
        parts = []
        for _ in range(3):
            if not self.chance(self.cfg.predicate_prob):
                continue
            p = self.predicate(tables)
            if p is None:
                continue
            if self.chance(self.cfg.disjunction_prob):
                q = self.predicate(tables)
                if q is not None:
                    p = f"({p} OR {q})"
            parts.append(p)
        return parts

    def subquery(self, tables: list[str]) -> str | None:
        # IN over a foreign key into a filtered parent, or an uncorrelated EXISTS
        links = [e for e in self.cat.fk_edges if e.src_table in tables]
        if links and self.chance(0.8):
            e = self.pick(links)
            inner = self.predicate([e.dst_table])
            where = f" WHERE {inner}" if inner else ""
            return f"{e.src_table}.{e.src_column} IN (SELECT {e.dst_column} FROM {e.dst_table}{where})"
        other = self.pick(self.cat.table_names())
        inner = self.predicate([other])
        if inner is None:
            return None
        neg = "NOT " if self.chance(0.3) else ""
        col = self.cat.table(other).columns[0].name
        return f"{neg}EXISTS (SELECT {col} FROM {other} WHERE {inner})"

    # -- select list ------------------------------------------------------

    def aggregate_query(self, tables):
        keys = []
        if self.chance(self.cfg.group_by_prob):
            cands = self.columns(tables, {"integer", "varchar", "boolean", "date"})
            for _ in range(int(self.rng.integers(1, 3))):
                t, c, _ = self.pick(cands)
                if f"{t}.{c}" not in keys:
                    keys.append(f"{t}.{c}")
        numeric = self.columns(tables, NUMERIC)
        anycol = self.columns(tables)
        measures = []
        for _ in range(int(self.rng.integers(1, 4))):
            kind = self.pick(["count_star", "sum", "avg", "min", "max", "count_distinct"])
            if kind == "count_star":
                m = "COUNT(*)"
            elif kind in ("sum", "avg"):
                t, c, _ = self.pick(numeric)
                m = f"{kind.upper()}({t}.{c})"
            elif kind == "count_distinct":
                t, c, _ = self.pick(anycol)
                m = f"COUNT(DISTINCT {t}.{c})"
            else:
                t, c, _ = self.pick(anycol)
                m = f"{kind.upper()}({t}.{c})"
            if m not in measures:
                measures.append(m)
        having = None
        if keys and self.chance(self.cfg.having_prob):
            if self.chance(0.5):
                having = f"COUNT(*) > {int(self.rng.integers(1, 4))}"
            else:
                t, c, dtype = self.pick(numeric)
                v = self.value(t, c)
                if v is not None:
                    having = f"SUM({t}.{c}) > {dtypes.sql_literal(dtype, v)}"
        return keys, measures, having

    def plain_select(self, tables) -> list[str]:
        cols = self.columns(tables)
        k = int(self.rng.integers(1, 5))
        idx = sorted(self.rng.choice(len(cols), size=min(k, len(cols)), replace=False).tolist())
        items = [f"{cols[i][0]}.{cols[i][1]}" for i in idx]
        numeric = self.columns(tables, NUMERIC)
        if numeric and self.chance(0.15):
            t, c, _ = self.pick(numeric)
            items.append(f"{t}.{c} * 2")
        return items

    def build(self) -> str:
        tables, conds = self.tables()
        sql = "SELECT "
        keys: list[str] = []
        having = None
        if self.chance(self.cfg.aggregate_prob):
            keys, measures, having = self.aggregate_query(tables)
            items = keys + measures
        else:
            items = self.plain_select(tables)
        sql += ", ".join(items)
        sql += f" FROM {tables[0]}"
        for t, cond in zip(tables[1:], conds):
            sql += f" JOIN {t} ON {cond}"
        where = self.where(tables)
        if self.chance(self.cfg.subquery_prob):
            sub = self.subquery(tables)
            if sub is not None:
                where.append(sub)
        if where:
            sql += " WHERE " + " AND ".join(where)
        if keys:
            sql += " GROUP BY " + ", ".join(keys)
        if having:
            sql += " HAVING " + having
        if self.chance(self.cfg.order_prob):
            n = int(self.rng.integers(1, min(2, len(items)) + 1))
            pos = sorted(self.rng.choice(len(items), size=n, replace=False).tolist())
            sql += " ORDER BY " + ", ".join(f"{p + 1}{' DESC' if self.chance(0.5) else ''}" for p in pos)
            if self.chance(self.cfg.limit_prob):
                sql += f" LIMIT {self.pick([10, 100, 1000])}"
        return sql


def generate_workload(catalog: Catalog, config: WorkloadConfig) -> list[str]:
    """``config.query_count`` SQL strings; each parses and binds against ``catalog``."""
    if not catalog.has_data():
        raise ValueError("workload generation samples literals and needs materialized data")
    rng = np.random.default_rng([config.seed, 0x5157])
    out = []
    for _ in range(config.query_count):
        for _attempt in range(config.max_retries):
            sql = _Draft(catalog, config, rng).build()
            try:
                sql_to_plan(sql, catalog)
            except (SqlSyntaxError, BindError):
                continue
            out.append(sql)
            break
        else:
            raise RuntimeError(f"could not draft a valid query in {config.max_retries} attempts")
    return out
