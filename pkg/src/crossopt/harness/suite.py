"""The five simulator catalogs used by the evaluation scenarios.

Shapes differ in table count, key density and column type mix so that a
leave-one-out fold always evaluates on a schema the model has not seen.
"""

from __future__ import annotations

from ..catalog import CatalogSpec, generate_catalog

_NUMERIC_HEAVY = {"integer": 4.0, "float": 2.0, "decimal": 2.0, "varchar": 1.0, "boolean": 0.5, "date": 0.5, "timestamp": 0.5}
_TEXT_HEAVY = {"integer": 2.0, "float": 0.5, "decimal": 0.5, "varchar": 4.0, "boolean": 1.0, "date": 1.0, "timestamp": 0.5}
_TEMPORAL = {"integer": 2.0, "float": 1.0, "decimal": 1.0, "varchar": 1.5, "boolean": 0.5, "date": 2.0, "timestamp": 2.0}


def default_specs() -> list[CatalogSpec]:
    return [
        CatalogSpec(n_tables=5, fk_density=0.0, name="retail"),
        CatalogSpec(n_tables=4, fk_density=0.3, type_mix=_NUMERIC_HEAVY, payload_columns=(3, 7), name="ledger"),
        CatalogSpec(n_tables=6, fk_density=0.2, type_mix=_TEXT_HEAVY, name="catalogue"),
        CatalogSpec(n_tables=7, fk_density=0.1, type_mix=_TEMPORAL, payload_columns=(2, 5), name="events"),
        CatalogSpec(n_tables=3, fk_density=0.5, payload_columns=(4, 8), max_null_fraction=0.2, name="survey"),
    ]


def default_catalogs(seed: int = 0) -> list:
    return [generate_catalog(s, seed * 1000 + i) for i, s in enumerate(default_specs())]
