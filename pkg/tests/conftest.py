import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossopt.catalog import CatalogSpec, generate_catalog  # noqa: E402
from crossopt.featurizer import encode_plan  # noqa: E402
from crossopt.optimizer import optimize  # noqa: E402
from crossopt.sql import sql_to_plan  # noqa: E402

TOY_SQL = [
    "SELECT t0.id FROM t0 WHERE t0.id > 5",
    "SELECT t1.str0, COUNT(*) FROM t1 JOIN t0 ON t1.t0_id = t0.id WHERE t0.flt1 < 0.5 GROUP BY t1.str0",
    "SELECT t2.int0, t1.int1 * 2 FROM t2 JOIN t1 ON t2.t1_id = t1.id JOIN t0 ON t1.t0_id = t0.id "
    "WHERE t2.flag2 = TRUE AND t0.id IN (1, 2, 3) ORDER BY 1 LIMIT 10",
]


@pytest.fixture(scope="session")
def tiny_catalog():
    return generate_catalog(CatalogSpec(n_tables=3, rows_per_table=(30, 60), fk_density=0.5, name="tiny"), 3)


@pytest.fixture(scope="session")
def toy_graphs(tiny_catalog):
    return [encode_plan(optimize(sql_to_plan(q, tiny_catalog), tiny_catalog), tiny_catalog) for q in TOY_SQL]


@pytest.fixture(scope="session")
def tiny_workload(tiny_catalog):
    from crossopt.harness.workload import WorkloadConfig, generate_workload

    return generate_workload(tiny_catalog, WorkloadConfig(query_count=150, seed=1))


ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    """Records one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"C{number} {'PASS' if ok else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"C{n} {'PASS' if ok else 'FAIL'}: {detail}")
