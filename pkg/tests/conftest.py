import json

import pytest

from helpers import small_catalog
from tool2agent.catalog import catalog_to_dict


@pytest.fixture
def catalog():
    return small_catalog()


@pytest.fixture
def catalog_file(tmp_path, catalog):
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps(catalog_to_dict(catalog)))
    return path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
