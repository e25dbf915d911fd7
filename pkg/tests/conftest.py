import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from berwald_lab import catalog, mkropina as mk  # noqa: E402


@functools.lru_cache(maxsize=None)
def catalog_report(name):
    entry = catalog.get(name)
    return mk.analyze(entry.spec, entry.options())


@functools.lru_cache(maxsize=None)
def sympy_geometry(name):
    from oracles import geometry_of
    return geometry_of(catalog.get(name))


@pytest.fixture
def report_of():
    return catalog_report


@pytest.fixture
def geometry():
    return sympy_geometry


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "LINES", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
