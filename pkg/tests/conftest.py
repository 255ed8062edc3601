import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import helpers  # noqa: E402
from joinsample.model import validate  # noqa: E402


@pytest.fixture
def f1_query(tmp_path):
    return helpers.f1(tmp_path)


@pytest.fixture
def f1_plan(f1_query):
    return validate(f1_query)


@pytest.fixture
def six_query(tmp_path):
    return helpers.six_table(tmp_path)


def pytest_terminal_summary(terminalreporter):
    test_acceptance = sys.modules.get("test_acceptance")
    if test_acceptance is not None and test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
