"""Acceptance gate: one test per criterion at the fixed tolerances.

Each test records its one-line verdict, which ``conftest.py`` prints in the
terminal summary.  Criteria 2 to 8 replicate full grids and take minutes.
"""

import pytest

from singlab.acceptance import CRITERIA, FAST


@pytest.mark.parametrize(
    "number",
    [pytest.param(i, marks=() if i in FAST else pytest.mark.slow, id=f"criterion_{i}") for i in sorted(CRITERIA)],
)
def test_criterion(number, criterion_log):
    res = CRITERIA[number]()
    criterion_log(res.line())
    assert res.passed, res.line()
