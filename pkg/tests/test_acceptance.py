"""The ten acceptance criteria, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion; ``tcsk check`` runs the same suite from the command line.
"""

import re

import pytest

from tcsk.checks import CRITERIA, run_criterion

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=[f"{k:02d}_" + re.sub(r"\W+", "_", CRITERIA[k][0]) for k in sorted(CRITERIA)])
def test_criterion(number):
    result = run_criterion(number)
    print("\n" + result.line())
    assert result.passed, result.detail
