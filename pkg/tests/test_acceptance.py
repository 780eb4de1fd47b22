"""Acceptance criteria at full tier; each prints one PASS/FAIL line (use ``pytest -s`` to see them)."""
import pytest

from paced import acceptance
from paced.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(criterion):
    result = criterion("full")
    print(result.line())
    assert not result.skipped
    assert result.passed, result.line()


def test_suite_runner_fast_tier_reports_every_criterion():
    lines = []
    results = acceptance.run_acceptance_suite("fast", echo=lines.append)
    assert len(results) == len(CRITERIA) == len(lines)
    assert all(r.passed or r.skipped for r in results)
