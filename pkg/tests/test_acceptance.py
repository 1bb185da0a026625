"""Every acceptance criterion at its stated tolerance, one result line each."""

import pytest

from evograph.verification import CHECKS, run_check

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("check_id", sorted(CHECKS), ids=lambda i: f"{i:02d}-{CHECKS[i][0].replace(' ', '-')}")
def test_criterion(check_id):
    result = run_check(check_id, quick=False)
    print(result.line())
    ACCEPTANCE_LINES.append(result.line())
    assert result.passed, result.detail
