"""Acceptance criteria 1-11, each at its stated tolerance and runtime budget.

Every criterion prints one ``[PASS]``/``[FAIL]`` line, visible in ``pytest -v``
output even when capture is on.
"""

import pytest

from checkin_dp.verification import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n:02d}_{CRITERIA[n][0]}")
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.ok, result.summary()
    assert result.elapsed < result.budget, f"took {result.elapsed:.2f}s, budget {result.budget:g}s"
