"""The fifteen acceptance criteria, one test each.

Each test prints a single "[PASS]"/"[FAIL]" line; the lines are repeated in
the pytest terminal summary.  Running this file as a script prints them
without pytest.
"""

import pytest

from finsler_zeta import acceptance

@pytest.mark.parametrize("number", [c[0] for c in acceptance.CRITERIA],
                         ids=[f"{c[0]:02d}-{c[1]}" for c in acceptance.CRITERIA])
def test_criterion(number, record_property):
    result = acceptance.run(number)
    record_property("acceptance", result.line())
    print(result.line())
    assert result.passed, result.detail


if __name__ == "__main__":
    acceptance.run_all(echo=print)
