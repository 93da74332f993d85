"""End-to-end benchmark reproduction criteria (A1-A8).

Each test prints one pass/fail line.  The battery caches the certified
constants and the 10 s benchmark traces, so the module runs the expensive
simulations once; expect a few minutes of wall time in total.
"""

import pytest

from mbpetc.acceptance import CRITERIA, AcceptanceBattery


@pytest.fixture(scope="module")
def battery():
    return AcceptanceBattery()


@pytest.mark.parametrize("criterion", CRITERIA)
def test_criterion(battery, criterion):
    result = getattr(battery, criterion.lower())()
    print(result)
    assert result.passed, str(result)
