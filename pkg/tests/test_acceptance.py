"""Acceptance criteria 1-10, one PASS/FAIL line each."""

import pytest

from coarea_lab.harness import CHECKS


@pytest.mark.parametrize("criterion", sorted(CHECKS))
def test_criterion(criterion, capsys):
    out = CHECKS[criterion]({})
    with capsys.disabled():
        print(f"\n{out.line()}  {out.detail}")
    assert out.passed, out.detail
