"""Acceptance criteria: one pass/fail line per criterion.

Tolerances live in the suites themselves (``polycap.acceptance``):
oracles within 5% (capacities) and 2% (Poincare constants), exact
monotonicity to 1e-8, equivalence spreads at most 10 with fixture
reproduction to 1e-9, runtime budgets of 300 s and 600 s, projection
identities to 1e-10 and refinement drift at most 10%.
"""

import pytest

from polycap.acceptance import run_suite

CRITERIA = [
    (1, "analytic-oracles"),
    (2, "monotonicity"),
    (3, "equivalences"),
    (4, "cone"),
    (5, "synthesis"),
    (6, "hygiene"),
]


@pytest.mark.parametrize("number,suite", CRITERIA, ids=[s for _, s in CRITERIA])
def test_criterion(number, suite, report_line):
    checks = run_suite(suite)
    failed = [c for c in checks if not c.passed]
    status = "PASS" if not failed else "FAIL"
    line = f"{status}  criterion {number} ({suite}): {len(checks) - len(failed)}/{len(checks)} checks"
    if failed:
        line += "; failing: " + ", ".join(c.name for c in failed)
    report_line(line)
    print(line)
    for c in checks:
        print("   ", c.line())
    assert not failed, "\n".join(c.line() for c in failed)
