"""Shared pytest plumbing: a one-line verdict per acceptance criterion.

The acceptance tests in test_acceptance.py are named ``test_c<N>_...``.
After the run, this hook prints a single PASS/FAIL line per criterion so
the gate can be read off the bottom of any pytest invocation.
"""

import re

_CRITERIA = {
    1: "seed election matches brute-force oracle exactly",
    2: "response maps and prototype match loop oracles at 1e-12",
    3: "finite-difference gradient check over all parameters and inputs",
    4: "masked-prototype contrast identities",
    5: "attention readjustment weight properties",
    6: "held-out convergence of the trained model",
    7: "ablation directions over three seeds",
    8: "inference purity and checkpoint determinism",
    9: "metrics match exhaustive loop oracles",
}

_PATTERN = re.compile(r"test_acceptance\.py::\S*test_c(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            match = _PATTERN.search(getattr(report, "nodeid", ""))
            if not match:
                continue
            number = int(match.group(1))
            if verdicts.get(number) != "FAIL":
                verdicts[number] = label
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(verdicts):
        description = _CRITERIA.get(number, "")
        terminalreporter.write_line(
            f"criterion {number}: {verdicts[number]} - {description}"
        )
