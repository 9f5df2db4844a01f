"""Shared pytest configuration.

After any run that touched tests/test_acceptance.py, print one PASS/FAIL line
per acceptance criterion so the whole gate can be read at a glance."""

import pathlib

import pytest

PROBLEM_DIR = pathlib.Path(__file__).resolve().parent.parent / "problems"

_CRITERIA = {
    "c01": "monotone ascent over 10^4 random polynomial/point pairs",
    "c02": "certified per-step lower bound holds on the same sweep",
    "c03": "log-domain gradient matches finite differences (10^3 pairs)",
    "c04": "rational-design example converges to the quadratic root",
    "c05": "spanning-tree enumeration agrees with the determinant route",
    "c06": "convexity/concavity probes pass on tree polynomials",
    "c07": "blocked update reduces to the plain and weighted updates",
    "c08": "step maximizes its certified bound against random competitors",
    "c09": "terminal objectives beat dense grid search within tolerance",
    "c10": "verification CLI is byte-deterministic for a fixed seed",
}


@pytest.fixture(scope="session")
def problem_dir():
    return PROBLEM_DIR


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    del exitstatus, config
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid or "::" not in nodeid:
                continue
            if status == "passed" and getattr(rep, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            parts = name.split("_")
            if len(parts) < 2 or not parts[1].startswith("c"):
                continue
            key = parts[1]
            if status in ("failed", "error"):
                outcomes[key] = "FAIL"
            else:
                outcomes.setdefault(key, "PASS")
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(outcomes):
        label = _CRITERIA.get(key, "(unnamed criterion)")
        terminalreporter.write_line(f"ACCEPTANCE {key[1:]} {label}: {outcomes[key]}")
