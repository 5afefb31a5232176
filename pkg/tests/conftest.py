import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import math

import pytest

from killpar.models import (
    AS_PRINTED, ekt_model, sol3_cmc_profile, sol3_leaf_q, sol3_leaf_r, sol3_minimal_profile, sol3_model,
    umbrella_curve,
)


def extrinsic_suite():
    """Built-in (label, model, curve, expected verdict) cases with a non-compact model."""
    sol3 = sol3_model()
    cases = [
        ("sol3:Q", sol3, sol3_leaf_q(0.0), "hyperbolic"),
        ("sol3:Q t=2", sol3, sol3_leaf_q(2.0), "hyperbolic"),
        ("sol3:R", sol3, sol3_leaf_r(0.0), "parabolic"),
        ("sol3:R t=-1", sol3, sol3_leaf_r(-1.0), "parabolic"),
        ("sol3:cmc", sol3, sol3_cmc_profile(), "parabolic"),
    ]
    for th in (math.pi / 6, math.pi / 4, math.pi / 3):
        for a in (0.0, 1.0):
            cases.append((f"sol3:S th={th:.4f} a={a:g}", sol3, sol3_minimal_profile(th, a), "hyperbolic"))
    for tau in (1.0, 3.0):
        cases.append((f"ekt:umbrella tau={tau:g}", ekt_model(0.0, tau), umbrella_curve(), "hyperbolic"))
        cases.append((f"ekt:umbrella tau={tau:g} printed", ekt_model(0.0, tau, AS_PRINTED), umbrella_curve(),
                      "hyperbolic"))
    cases.append(("ekt(0,0) radial", ekt_model(0.0, 0.0), umbrella_curve(), "parabolic"))
    return cases


EXTRINSIC = extrinsic_suite()


@pytest.fixture(params=EXTRINSIC, ids=[c[0] for c in EXTRINSIC])
def extrinsic_case(request):
    return request.param


_CRITERIA_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = []


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line: ``criterion(name, ok, detail)``."""
    lines = request.config.stash[_CRITERIA_KEY]

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
