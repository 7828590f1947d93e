import sys
from collections import defaultdict
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

CRITERIA = {
    1: "BiCM/UCM constraint satisfaction (residual <= 1e-6, <= 5 s per solve)",
    2: "Poisson-Binomial exactness",
    3: "FDR oracle equivalence",
    4: "False-positive control and planted-block power",
    5: "Modularity and Louvain",
    6: "Label propagation",
    7: "Levenshtein pipeline",
    8: "Analytics",
    9: "End-to-end determinism and runtime",
}
_outcomes: dict[int, list[tuple[str, str]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes[mark.args[0]].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        runs = _outcomes.get(n)
        if not runs:
            continue
        bad = [name for name, o in runs if o != "passed"]
        status = "PASS" if not bad else "FAIL"
        line = f"{status} criterion {n}: {CRITERIA[n]} [{len(runs) - len(bad)}/{len(runs)} checks]"
        if bad:
            line += " failing: " + ", ".join(bad)
        tr.write_line(line)


@pytest.fixture
def data_dir():
    return DATA
