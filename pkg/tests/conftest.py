import os
from pathlib import Path

import numpy as np
import pytest

from netsurv import BasicRateTable, Cohort, RateTable, demo_ratetable

YEAR = 365.241
DATA_DIR = Path(os.environ.get("NETSURV_DATA_DIR", Path(__file__).parent / "data"))


def zero_ratetable():
    """Sex-keyed table whose every rate is zero."""
    z = BasicRateTable(np.zeros((111, 81)), 0, 110, 1950, 2030)
    return RateTable(("sex",), {("female",): z, ("male",): z})


def random_cohort(rng, n, *, max_days=3000, groups=("a", "b"), integer_times=True):
    """Cohort with integer day times, mixed censoring and sex/group columns."""
    death = rng.exponential(max_days / 2, n)
    censor = rng.uniform(0, max_days, n)
    time = np.minimum(death, censor)
    if integer_times:
        time = np.ceil(time)
    status = (death <= censor).astype(np.int64)
    return Cohort({
        "time": time,
        "status": status,
        "age": rng.uniform(30, 90, n) * YEAR,
        "year": rng.uniform(1980, 2010, n) * YEAR,
        "sex": np.array(["female", "male"], dtype=object)[rng.integers(0, 2, n)],
        "grp": np.array(groups, dtype=object)[rng.integers(0, len(groups), n)],
    })


@pytest.fixture(scope="session")
def demo():
    return demo_ratetable()


@pytest.fixture(scope="session")
def zero_table():
    return zero_ratetable()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary ----------------------------------------------------
# tests marked @pytest.mark.criterion("...") get one PASS/FAIL/SKIP line each
# in the terminal summary

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    rep = outcome.get_result()
    name = marker.args[0]
    if hasattr(item, "callspec"):
        name += f" [{item.callspec.id}]"
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        detail = ""
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2]
        elif rep.failed:
            lines = str(call.excinfo.value).splitlines() if call.excinfo else []
            detail = next((ln.strip() for ln in lines if ln.strip()), "")
        _criteria[item.nodeid] = (status, name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _criteria.values():
        line = f"{status:4}  {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
