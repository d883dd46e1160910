import datetime as dt

import numpy as np
import pytest

from gradescale.grades import GradeSystem, GradeValue
from gradescale.logbook import AscentRecord, PreparedDataset


def rec(climber="A", route="X", date="2017-01-10", grade=20, success=False, tick=None):
    return AscentRecord(
        climber_id=climber,
        route_id=route,
        date=dt.date.fromisoformat(date),
        grade=GradeValue(GradeSystem.EWBANK, float(grade)),
        tick=tick or ("redpoint" if success else "hangdog"),
        success=success,
    )


def random_dataset(rng: np.random.Generator, max_c=3, max_p=4, max_n=20, min_n=0):
    """Small dataset with random page spans and ascents inside them."""
    C = int(rng.integers(1, max_c + 1))
    P = int(rng.integers(1, max_p + 1))
    lo = rng.integers(1, P + 1, size=C)
    hi = np.array([rng.integers(a, P + 1) for a in lo])
    N = int(rng.integers(min_n, max_n + 1))
    climber = rng.integers(0, C, size=N)
    page = np.array([rng.integers(lo[c], hi[c] + 1) for c in climber], dtype=int)
    return PreparedDataset(
        climbers=[f"c{j}" for j in range(C)],
        n_pages=P,
        min_page=lo,
        max_page=hi,
        y=rng.integers(0, 2, size=N),
        page=page,
        climber=climber,
        x=rng.normal(18, 4, size=N),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# Acceptance verdicts, echoed at the end of the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
