"""Non-MCMC slope estimators.

Two quick cross-checks on the MCMC slope:

* per climber, ordinary least squares of the empirical failure log-odds
  ``ln(failures / successes)`` on route grade, treating the climber's grade
  as constant over the period;
* community-wide, least squares of ``ln(successful ascents)`` on grade, whose
  negated slope is the decay rate ``r`` in ``N = exp(-r x)``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .logbook import AscentRecord

HALDANE = 0.5


class RegressionError(ValueError):
    pass


class NoData(RegressionError):
    pass


class DegenerateDesign(RegressionError):
    pass


class InsufficientSupport(RegressionError):
    pass


@dataclass(frozen=True)
class GradeOddsPoint:
    grade: float
    failures: float
    successes: float

    @property
    def corrected(self) -> bool:
        return self.failures == 0

    @property
    def log_odds(self) -> float:
        """Failure log-odds; zero-failure grades get a half-count correction."""
        if self.successes <= 0:
            raise RegressionError("log-odds undefined without successes")
        if self.failures == 0:
            return math.log(HALDANE / (self.successes + HALDANE))
        return math.log(self.failures / self.successes)


@dataclass
class ClimberOdds:
    climber: str
    points: list[GradeOddsPoint]
    # grade -> number of records at grades with no successes
    excluded: dict[float, int] = field(default_factory=dict)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    n_corrected: int = 0
    excluded: tuple[float, ...] = ()

    @property
    def zero_crossing(self) -> float:
        """Grade at which the fitted log-odds is zero (the climber's grade)."""
        return -self.intercept / self.slope

    @property
    def decay_rate(self) -> float:
        """``r`` in ``N = exp(-r x)`` for community fits."""
        return -self.slope


def ols(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Slope, intercept and R^2 of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise DegenerateDesign("need at least two points")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateDesign("all x values are equal")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = ym - slope * xm
    ss_tot = float(np.dot(dy, dy))
    resid = y - (intercept + slope * x)
    ss_res = float(np.dot(resid, resid))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, float(intercept), r2


def empirical_odds(records: Iterable[AscentRecord], climber: str) -> ClimberOdds:
    """Failure and success counts per grade for one climber."""
    fails: dict[float, int] = defaultdict(int)
    sends: dict[float, int] = defaultdict(int)
    systems = set()
    for r in records:
        if r.climber_id != climber:
            continue
        systems.add(r.grade.system)
        if r.success:
            sends[r.grade.value] += 1
        else:
            fails[r.grade.value] += 1
    if not fails and not sends:
        raise NoData(f"no records for climber {climber!r}")
    if len(systems) > 1:
        raise RegressionError("records mix grade systems")
    points, excluded = [], {}
    for grade in sorted(set(fails) | set(sends)):
        if sends[grade] == 0:
            excluded[grade] = fails[grade]
        else:
            points.append(GradeOddsPoint(grade, fails[grade], sends[grade]))
    return ClimberOdds(climber, points, excluded)


def fit_climber_slope(points: Sequence[GradeOddsPoint]) -> RegressionFit:
    """Unweighted OLS of failure log-odds on grade."""
    if len(points) < 2:
        raise DegenerateDesign("need at least two grades")
    x = [p.grade for p in points]
    y = [p.log_odds for p in points]
    slope, intercept, r2 = ols(x, y)
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        n_points=len(points),
        n_corrected=sum(p.corrected for p in points),
    )


def fit_community_exponential(
    hist: Mapping[float, float], grade_range: tuple[float, float]
) -> RegressionFit:
    """Fit ``ln N = -r x + c`` over grades in the inclusive ``grade_range``.

    Grades inside the range with a zero count are dropped and listed in
    ``excluded``.
    """
    lo, hi = grade_range
    if lo > hi:
        raise ValueError("grade_range must be (low, high)")
    inside = sorted((float(g), float(n)) for g, n in hist.items() if lo <= g <= hi)
    if any(n < 0 for _, n in inside):
        raise RegressionError("counts must be non-negative")
    used = [(g, n) for g, n in inside if n > 0]
    excluded = tuple(g for g, n in inside if n == 0)
    if len({g for g, _ in used}) < 2:
        raise InsufficientSupport("need two grades with positive counts in range")
    slope, intercept, r2 = ols([g for g, _ in used], [math.log(n) for _, n in used])
    return RegressionFit(slope, intercept, r2, len(used), excluded=excluded)
