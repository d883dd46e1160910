"""Synthetic logbooks from known grade paths and slope."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grades import GradeSystem, GradeValue
from .logbook import AscentRecord, write_logbook
from .model import ParameterState, p_send


@dataclass(frozen=True)
class ReportingBias:
    """Chance that a failure is logged, split at a route-minus-climber offset.

    Failures on routes easier than ``threshold`` (offset below it) are kept
    with probability ``easy_retention``; the rest with ``hard_retention``.
    """

    easy_retention: float = 1.0
    hard_retention: float = 1.0
    threshold: float = 0.0

    def retention(self, offset: np.ndarray) -> np.ndarray:
        return np.where(offset < self.threshold, self.easy_retention, self.hard_retention)


@dataclass(frozen=True)
class SimSpec:
    true_m: float = 0.69
    n_climbers: int = 20
    n_pages: int = 24
    initial_grade_mean: float = 18.0
    initial_grade_sd: float = 3.0
    walk_sd: float = 0.3
    # {"kind": "poisson", "mean": λ} or {"kind": "fixed", "value": k}
    ascents_per_page: dict = field(default_factory=lambda: {"kind": "poisson", "mean": 2.5})
    # {"kind": "uniform", "low", "high"} | {"kind": "normal", "mean", "sd"} | {"kind": "constant", "value"}
    route_offset: dict = field(
        default_factory=lambda: {"kind": "uniform", "low": -3.0, "high": 3.0}
    )
    round_route_grades: bool = True
    reporting_bias: ReportingBias | None = None
    seed: int = 0
    start_date: str = "2016-08-01"

    def __post_init__(self):
        if not self.true_m > 0:
            raise ValueError("true_m must be positive")
        if self.n_climbers < 1 or self.n_pages < 1:
            raise ValueError("need at least one climber and one page")
        if self.walk_sd < 0 or self.initial_grade_sd < 0:
            raise ValueError("standard deviations must be non-negative")
        if isinstance(self.reporting_bias, dict):
            object.__setattr__(self, "reporting_bias", ReportingBias(**self.reporting_bias))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SimSpec":
        return cls(**data)


def _draw_counts(rng: np.random.Generator, dist: dict, size) -> np.ndarray:
    kind = dist["kind"]
    if kind == "poisson":
        return rng.poisson(dist["mean"], size=size)
    if kind == "fixed":
        return np.full(size, int(dist["value"]))
    raise ValueError(f"unknown count distribution {kind!r}")


def _draw_offsets(rng: np.random.Generator, dist: dict, n: int) -> np.ndarray:
    kind = dist["kind"]
    if kind == "uniform":
        return rng.uniform(dist["low"], dist["high"], size=n)
    if kind == "normal":
        return rng.normal(dist["mean"], dist["sd"], size=n)
    if kind == "constant":
        return np.full(n, float(dist["value"]))
    raise ValueError(f"unknown offset distribution {kind!r}")


def _add_months(start: dt.date, k: int) -> dt.date:
    months = start.month - 1 + k
    return dt.date(start.year + months // 12, months % 12 + 1, 1)


@dataclass
class Simulation:
    records: list[AscentRecord]
    truth: ParameterState
    climbers: list[str]
    # route-minus-climber offset of each record, for diagnostics
    offsets: np.ndarray


def simulate(spec: SimSpec) -> Simulation:
    """Draw a logbook by running the generative model forward.

    Grade paths and ascents come from one generator stream and failure
    thinning (``reporting_bias``) from a second, so a biased and an unbiased
    spec with the same seed share the same underlying ascents.
    """
    ss = np.random.SeedSequence(spec.seed)
    gen_seq, bias_seq = ss.spawn(2)
    rng = np.random.default_rng(gen_seq)
    thin_rng = np.random.default_rng(bias_seq)
    C, P = spec.n_climbers, spec.n_pages

    start = rng.normal(spec.initial_grade_mean, spec.initial_grade_sd, size=C)
    steps = rng.normal(0.0, spec.walk_sd, size=(C, P - 1)) if spec.walk_sd > 0 else np.zeros((C, P - 1))
    grades = np.concatenate([start[:, None], start[:, None] + np.cumsum(steps, axis=1)], axis=1)

    counts = _draw_counts(rng, spec.ascents_per_page, (C, P))
    climber = np.repeat(np.arange(C), counts.sum(axis=1))
    page = np.concatenate([np.repeat(np.arange(P), counts[j]) for j in range(C)]).astype(int)
    n = len(climber)
    ability = grades[climber, page]
    route = ability + _draw_offsets(rng, spec.route_offset, n)
    if spec.round_route_grades:
        route = np.round(route)
    success = rng.random(n) < p_send(ability, route, spec.true_m)
    days = rng.integers(1, 29, size=n)

    keep = np.ones(n, dtype=bool)
    if spec.reporting_bias is not None:
        u = thin_rng.random(n)
        retain = spec.reporting_bias.retention(route - ability)
        keep = success | (u < retain)

    start_date = dt.date.fromisoformat(spec.start_date)
    width = len(str(C - 1))
    names = [f"c{j:0{width}d}" for j in range(C)]
    records = []
    for i in np.flatnonzero(keep):
        month = _add_months(start_date, int(page[i]))
        records.append(
            AscentRecord(
                climber_id=names[climber[i]],
                route_id=f"r{i}",
                date=month.replace(day=int(days[i])),
                grade=GradeValue(GradeSystem.EWBANK, float(route[i])),
                tick="redpoint" if success[i] else "hangdog",
                success=bool(success[i]),
            )
        )
    return Simulation(
        records=records,
        truth=ParameterState(m=spec.true_m, grades=grades),
        climbers=names,
        offsets=(route - ability)[keep],
    )


def window_of(spec: SimSpec) -> tuple[dt.date, dt.date]:
    start = dt.date.fromisoformat(spec.start_date)
    return start, _add_months(start, spec.n_pages)


def write_simulation(sim: Simulation, spec: SimSpec, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``logbook.csv`` plus a ``truth.json`` sidecar; returns both paths."""
    if not spec.round_route_grades:
        raise ValueError("fractional route grades cannot be written as grade labels")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logbook = out / "logbook.csv"
    write_logbook(sim.records, logbook)
    start, end = window_of(spec)
    truth = {
        "spec": spec.to_json(),
        "m": sim.truth.m,
        "d": sim.truth.d,
        "window_start": start.isoformat(),
        "window_end": end.isoformat(),
        "climbers": sim.climbers,
        "grades": sim.truth.grades.tolist(),
    }
    sidecar = out / "truth.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return logbook, sidecar
