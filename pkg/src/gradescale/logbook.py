"""Ascent logbook ingestion and preparation.

Preparation order is fixed: ingest -> (session mode only) aggregate ->
filter -> paginate. The result is a :class:`PreparedDataset` holding the flat
arrays the likelihood consumes.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import logging
import warnings
from collections import Counter, OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grades import GradeError, GradeSystem, GradeValue, parse_grade

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("climber_id", "route_id", "date", "grade", "tick")


class LogbookError(ValueError):
    pass


class MalformedRow(LogbookError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class UnknownTick(LogbookError):
    pass


class RecordOutOfWindow(LogbookError):
    pass


class ConflictingGrades(UserWarning):
    """Same route logged with different grades on one day."""


class GameMode(str, enum.Enum):
    ATTEMPT = "attempt"
    SESSION = "session"


def _fold(ticks: Iterable[str]) -> frozenset[str]:
    return frozenset(t.strip().casefold() for t in ticks)


@dataclass(frozen=True)
class TickPolicy:
    """Classification of tick types into success, failure and ignored."""

    success_ticks: frozenset[str]
    failure_ticks: frozenset[str]
    ignored_ticks: frozenset[str] = frozenset()
    on_unknown: str = "warn"

    def __post_init__(self):
        for name in ("success_ticks", "failure_ticks", "ignored_ticks"):
            object.__setattr__(self, name, _fold(getattr(self, name)))
        s, f, i = self.success_ticks, self.failure_ticks, self.ignored_ticks
        if s & f or s & i or f & i:
            raise ValueError("tick sets must be pairwise disjoint")
        if self.on_unknown not in ("warn", "error"):
            raise ValueError("on_unknown must be 'warn' or 'error'")

    @classmethod
    def route(cls, **kwargs) -> "TickPolicy":
        return cls(
            success_ticks={"redpoint", "flash", "onsight"},
            failure_ticks={"hangdog", "attempt", "retreat", "working"},
            **kwargs,
        )

    @classmethod
    def boulder(cls, **kwargs) -> "TickPolicy":
        return cls(
            success_ticks={"send", "flash", "onsight"},
            failure_ticks={"hangdog", "attempt", "retreat", "working"},
            **kwargs,
        )

    @classmethod
    def default_for(cls, system: GradeSystem, **kwargs) -> "TickPolicy":
        if GradeSystem(system) is GradeSystem.VGRADE:
            return cls.boulder(**kwargs)
        return cls.route(**kwargs)

    def classify(self, tick: str) -> bool | None:
        """True/False for success/failure, None for ignored or unknown."""
        key = tick.strip().casefold()
        if key in self.success_ticks:
            return True
        if key in self.failure_ticks:
            return False
        if key in self.ignored_ticks:
            return None
        if self.on_unknown == "error":
            raise UnknownTick(f"tick {tick!r} is not covered by the policy")
        return None

    def is_known(self, tick: str) -> bool:
        key = tick.strip().casefold()
        return key in self.success_ticks or key in self.failure_ticks or key in self.ignored_ticks


@dataclass(frozen=True)
class AscentRecord:
    climber_id: str
    route_id: str
    date: dt.date
    grade: GradeValue
    tick: str
    success: bool


@dataclass
class IngestResult:
    records: list[AscentRecord]
    rows_read: int = 0
    ignored: int = 0
    unknown_ticks: Counter = field(default_factory=Counter)


def _read_rows(path: Path, fmt: str) -> list[dict]:
    if fmt == "json":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list):
            raise MalformedRow(0, "JSON input must be an array of objects")
        return data
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline()
        delimiter = "\t" if header.count("\t") > header.count(",") else ","
        fh.seek(0)
        return list(csv.DictReader(fh, delimiter=delimiter))


def detect_format(path: str | Path) -> str:
    return "json" if Path(path).suffix.lower() == ".json" else "csv"


def ingest(
    path: str | Path,
    system: GradeSystem,
    policy: TickPolicy | None = None,
    fmt: str | None = None,
) -> IngestResult:
    """Read a logbook file into ascent records.

    ``fmt`` is ``"csv"`` (comma or tab delimited, sniffed from the header) or
    ``"json"`` (array of objects); inferred from the extension when omitted.
    Rows with ignored or unknown ticks are dropped and counted.
    """
    path = Path(path)
    system = GradeSystem(system)
    policy = policy or TickPolicy.default_for(system)
    rows = _read_rows(path, fmt or detect_format(path))
    result = IngestResult(records=[])
    # Row numbers are 1-based data rows (header excluded).
    for n, row in enumerate(rows, start=1):
        result.rows_read += 1
        if not isinstance(row, dict):
            raise MalformedRow(n, "record is not an object")
        missing = [k for k in REQUIRED_FIELDS if row.get(k) in (None, "")]
        if missing:
            raise MalformedRow(n, f"missing field(s) {', '.join(missing)}")
        tick = str(row["tick"])
        try:
            success = policy.classify(tick)
        except UnknownTick as exc:
            raise UnknownTick(f"row {n}: {exc}") from None
        if success is None:
            if not policy.is_known(tick):
                result.unknown_ticks[tick] += 1
            result.ignored += 1
            continue
        try:
            date = dt.date.fromisoformat(str(row["date"]).strip()[:10])
        except ValueError:
            raise MalformedRow(n, f"bad date {row['date']!r}") from None
        try:
            grade = parse_grade(str(row["grade"]), system)
        except GradeError as exc:
            raise MalformedRow(n, str(exc)) from None
        result.records.append(
            AscentRecord(
                climber_id=str(row["climber_id"]),
                route_id=str(row["route_id"]),
                date=date,
                grade=grade,
                tick=tick,
                success=success,
            )
        )
    if result.unknown_ticks:
        warnings.warn(
            "ignored unknown ticks: "
            + ", ".join(f"{t} ({c})" for t, c in sorted(result.unknown_ticks.items())),
            stacklevel=2,
        )
    return result


def write_logbook(records: Sequence[AscentRecord], path: str | Path) -> None:
    """Write records in the comma-delimited logbook format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REQUIRED_FIELDS)
        for r in records:
            writer.writerow([r.climber_id, r.route_id, r.date.isoformat(), r.grade.label, r.tick])


def _session_key(r: AscentRecord) -> tuple:
    return (r.climber_id, r.route_id, r.date)


def grade_conflicts(records: Iterable[AscentRecord]) -> list[tuple]:
    """Session groups whose records disagree on the route grade."""
    seen: dict[tuple, float] = {}
    conflicts = []
    for r in records:
        key = _session_key(r)
        first = seen.setdefault(key, r.grade.value)
        if first != r.grade.value:
            conflicts.append(key + (first, r.grade.value))
    return conflicts


def aggregate_sessions(records: Iterable[AscentRecord]) -> list[AscentRecord]:
    """Collapse records to one per (climber, route, day), keeping the best result.

    A group succeeds if any of its records succeeds. The first record's grade
    is kept; disagreeing grades raise a :class:`ConflictingGrades` warning.
    Output follows the order in which groups first appear.
    """
    records = list(records)
    groups: OrderedDict[tuple, AscentRecord] = OrderedDict()
    for r in records:
        key = _session_key(r)
        best = groups.get(key)
        if best is None:
            groups[key] = r
        elif r.success and not best.success:
            groups[key] = AscentRecord(
                r.climber_id, r.route_id, r.date, best.grade, r.tick, True
            )
    conflicts = grade_conflicts(records)
    if conflicts:
        warnings.warn(
            f"{len(conflicts)} session group(s) with conflicting route grades; "
            f"first grade kept (e.g. {conflicts[0][:3]})",
            ConflictingGrades,
            stacklevel=2,
        )
    return list(groups.values())


def filter_climbers(
    records: Iterable[AscentRecord], min_ascents: int, min_failures: int
) -> list[AscentRecord]:
    """Keep climbers with at least ``min_ascents`` records and ``min_failures`` failures."""
    if min_ascents < 1 or min_failures < 0:
        raise ValueError("need min_ascents >= 1 and min_failures >= 0")
    records = list(records)
    total = Counter(r.climber_id for r in records)
    fails = Counter(r.climber_id for r in records if not r.success)
    keep = {c for c, n in total.items() if n >= min_ascents and fails[c] >= min_failures}
    return [r for r in records if r.climber_id in keep]


def month_index(date: dt.date, start: dt.date) -> int:
    """0-based calendar-month offset of ``date`` from the month of ``start``."""
    return (date.year - start.year) * 12 + (date.month - start.month)


def n_months(window_start: dt.date, window_end: dt.date) -> int:
    """Calendar months touched by the half-open window [start, end)."""
    last = window_end - dt.timedelta(days=1)
    return month_index(last, window_start) + 1


@dataclass(frozen=True)
class PreparedDataset:
    """Page-indexed arrays ready for the likelihood.

    Pages and ``min_page``/``max_page`` are 1-based;
    ``climber`` holds 0-based indices into ``climbers``.
    """

    climbers: tuple[str, ...]
    n_pages: int
    min_page: np.ndarray
    max_page: np.ndarray
    y: np.ndarray
    page: np.ndarray
    climber: np.ndarray
    x: np.ndarray
    system: GradeSystem = GradeSystem.EWBANK
    game_mode: GameMode = GameMode.ATTEMPT
    route: tuple[str, ...] = ()
    date: tuple[str, ...] = ()
    window_start: str | None = None
    min_ascents: int | None = None
    min_failures: int | None = None

    def __post_init__(self):
        for name, dtype in (
            ("min_page", np.int64), ("max_page", np.int64), ("y", np.int64),
            ("page", np.int64), ("climber", np.int64), ("x", np.float64),
        ):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "climbers", tuple(self.climbers))
        object.__setattr__(self, "route", tuple(self.route))
        object.__setattr__(self, "date", tuple(self.date))
        object.__setattr__(self, "system", GradeSystem(self.system))
        object.__setattr__(self, "game_mode", GameMode(self.game_mode))
        self.validate()

    @property
    def n_climbers(self) -> int:
        return len(self.climbers)

    @property
    def n_ascents(self) -> int:
        return len(self.y)

    def validate(self) -> None:
        C, P, N = self.n_climbers, self.n_pages, self.n_ascents
        if C < 1 or P < 1:
            raise LogbookError("dataset needs at least one climber and one page")
        if self.min_page.shape != (C,) or self.max_page.shape != (C,):
            raise LogbookError("min_page/max_page must have one entry per climber")
        if not all(len(a) == N for a in (self.page, self.climber, self.x)):
            raise LogbookError("ascent arrays must share a common length")
        if self.route and len(self.route) != N or self.date and len(self.date) != N:
            raise LogbookError("route/date labels must match the ascent count")
        if np.any(self.min_page < 1) or np.any(self.max_page > P) or np.any(
            self.min_page > self.max_page
        ):
            raise LogbookError("need 1 <= min_page <= max_page <= n_pages")
        if N:
            if not np.isin(self.y, (0, 1)).all():
                raise LogbookError("outcomes must be 0 or 1")
            if self.climber.min() < 0 or self.climber.max() >= C:
                raise LogbookError("climber index out of range")
            lo = self.min_page[self.climber]
            hi = self.max_page[self.climber]
            if np.any(self.page < lo) or np.any(self.page > hi):
                raise LogbookError("ascent page outside its climber's page span")
            if not np.isfinite(self.x).all():
                raise LogbookError("route grades must be finite")

    def to_json(self) -> dict:
        return {
            "climbers": list(self.climbers),
            "n_pages": self.n_pages,
            "min_page": self.min_page.tolist(),
            "max_page": self.max_page.tolist(),
            "y": self.y.tolist(),
            "page": self.page.tolist(),
            "climber": self.climber.tolist(),
            "x": self.x.tolist(),
            "system": self.system.value,
            "game_mode": self.game_mode.value,
            "route": list(self.route),
            "date": list(self.date),
            "window_start": self.window_start,
            "min_ascents": self.min_ascents,
            "min_failures": self.min_failures,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PreparedDataset":
        return cls(**data)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=None, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "PreparedDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def climber_records(self, j: int) -> list[AscentRecord]:
        """Reconstruct (approximate) records for climber index ``j``."""
        out = []
        for i in np.flatnonzero(self.climber == j):
            date = dt.date.fromisoformat(self.date[i]) if self.date else dt.date.min
            out.append(
                AscentRecord(
                    climber_id=self.climbers[j],
                    route_id=self.route[i] if self.route else str(i),
                    date=date,
                    grade=GradeValue(self.system, float(self.x[i])),
                    tick="success" if self.y[i] else "failure",
                    success=bool(self.y[i]),
                )
            )
        return out


def paginate(
    records: Sequence[AscentRecord],
    window_start: dt.date,
    window_end: dt.date,
    system: GradeSystem | None = None,
    game_mode: GameMode = GameMode.ATTEMPT,
) -> PreparedDataset:
    """Index records by calendar month within [window_start, window_end).

    Climbers are ordered by id; records keep their input order.
    """
    if not window_start < window_end:
        raise ValueError("window_start must precede window_end")
    if not records:
        raise LogbookError("no records to paginate")
    for r in records:
        if not window_start <= r.date < window_end:
            raise RecordOutOfWindow(
                f"{r.climber_id}/{r.route_id} on {r.date} outside "
                f"[{window_start}, {window_end})"
            )
    system = GradeSystem(system or records[0].grade.system)
    if any(r.grade.system is not system for r in records):
        raise LogbookError("records mix grade systems")
    climbers = sorted({r.climber_id for r in records})
    index = {c: j for j, c in enumerate(climbers)}
    page = np.array([month_index(r.date, window_start) + 1 for r in records])
    climber = np.array([index[r.climber_id] for r in records])
    min_page = np.full(len(climbers), np.iinfo(np.int64).max)
    max_page = np.zeros(len(climbers), dtype=np.int64)
    np.minimum.at(min_page, climber, page)
    np.maximum.at(max_page, climber, page)
    return PreparedDataset(
        climbers=climbers,
        n_pages=n_months(window_start, window_end),
        min_page=min_page,
        max_page=max_page,
        y=[int(r.success) for r in records],
        page=page,
        climber=climber,
        x=[r.grade.value for r in records],
        system=system,
        game_mode=game_mode,
        route=[r.route_id for r in records],
        date=[r.date.isoformat() for r in records],
        window_start=window_start.isoformat(),
    )


@dataclass
class PrepReport:
    """Row counts at each preparation stage."""

    game_mode: GameMode
    min_ascents: int
    min_failures: int
    rows_read: int = 0
    ignored: int = 0
    ingested: int = 0
    aggregated: int | None = None
    filtered: int = 0
    climbers_in: int = 0
    climbers_out: int = 0
    pages: int = 0

    def rows(self) -> list[tuple[str, str]]:
        agg = "skipped" if self.aggregated is None else str(self.aggregated)
        collapsed = "" if self.aggregated is None else str(self.ingested - self.aggregated)
        return [
            ("rows read", str(self.rows_read)),
            ("ignored ticks", str(self.ignored)),
            ("ascents ingested", str(self.ingested)),
            ("after session aggregation", agg),
            ("collapsed by aggregation", collapsed or "skipped"),
            ("after climber filter", str(self.filtered)),
            ("climbers before filter", str(self.climbers_in)),
            ("climbers after filter", str(self.climbers_out)),
            ("pages", str(self.pages)),
        ]

    def to_text(self) -> str:
        lines = [
            f"game\t{self.game_mode.value}",
            f"min.ascents\t{self.min_ascents}",
            f"min.failures\t{self.min_failures}",
            "stage\tcount",
        ]
        lines += [f"{k}\t{v}" for k, v in self.rows()]
        return "\n".join(lines) + "\n"


def prepare(
    records: Sequence[AscentRecord],
    window_start: dt.date,
    window_end: dt.date,
    game_mode: GameMode = GameMode.SESSION,
    min_ascents: int = 30,
    min_failures: int = 1,
    system: GradeSystem | None = None,
    report: PrepReport | None = None,
) -> PreparedDataset:
    """Run aggregate (session mode) -> filter -> paginate on ingested records."""
    game_mode = GameMode(game_mode)
    report = report if report is not None else PrepReport(game_mode, min_ascents, min_failures)
    report.ingested = len(records)
    report.climbers_in = len({r.climber_id for r in records})
    if game_mode is GameMode.SESSION:
        records = aggregate_sessions(records)
        report.aggregated = len(records)
    records = filter_climbers(records, min_ascents, min_failures)
    report.filtered = len(records)
    report.climbers_out = len({r.climber_id for r in records})
    data = paginate(records, window_start, window_end, system=system, game_mode=game_mode)
    data = replace(data, min_ascents=min_ascents, min_failures=min_failures)
    report.pages = data.n_pages
    logger.info("prepared %d ascents for %d climbers", data.n_ascents, data.n_climbers)
    return data
