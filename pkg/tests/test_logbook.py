import datetime as dt
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradescale.grades import GradeSystem
from gradescale.logbook import (
    ConflictingGrades,
    GameMode,
    LogbookError,
    MalformedRow,
    PreparedDataset,
    PrepReport,
    RecordOutOfWindow,
    TickPolicy,
    UnknownTick,
    aggregate_sessions,
    filter_climbers,
    ingest,
    n_months,
    paginate,
    prepare,
)

from conftest import rec

D = dt.date


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


CSV = """climber_id,route_id,date,grade,tick
A,X,2017-01-10,20,hangdog
A,X,2017-01-10,20,redpoint
A,Y,2017-01-11,22,onsight
B,Z,2017-02-01,18,topRope
B,Z,2017-02-02,18,Flash
B,Q,2017-02-02,19,lowered-off
"""


def test_ingest_csv_classifies_ticks(tmp_path):
    path = write(tmp_path, "log.csv", CSV)
    policy = TickPolicy.route(ignored_ticks={"topRope"})
    with pytest.warns(UserWarning, match="lowered-off"):
        res = ingest(path, GradeSystem.EWBANK, policy)
    assert res.rows_read == 6
    assert res.ignored == 2
    assert res.unknown_ticks == {"lowered-off": 1}
    assert [r.success for r in res.records] == [False, True, True, True]
    assert res.records[0].tick == "hangdog"
    assert res.records[3].grade.value == 18.0


def test_ingest_tab_and_json_agree(tmp_path):
    tsv = write(tmp_path, "log.tsv", CSV.replace(",", "\t"))
    rows = [
        dict(zip(["climber_id", "route_id", "date", "grade", "tick"], line.split(",")))
        for line in CSV.strip().splitlines()[1:]
    ]
    js = write(tmp_path, "log.json", json.dumps(rows))
    policy = TickPolicy.route(ignored_ticks={"toprope", "lowered-off"})
    a = ingest(tsv, GradeSystem.EWBANK, policy).records
    b = ingest(js, GradeSystem.EWBANK, policy).records
    assert a == b and len(a) == 4


def test_unknown_tick_can_fail(tmp_path):
    path = write(tmp_path, "log.csv", CSV)
    policy = TickPolicy.route(ignored_ticks={"toprope"}, on_unknown="error")
    with pytest.raises(UnknownTick, match="row 6"):
        ingest(path, GradeSystem.EWBANK, policy)


def test_malformed_rows_report_row_number(tmp_path):
    bad_grade = write(tmp_path, "a.csv", "climber_id,route_id,date,grade,tick\nA,X,2017-01-01,23/24,flash\n")
    with pytest.raises(MalformedRow, match="row 1"):
        ingest(bad_grade, GradeSystem.EWBANK)
    missing = write(tmp_path, "b.csv", "climber_id,route_id,date,grade,tick\nA,X,2017-01-01,20,flash\nA,,2017-01-01,20,flash\n")
    with pytest.raises(MalformedRow, match="row 2.*route_id"):
        ingest(missing, GradeSystem.EWBANK)
    bad_date = write(tmp_path, "c.csv", "climber_id,route_id,date,grade,tick\nA,X,2017-13-01,20,flash\n")
    with pytest.raises(MalformedRow, match="bad date"):
        ingest(bad_date, GradeSystem.EWBANK)


def test_tick_policy_examples():
    route = TickPolicy.route()
    assert route.classify("hangdog") is False
    assert route.classify("onsight") is True
    assert TickPolicy.route(ignored_ticks={"topRope"}).classify("toprope") is None
    assert TickPolicy.boulder().classify("send") is True
    assert TickPolicy.default_for(GradeSystem.VGRADE).classify("send") is True
    with pytest.raises(ValueError):
        TickPolicy({"flash"}, {"flash"})


def test_aggregate_examples():
    day = [rec(success=False), rec(success=False), rec(success=True)]
    out = aggregate_sessions(day)
    assert len(out) == 1 and out[0].success
    two_days = [rec(date="2017-01-10"), rec(date="2017-01-11", success=True)]
    assert aggregate_sessions(two_days) == two_days


def test_aggregate_conflicting_grades_keeps_first():
    with pytest.warns(ConflictingGrades):
        out = aggregate_sessions([rec(grade=20), rec(grade=21, success=True)])
    assert len(out) == 1
    assert out[0].grade.value == 20 and out[0].success


records_strategy = st.lists(
    st.builds(
        rec,
        climber=st.sampled_from("ABC"),
        route=st.sampled_from("XYZ"),
        date=st.sampled_from(["2017-01-01", "2017-01-02", "2017-02-01"]),
        grade=st.just(20),
        success=st.booleans(),
    ),
    max_size=30,
)


@settings(max_examples=200, deadline=None)
@given(records_strategy)
def test_aggregate_properties(records):
    out = aggregate_sessions(records)
    keys = [(r.climber_id, r.route_id, r.date) for r in out]
    assert len(keys) == len(set(keys))
    assert len(out) <= len(records)
    assert aggregate_sessions(out) == out
    groups = {}
    for r in records:
        groups.setdefault((r.climber_id, r.route_id, r.date), []).append(r.success)
    assert set(keys) == set(groups)
    assert sum(r.success for r in out) == sum(any(v) for v in groups.values())
    for r in out:
        assert r.success == any(groups[(r.climber_id, r.route_id, r.date)])


def _climber(cid, n, fails):
    return [rec(climber=cid, route=f"r{i}", success=i >= fails) for i in range(n)]


def test_filter_examples():
    records = _climber("few", 29, 5) + _climber("clean", 40, 0) + _climber("ok", 30, 1)
    out = filter_climbers(records, 30, 1)
    assert {r.climber_id for r in out} == {"ok"}
    assert filter_climbers(out, 30, 1) == out
    assert len(filter_climbers(records, 29, 0)) == len(records)
    with pytest.raises(ValueError):
        filter_climbers(records, 0, 1)


def test_paginate_examples():
    start, end = D(2016, 8, 1), D(2021, 8, 1)
    assert n_months(start, end) == 60
    data = paginate(
        [rec(date="2016-08-15"), rec(date="2016-09-01", climber="B"), rec(date="2021-07-31")],
        start,
        end,
    )
    assert data.n_pages == 60
    assert data.page.tolist() == [1, 2, 60]
    assert data.climbers == ("A", "B")
    assert data.min_page.tolist() == [1, 2] and data.max_page.tolist() == [60, 2]
    with pytest.raises(RecordOutOfWindow):
        paginate([rec(date="2021-08-01")], start, end)
    with pytest.raises(RecordOutOfWindow):
        paginate([rec(date="2016-07-31")], start, end)


def test_dataset_invariants_rejected():
    base = dict(climbers=["a"], n_pages=3, y=[1], page=[2], climber=[0], x=[20.0])
    PreparedDataset(min_page=[1], max_page=[3], **base)
    with pytest.raises(LogbookError):
        PreparedDataset(min_page=[3], max_page=[3], **base)
    with pytest.raises(LogbookError):
        PreparedDataset(min_page=[1], max_page=[4], **base)
    with pytest.raises(LogbookError):
        PreparedDataset(min_page=[1], max_page=[3], **{**base, "y": [2]})


def test_dataset_json_round_trip(tmp_path):
    data = paginate([rec(date="2017-01-05", grade=21), rec(date="2017-03-01", success=True)],
                    D(2017, 1, 1), D(2017, 6, 1))
    data.save(tmp_path / "d.json")
    back = PreparedDataset.load(tmp_path / "d.json")
    assert back.to_json() == data.to_json()
    assert back.x.tolist() == [21.0, 20.0]


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["A", "B", "C", "D"]),
            st.sampled_from(["X", "Y"]),
            st.integers(0, 700),
            st.booleans(),
        ),
        min_size=1,
        max_size=60,
    )
)
def test_prepared_dataset_invariants(rows):
    start = D(2016, 8, 1)
    records = [
        rec(climber=c, route=r, date=(start + dt.timedelta(days=d)).isoformat(), success=s)
        for c, r, d, s in rows
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            data = prepare(records, start, D(2018, 8, 1), GameMode.SESSION, 3, 1)
        except LogbookError:
            return  # everyone filtered out
    data.validate()
    for j in range(data.n_climbers):
        mine = data.climber == j
        assert mine.sum() >= 3
        assert (data.y[mine] == 0).sum() >= 1
    keys = list(zip(data.climber.tolist(), data.route, data.date))
    assert len(keys) == len(set(keys))
    lo, hi = data.min_page[data.climber], data.max_page[data.climber]
    assert np.all((lo <= data.page) & (data.page <= hi))


def test_prepare_report_accounting():
    records = (
        [rec(route="X", success=False)] * 3
        + [rec(route="X", success=True)]
        + [rec(route=f"r{i}", success=i > 0) for i in range(30)]
    )
    report = PrepReport(GameMode.SESSION, 30, 1)
    prepare(records, D(2017, 1, 1), D(2018, 1, 1), GameMode.SESSION, 30, 1, report=report)
    assert report.ingested - report.aggregated == 3
    assert report.filtered == 31
    text = report.to_text()
    assert "min.ascents\t30" in text and "min.failures\t1" in text
    attempt = PrepReport(GameMode.ATTEMPT, 30, 1)
    prepare(records, D(2017, 1, 1), D(2018, 1, 1), GameMode.ATTEMPT, 30, 1, report=attempt)
    assert attempt.aggregated is None
    assert "after session aggregation\tskipped" in attempt.to_text()
