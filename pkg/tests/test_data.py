import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macrocast.data import (
    Panel,
    RawSeries,
    TransformLog,
    assemble_panel,
    impute,
    monthly_to_quarterly,
    parse_csv,
    to_yoy,
)
from macrocast.dates import MonthDate, QuarterDate

from conftest import m, q


def quarterly(values, start="2000Q1", id="X", kind="level"):
    start = q(start)
    obs = tuple(
        (start.advance(i), None if v is None else float(v)) for i, v in enumerate(values)
    )
    return RawSeries(id=id, frequency="quarterly", kind=kind, observations=obs)


# ---------------------------------------------------------------- parse_csv


def write_csv(tmp_path, rows, header="date,variable,value,frequency,kind"):
    path = tmp_path / "in.csv"
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def test_parse_csv_roundtrip_one_variable(tmp_path):
    path = write_csv(
        tmp_path,
        ["2000Q1,GDP,4.0,quarterly,yoy_percent", "2000Q2,GDP,4.5,quarterly,yoy_percent",
         "2000Q3,GDP,5.0,quarterly,yoy_percent"],
    )
    series = parse_csv(path)
    assert len(series) == 1
    s = series[0]
    assert s.id == "GDP" and s.frequency == "quarterly" and s.kind == "yoy_percent"
    assert [str(d) for d, _ in s.observations] == ["2000Q1", "2000Q2", "2000Q3"]
    assert [v for _, v in s.observations] == [4.0, 4.5, 5.0]


def test_parse_csv_sorts_out_of_order_rows(tmp_path):
    in_order = parse_csv(
        write_csv(tmp_path, ["2000Q1,GDP,1,quarterly,level", "2000Q2,GDP,2,quarterly,level"])
    )
    shuffled = parse_csv(
        write_csv(tmp_path, ["2000Q2,GDP,2,quarterly,level", "2000Q1,GDP,1,quarterly,level"])
    )
    assert in_order == shuffled


def test_parse_csv_duplicate_is_named(tmp_path):
    path = write_csv(
        tmp_path, ["2000Q1,GDP,1,quarterly,level", "2000Q1,GDP,2,quarterly,level"]
    )
    with pytest.raises(ValueError, match=r"duplicate observation \('GDP', 2000Q1\)"):
        parse_csv(path)


def test_parse_csv_bad_date_names_row(tmp_path):
    path = write_csv(tmp_path, ["2000Q1,GDP,1,quarterly,level", "bogus,GDP,2,quarterly,level"])
    with pytest.raises(ValueError, match=r":3:"):
        parse_csv(path)


def test_parse_csv_missing_column(tmp_path):
    path = write_csv(tmp_path, ["2000Q1,GDP,1,quarterly"], header="date,variable,value,frequency")
    with pytest.raises(ValueError, match="kind"):
        parse_csv(path)


def test_parse_csv_schema_mapping(tmp_path):
    path = write_csv(
        tmp_path, ["2000Q1,GDP,1,quarterly,level"], header="Date,variable,value,frequency,kind"
    )
    series = parse_csv(path, schema={"date": "Date"})
    assert series[0].id == "GDP"


# ------------------------------------------------------------------- to_yoy


def test_to_yoy_constant_series_is_zero_growth():
    s = quarterly([5, 5, 5, 5, 5])
    out = to_yoy(s)
    assert out.kind == "yoy_percent"
    assert out.observations == ((q("2001Q1"), 0.0),)


def test_to_yoy_hand_case_with_gap():
    # 100 at 2000Q1, missing Q2..Q4, 110 at 2001Q1 -> 10% at 2001Q1
    s = RawSeries(
        "X", "quarterly", "level",
        ((q("2000Q1"), 100.0), (q("2001Q1"), 110.0)),
    )
    out = to_yoy(s)
    assert len(out.observations) == 1
    date, value = out.observations[0]
    assert date == q("2001Q1")
    assert value == pytest.approx(10.0, abs=1e-12)


def test_to_yoy_too_short_errors():
    with pytest.raises(ValueError, match="needs at least 4"):
        to_yoy(quarterly([1, 2, 3]))


def test_to_yoy_zero_base_gives_missing_marker_and_log():
    log = TransformLog()
    s = quarterly([0, 1, 1, 1, 1])
    out = to_yoy(s, log)
    assert out.observations[0] == (q("2001Q1"), None)
    assert log.events == [{"op": "to_yoy_zero_base", "variable": "X", "date": "2001Q1"}]


def test_to_yoy_monthly_uses_lag_12():
    obs = tuple((m("2000-01").advance(i), 100.0 * 1.01**i) for i in range(14))
    out = to_yoy(RawSeries("X", "monthly", "level", obs))
    assert len(out.observations) == 2
    assert out.observations[0][1] == pytest.approx(100.0 * (1.01**12 - 1), rel=1e-12)


@settings(max_examples=60)
@given(
    start=st.floats(0.5, 50),
    growths=st.lists(st.floats(-40, 60), min_size=1, max_size=20),
)
def test_to_yoy_inverts_cumulative_reconstruction(start, growths):
    # build a positive quarterly level series from year-one levels + growths,
    # then check to_yoy returns exactly the growths
    levels = [start * (1 + 0.03 * i) for i in range(4)]
    for g in growths:
        levels.append(levels[-4] * (1 + g / 100.0))
    out = to_yoy(quarterly(levels))
    got = [v for _, v in out.observations]
    assert len(got) == len(growths)
    for a, b in zip(got, growths):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


# ------------------------------------------------------- monthly_to_quarterly


def monthly_series(pairs):
    return RawSeries(
        "X", "monthly", "yoy_percent",
        tuple((m(d), float(v)) for d, v in pairs),
    )


def test_monthly_mean_full_quarter():
    s = monthly_series([("2000-01", 3), ("2000-02", 6), ("2000-03", 9)])
    out = monthly_to_quarterly(s)
    assert out.observations == ((q("2000Q1"), 6.0),)
    assert out.frequency == "quarterly"


def test_monthly_mean_singleton():
    out = monthly_to_quarterly(monthly_series([("2000-01", 4)]))
    assert out.observations == ((q("2000Q1"), 4.0),)


def test_monthly_empty_quarter_stays_missing():
    s = monthly_series([("2000-01", 4), ("2000-07", 8)])
    out = monthly_to_quarterly(s)
    assert [str(d) for d, _ in out.observations] == ["2000Q1", "2000Q3"]


@settings(max_examples=50)
@given(vals=st.lists(st.floats(-100, 100), min_size=1, max_size=3), scale=st.floats(-5, 5))
def test_monthly_mean_permutation_invariant_and_linear(vals, scale):
    months = ["2000-01", "2000-02", "2000-03"][: len(vals)]
    base = monthly_to_quarterly(monthly_series(list(zip(months, vals))))
    permuted = monthly_to_quarterly(monthly_series(list(zip(months, reversed(vals)))))
    assert base.observations[0][1] == pytest.approx(permuted.observations[0][1], rel=1e-12, abs=1e-12)
    scaled = monthly_to_quarterly(monthly_series([(mm, scale * v) for mm, v in zip(months, vals)]))
    assert scaled.observations[0][1] == pytest.approx(scale * base.observations[0][1], rel=1e-9, abs=1e-9)


# ------------------------------------------------------------------- impute


def test_forward_fill_interior_gap():
    out = impute(quarterly([1, None, 3]), "forward_fill")
    assert [v for _, v in out.observations] == [1.0, 1.0, 3.0]


def test_impute_never_alters_observed_cells():
    values = [1.25, None, 3.5, None, None, 7.125, 2.0, None, 4.0, 1.0]
    src = quarterly(values)
    for method in ("forward_fill", "ar_fill"):
        out = impute(src, method)
        for (d0, v0), (d1, v1) in zip(src.observations, out.observations):
            assert d0 == d1
            if v0 is not None:
                assert v1 == v0  # bit-exact pass-through


def test_ar_fill_constant_series_fills_constant():
    vals = [2.0] * 6 + [None] + [2.0] * 6
    out = impute(quarterly(vals), "ar_fill")
    assert [v for _, v in out.observations] == [2.0] * 13


def test_ar_fill_falls_back_below_8_obs():
    log = TransformLog()
    out = impute(quarterly([1, 2, None, 4, 5]), "ar_fill", log)
    assert [v for _, v in out.observations] == [1.0, 2.0, 2.0, 4.0, 5.0]
    assert any(e["op"] == "ar_fill_fallback" for e in log.events)


def test_ar_fill_monte_carlo_recovery():
    # oracle: simulate AR(1) phi=0.8 sigma=1, punch one interior gap, impute;
    # the fill must be within 3 sigma of the true value in >= 95% of trials
    phi, sigma, n = 0.8, 1.0, 60
    hits = 0
    trials = 500
    master = np.random.default_rng(1234)
    for _ in range(trials):
        eps = master.normal(scale=sigma, size=n)
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = phi * y[t - 1] + eps[t]
        gap = int(master.integers(10, n - 10))
        vals = [None if i == gap else float(v) for i, v in enumerate(y)]
        out = impute(quarterly(vals), "ar_fill")
        fill = out.observations[gap][1]
        if abs(fill - y[gap]) <= 3 * sigma:
            hits += 1
    assert hits / trials >= 0.95


# ----------------------------------------------------------- assemble_panel


def test_assemble_two_quarterly_series():
    a = quarterly([1, 2, 3, 4], id="A", kind="yoy_percent")
    gdp = quarterly([5, 6, 7, 8], id="GDP", kind="yoy_percent")
    panel = assemble_panel([gdp, a], "GDP", (q("2000Q1"), q("2000Q4")))
    assert panel.columns == ("GDP", "A")
    assert panel.values.shape == (4, 2)
    assert not np.isnan(panel.values).any()
    assert [str(d) for d in panel.index] == ["2000Q1", "2000Q2", "2000Q3", "2000Q4"]


def test_assemble_unifies_monthly_to_quarterly():
    gdp = quarterly([5, 6], id="GDP", kind="yoy_percent")
    ind = RawSeries(
        "IND", "monthly", "yoy_percent",
        tuple((m("2000-01").advance(i), float(i)) for i in range(6)),
    )
    panel = assemble_panel([gdp, ind], "GDP", (q("2000Q1"), q("2000Q2")))
    assert panel.column("IND").tolist() == [1.0, 4.0]  # means of (0,1,2) and (3,4,5)


def test_assemble_target_hole_is_named():
    gdp = quarterly([5, None, 7], id="GDP", kind="yoy_percent")
    with pytest.raises(ValueError, match="2000Q2"):
        assemble_panel([gdp], "GDP", (q("2000Q1"), q("2000Q3")))


def test_assemble_column_order_is_input_order():
    cols = [quarterly([1, 2], id=f"V{i}", kind="yoy_percent") for i in range(5)]
    gdp = quarterly([1, 2], id="GDP", kind="yoy_percent")
    panel = assemble_panel(cols + [gdp], "GDP", (q("2000Q1"), q("2000Q2")))
    assert panel.columns == ("V0", "V1", "V2", "V3", "V4", "GDP")


def test_assemble_records_first_valid():
    gdp = quarterly([1, 2, 3], id="GDP", kind="yoy_percent")
    late = RawSeries("L", "quarterly", "yoy_percent", ((q("2000Q3"), 9.0),))
    panel = assemble_panel([gdp, late], "GDP", (q("2000Q1"), q("2000Q3")))
    assert panel.first_valid["L"] == q("2000Q3")
    assert np.isnan(panel.column("L")[:2]).all()


def test_raw_series_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        RawSeries("X", "quarterly", "level", ((q("2000Q1"), 1.0), (q("2000Q1"), 2.0)))
    with pytest.raises(ValueError, match="frequency"):
        RawSeries("X", "monthly", "level", ((q("2000Q1"), 1.0),))
    with pytest.raises(ValueError, match="non-finite"):
        RawSeries("X", "quarterly", "level", ((q("2000Q1"), float("nan")),))


def test_panel_validation():
    with pytest.raises(ValueError, match="target column"):
        Panel(
            index=(q("2000Q1"),), columns=("A",),
            values=np.zeros((1, 1)), target_id="GDP",
        )
