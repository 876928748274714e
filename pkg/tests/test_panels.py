import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argox.panels import (
    PanelError,
    WeeklyPanel,
    inv_logit,
    log1p_features,
    logit,
    parse_ili_csv,
    parse_trends_csv,
    write_panel_csv,
    zero_fraction_report,
)
from argox.weeks import EpiWeek
from tests.conftest import make_panel

W0 = EpiWeek(2014, 40)


def test_parse_ili_basic(tmp_path):
    path = tmp_path / "ili.csv"
    path.write_text(
        "year,week,geo,ili_percent\n"
        "2014,41,CA,1.8\n2014,41,US,2.1\n2014,42,CA,1.9\n2014,42,US,2.2\n"
    )
    panel = parse_ili_csv(path)
    assert panel.at(EpiWeek(2014, 41), "CA") == 1.8
    assert panel.columns == ["CA", "US"]


def test_parse_ili_rejects_negative(tmp_path):
    path = tmp_path / "ili.csv"
    path.write_text("year,week,geo,ili_percent\n2014,41,CA,-0.1\n")
    with pytest.raises(PanelError, match="outside"):
        parse_ili_csv(path)


def test_parse_ili_rejects_florida(tmp_path):
    path = tmp_path / "ili.csv"
    path.write_text("year,week,geo,ili_percent\n2014,41,FL,1.0\n")
    with pytest.raises(PanelError, match="excluded"):
        parse_ili_csv(path)


def test_parse_ili_rejects_missing_cell(tmp_path):
    path = tmp_path / "ili.csv"
    path.write_text(
        "year,week,geo,ili_percent\n2014,41,CA,1.0\n2014,41,TX,2.0\n2014,42,CA,1.1\n"
    )
    with pytest.raises(PanelError, match="missing"):
        parse_ili_csv(path)


def test_parse_trends_zero_is_data(tmp_path):
    path = tmp_path / "tr.csv"
    path.write_text(
        "year,week,geo,term,volume\n"
        "2014,41,CA,flu,100\n2014,42,CA,flu,0\n2014,44,CA,flu,55\n"
    )
    panels = parse_trends_csv(path)
    ca = panels["CA"]
    assert ca.series("flu").max() == 100
    assert ca.at(EpiWeek(2014, 42), "flu") == 0.0
    # the absent week 43 is filled with zero, not dropped
    assert ca.at(EpiWeek(2014, 43), "flu") == 0.0


def test_parse_trends_rejects_out_of_range(tmp_path):
    path = tmp_path / "tr.csv"
    path.write_text("year,week,geo,term,volume\n2014,41,CA,flu,101\n")
    with pytest.raises(PanelError, match="volume"):
        parse_trends_csv(path)


def test_log1p_values():
    panel = make_panel(W0, 1, ["a", "b", "c"], [[0.0, math.e - 1.0, 100.0]])
    out = log1p_features(panel)
    assert out.values[0, 0] == 0.0
    assert out.values[0, 1] == pytest.approx(1.0, abs=1e-12)
    # independently evaluated: ln(101)
    assert out.values[0, 2] == pytest.approx(4.61512051684125945, abs=1e-12)


def test_log1p_rejects_negative():
    panel = make_panel(W0, 1, ["a"], [[-0.5]])
    with pytest.raises(PanelError):
        log1p_features(panel)


@given(st.floats(0.0, 100.0, allow_nan=False))
def test_log1p_monotone_from_zero(x):
    panel = make_panel(W0, 1, ["a", "b"], [[0.0, x]])
    out = log1p_features(panel)
    assert out.values[0, 1] >= out.values[0, 0] == 0.0


def test_logit_midpoint_and_known_value():
    assert logit(50.0) == pytest.approx(0.0, abs=1e-15)
    # independently evaluated: ln(0.018/0.982)
    assert logit(1.8) == pytest.approx(-3.99921955045830120, abs=1e-12)


def test_logit_rejects_boundary():
    with pytest.raises(ValueError):
        logit(0.0)
    with pytest.raises(ValueError):
        logit(100.0)


def test_logit_floor_roundtrip_stays_at_floor():
    y = logit(0.0, floor=0.01)
    assert inv_logit(y) == pytest.approx(0.01, rel=1e-12)


@given(st.floats(1e-6, 100.0 - 1e-6, allow_nan=False))
def test_logit_inverse_pair(p):
    assert inv_logit(logit(p)) == pytest.approx(p, rel=1e-12)


def test_zero_fraction_report():
    all_zero = make_panel(W0, 2, ["a"], [[0.0], [0.0]])
    none_zero = make_panel(W0, 2, ["a"], [[1.0], [2.0]])
    mixed = make_panel(W0, 2, ["a", "b"], [[0.0, 1.0], [2.0, 0.0]])
    report = zero_fraction_report({"x": all_zero, "y": none_zero, "z": mixed})
    assert report == {"x": 1.0, "y": 0.0, "z": 0.5}


def test_zero_fraction_rejects_empty():
    empty = WeeklyPanel([], [], np.empty((0, 0)))
    with pytest.raises(PanelError):
        zero_fraction_report({"x": empty})


def test_panel_roundtrip_through_csv(tmp_path, rng):
    panel = make_panel(W0, 5, ["CA", "TX"], rng.uniform(0.1, 9.0, (5, 2)).round(6))
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, path, "ili_percent", "geo")
    back = parse_ili_csv(path)
    assert back.weeks == panel.weeks
    assert back.columns == panel.columns
    np.testing.assert_allclose(back.values, panel.values, rtol=1e-12)


def test_window_before_and_errors():
    panel = make_panel(W0, 6, ["a"], np.arange(6.0)[:, None])
    win = panel.window_before(W0.add(4), 3)
    np.testing.assert_array_equal(win.values.ravel(), [1.0, 2.0, 3.0])
    with pytest.raises(PanelError, match="history"):
        panel.window_before(W0.add(1), 3)


def test_duplicate_weeks_rejected():
    with pytest.raises(PanelError):
        WeeklyPanel([W0, W0], ["a"], np.zeros((2, 1)))
