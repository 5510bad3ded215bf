import numpy as np
import pandas as pd
import pytest

from src.core.exceptions import AlignmentError, DataParseError, InvalidArgumentError
from src.dataio.loader import (
    align,
    align_with_report,
    load_dataset_csv,
    load_price_csv,
    load_risk_csv,
    log_returns,
    write_dataset_csv,
    write_price_csv,
    write_risk_csv,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def fixture_inputs(fixture_dir):
    a = load_price_csv(fixture_dir / "prices_a.csv")
    b = load_price_csv(fixture_dir / "prices_b.csv")
    risk = load_risk_csv(fixture_dir / "risk.csv")
    return a, b, risk


def test_fixtures_load(fixture_inputs):
    a, b, risk = fixture_inputs
    assert (len(a), len(b), len(risk)) == (315, 312, 440)
    assert a.name == "prices_a"
    assert a.dates[0] == pd.Timestamp("2022-01-03")
    assert risk.gprd[0] == pytest.approx(101.24)
    assert list(risk.to_frame().columns) == ["gprd", "gprd_a", "gprd_t"]


def test_prices_are_sorted_on_load(tmp_path):
    path = _write(tmp_path / "p.csv", "date,close\n2024-01-03,11\n2024-01-02,10\n")
    series = load_price_csv(path, name="asset")
    assert list(series.close) == [10.0, 11.0]
    assert series.name == "asset"


@pytest.mark.parametrize(
    ("body", "rows"),
    [
        ("2024-01-02,10\n2024-13-01,11\n", [3]),
        ("2024-01-02,10\n2024-01-02,11\n", [2, 3]),
        ("2024-01-02,10\n2024-01-03,0\n", [3]),
        ("2024-01-02,10\n2024-01-03,\n2024-01-04,abc\n", [3, 4]),
    ],
)
def test_bad_price_rows_are_reported(tmp_path, body, rows):
    path = _write(tmp_path / "p.csv", "date,close\n" + body)
    with pytest.raises(DataParseError) as info:
        load_price_csv(path)
    assert info.value.rows == rows
    assert info.value.category == "parse-error"


def test_header_and_empty_file(tmp_path):
    with pytest.raises(DataParseError, match="missing required columns"):
        load_price_csv(_write(tmp_path / "a.csv", "day,close\n2024-01-02,10\n"))
    with pytest.raises(DataParseError, match="empty"):
        load_price_csv(_write(tmp_path / "b.csv", ""))
    with pytest.raises(DataParseError, match="no data rows"):
        load_price_csv(_write(tmp_path / "c.csv", "date,close\n"))
    with pytest.raises(FileNotFoundError):
        load_price_csv(tmp_path / "missing.csv")


def test_negative_risk_index(tmp_path):
    path = _write(
        tmp_path / "r.csv", "date,gprd,gprd_a,gprd_t\n2024-01-02,1,2,3\n2024-01-03,1,-2,3\n"
    )
    with pytest.raises(DataParseError) as info:
        load_risk_csv(path)
    assert info.value.rows == [3]


def test_log_returns(tmp_path):
    path = _write(tmp_path / "p.csv", "date,close\n2024-01-02,100\n2024-01-03,110\n2024-01-05,99\n")
    returns = log_returns(load_price_csv(path))
    assert list(returns.index.strftime("%Y-%m-%d")) == ["2024-01-03", "2024-01-05"]
    np.testing.assert_allclose(returns.to_numpy(), np.log([1.1, 0.9]))
    single = _write(tmp_path / "s.csv", "date,close\n2024-01-02,100\n")
    with pytest.raises(InvalidArgumentError):
        log_returns(load_price_csv(single))


def test_alignment_drops_unmatched_dates(fixture_inputs):
    a, b, risk = fixture_inputs
    data, report = align_with_report(log_returns(a), log_returns(b), risk)
    assert data.n == report.n == 311
    assert (data.p, data.k) == (2, 3)
    assert "2022-04-15" in report.dropped_dates
    assert "2022-01-08" in report.dropped_dates
    assert "2022-04-14" not in report.dropped_dates
    assert report.to_dict()["lag"] == 0
    np.testing.assert_allclose(data.scaled.mean(axis=0), 0.0, atol=1e-12)


def test_alignment_lag_uses_earlier_indices(fixture_inputs):
    a, b, risk = fixture_inputs
    data = align(log_returns(a), log_returns(b), risk, lag=1)
    assert data.times[0] == pd.Timestamp("2022-01-04")
    np.testing.assert_allclose(data.covariates[0], [risk.gprd[0], risk.gprd_a[0], risk.gprd_t[0]])
    with pytest.raises(InvalidArgumentError):
        align(log_returns(a), log_returns(b), risk, lag=-1)


def test_alignment_without_common_dates(tmp_path, fixture_inputs):
    a, b, _ = fixture_inputs
    late = _write(tmp_path / "r.csv", "date,gprd,gprd_a,gprd_t\n2030-01-02,1,2,3\n")
    with pytest.raises(AlignmentError):
        align(log_returns(a), log_returns(b), load_risk_csv(late))


def test_dataset_csv_round_trip(tmp_path, fixture_inputs):
    a, b, risk = fixture_inputs
    data = align(log_returns(a), log_returns(b), risk)
    path = tmp_path / "dataset.csv"
    write_dataset_csv(data, path)
    loaded = load_dataset_csv(path)
    np.testing.assert_array_equal(loaded.responses, data.responses)
    np.testing.assert_array_equal(loaded.covariates, data.covariates)
    assert list(loaded.times) == list(data.times)
    assert path.read_text().splitlines()[0] == "date,y1,y2,x1,x2,x3"


def test_price_csv_round_trip(tmp_path, fixture_inputs):
    a, _, _ = fixture_inputs
    write_price_csv(a, tmp_path / "a.csv")
    again = load_price_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(again.close, a.close)
    assert list(again.dates) == list(a.dates)


def test_dataset_csv_needs_numbered_columns(tmp_path):
    path = _write(tmp_path / "d.csv", "date,ret,x1\n2024-01-02,0.1,1\n")
    with pytest.raises(DataParseError, match="y1"):
        load_dataset_csv(path)


def test_risk_csv_round_trip(tmp_path, fixture_inputs):
    _, _, risk = fixture_inputs
    write_risk_csv(risk, tmp_path / "r.csv")
    again = load_risk_csv(tmp_path / "r.csv")
    pd.testing.assert_frame_equal(again.to_frame(), risk.to_frame())


def test_dataset_csv_rows_are_sorted_by_date(tmp_path):
    text = (
        "date,y1,y2,x1\n"
        "2024-01-04,0.3,-0.3,3\n"
        "2024-01-02,0.1,-0.1,1\n"
        "2024-01-03,0.2,-0.2,2\n"
    )
    loaded = load_dataset_csv(_write(tmp_path / "d.csv", text), standardize=False)
    assert list(loaded.times.strftime("%Y-%m-%d")) == ["2024-01-02", "2024-01-03", "2024-01-04"]
    np.testing.assert_allclose(loaded.responses, [[0.1, -0.1], [0.2, -0.2], [0.3, -0.3]])
    np.testing.assert_allclose(loaded.covariates[:, 0], [1.0, 2.0, 3.0])


def test_dataset_csv_duplicate_dates(tmp_path):
    text = "date,y1,x1\n2024-01-02,0.1,1\n2024-01-02,0.2,2\n"
    with pytest.raises(DataParseError) as info:
        load_dataset_csv(_write(tmp_path / "d.csv", text))
    assert info.value.rows == [2, 3]


def test_geometric_price_ramp_has_constant_log_returns(tmp_path):
    growth = 1.003
    dates = pd.bdate_range("2024-01-02", periods=40)
    close = 100.0 * growth ** np.arange(40)
    body = "".join(f"{d:%Y-%m-%d},{c:.17g}\n" for d, c in zip(dates, close))
    returns = log_returns(load_price_csv(_write(tmp_path / "p.csv", "date,close\n" + body)))
    assert len(returns) == 39
    np.testing.assert_allclose(returns.to_numpy(), np.log(growth), rtol=1e-9)
