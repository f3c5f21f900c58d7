import numpy as np

from riskscope.econometrics.core import RegressionResult
from riskscope.econometrics.report import result_csv_rows, results_text, stars


def test_star_thresholds_two_sided_normal():
    assert stars(1.5) == ""
    assert stars(1.70) == "*"
    assert stars(-2.0) == "**"
    assert stars(2.60) == "***"
    assert stars(float("nan")) == ""


def sample_result():
    return RegressionResult(
        names=["risk", "log_assets"],
        coef=np.array([1.25, -0.1]),
        se=np.array([0.5, 0.2]),
        t=np.array([2.5, -0.5]),
        n=120,
        r2=0.3,
        adj_r2=0.25,
        absorbed="quarter + industry",
        dropped=["dup"],
        dof_absorbed=7,
    )


def test_csv_rows_carry_all_fields():
    rows = result_csv_rows("vol_implied", sample_result())
    assert len(rows) == 2
    first = rows[0]
    assert first["table"] == "vol_implied"
    assert first["regressor"] == "risk"
    assert first["stars"] == "**"
    assert first["n"] == 120
    assert first["fe"] == "quarter + industry"
    assert first["dropped"] == "dup"


def test_text_rendering_includes_dropped_and_stars():
    text = results_text("Demo", [("col1", sample_result())])
    assert "Demo" in text
    assert "dropped collinear: dup" in text
    assert "2.50**" in text
    assert "N=120" in text
