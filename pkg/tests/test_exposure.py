import numpy as np
import pytest

from riskscope.errors import DataError
from riskscope.exposure import (
    TranscriptLength,
    compute_exposure,
    cosine_similarity,
    exposure_csv_lines,
    ExposureRecord,
    pearson_matrix,
    term_frequencies,
    within_quarter_demean,
    word_count,
)
from riskscope.gateway import RiskDocument


def doc(text, outputs=None):
    return RiskDocument("c1", "political", "summary", text, tuple(outputs or [text]))


class TestWordCount:
    def test_empty(self):
        assert word_count("") == 0

    def test_whitespace_collapsing(self):
        assert word_count("a  b\tc\n") == 3

    def test_large_generated(self):
        assert word_count(" ".join(f"w{i}" for i in range(1000))) == 1000


class TestComputeExposure:
    def test_direct_ratio(self):
        assert compute_exposure(doc(" ".join(["w"] * 10)), TranscriptLength("c1", 1000)) == 0.01

    def test_all_na_is_zero(self):
        assert compute_exposure(doc(""), TranscriptLength("c1", 500)) == 0.0

    def test_sum_of_outputs(self):
        text = " ".join(["a"] * 7) + "\n" + " ".join(["b"] * 13)
        assert compute_exposure(doc(text), TranscriptLength("c1", 400)) == 20 / 400

    def test_zero_denominator(self):
        with pytest.raises(DataError, match="empty transcript"):
            compute_exposure(doc("x"), TranscriptLength("c1", 0))

    def test_scale_consistency(self):
        # duplicating output and transcript verbatim leaves the ratio unchanged
        text = " ".join(["w"] * 12)
        single = compute_exposure(doc(text), TranscriptLength("c1", 300))
        double = compute_exposure(doc(text + "\n" + text), TranscriptLength("c1", 600))
        assert single == double

    def test_monotone_in_output_length(self):
        base = compute_exposure(doc("one two"), TranscriptLength("c1", 100))
        longer = compute_exposure(doc("one two three"), TranscriptLength("c1", 100))
        assert longer > base


def records_from(columns: dict):
    n = len(next(iter(columns.values())))
    return [{k: v[i] for k, v in columns.items()} for i in range(n)]


class TestPearson:
    def test_self_and_exact_collinearity(self):
        recs = records_from({"x": [1, 2, 3], "y": [2, 4, 6], "z": [3, 2, 1]})
        m = pearson_matrix(recs, ["x", "y", "z"])
        assert np.allclose(np.diag(m), 1.0)
        assert m[0, 1] == pytest.approx(1.0)
        assert m[0, 2] == pytest.approx(-1.0)

    def test_hand_computed_08(self):
        recs = records_from({"x": [1, 2, 3, 4], "y": [1, 3, 2, 4]})
        m = pearson_matrix(recs, ["x", "y"])
        assert m[0, 1] == pytest.approx(0.8, abs=1e-12)

    def test_zero_variance_is_nan_not_zero(self):
        recs = records_from({"x": [1, 2, 3], "c": [5, 5, 5]})
        m = pearson_matrix(recs, ["x", "c"])
        assert np.isnan(m[0, 1]) and np.isnan(m[1, 0])
        assert m[1, 1] == 1.0

    def test_symmetry_and_affine_invariance(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=50), rng.normal(size=50)
        base = pearson_matrix(records_from({"x": x, "y": y}), ["x", "y"])
        scaled = pearson_matrix(records_from({"x": 2.5 * x + 3, "y": y}), ["x", "y"])
        assert base[0, 1] == pytest.approx(scaled[0, 1], abs=1e-12)
        assert base[0, 1] == base[1, 0]

    def test_missing_values_rejected(self):
        with pytest.raises(DataError):
            pearson_matrix(records_from({"x": [1.0, np.nan], "y": [1.0, 2.0]}), ["x", "y"])


class TestWithinQuarterDemean:
    def recs(self, quarters, values):
        return [{"fiscal_quarter": q, "v": v} for q, v in zip(quarters, values)]

    def test_single_quarter(self):
        out = within_quarter_demean(self.recs(["Q1"] * 3, [1, 2, 3]), "v")
        assert np.allclose(out, [-1, 0, 1])

    def test_constant_per_quarter(self):
        out = within_quarter_demean(self.recs(["Q1", "Q1", "Q2", "Q2"], [4, 4, 7, 7]), "v")
        assert np.allclose(out, 0.0)

    def test_two_quarters_hand_means(self):
        out = within_quarter_demean(
            self.recs(["Q1", "Q1", "Q2", "Q2"], [0.4, 0.6, 0.1, 0.3]), "v"
        )
        assert np.allclose(out, [-0.1, 0.1, -0.1, 0.1])

    def test_per_quarter_means_vanish_and_ranks_hold(self):
        rng = np.random.default_rng(1)
        quarters = [f"Q{i % 4}" for i in range(40)]
        values = rng.normal(size=40)
        out = within_quarter_demean(self.recs(quarters, values), "v")
        for q in set(quarters):
            mask = np.array([x == q for x in quarters])
            assert abs(out[mask].mean()) < 1e-12
            assert (np.argsort(out[mask]) == np.argsort(values[mask])).all()


class TestCosine:
    def test_identical(self):
        assert cosine_similarity("risk up risk", "risk up risk") == pytest.approx(1.0)

    def test_disjoint(self):
        assert cosine_similarity("alpha beta", "gamma delta") == 0.0

    def test_half(self):
        assert cosine_similarity("a b", "a c") == pytest.approx(0.5)

    def test_empty_errors(self):
        with pytest.raises(DataError):
            cosine_similarity("...", "words here")


class TestTermFrequencies:
    def test_counts_ranked(self):
        assert term_frequencies(["risk risk tariff"]) == [("risk", 2), ("tariff", 1)]

    def test_all_stopwords(self):
        assert term_frequencies(["the and of"], {"the", "and", "of"}) == []

    def test_tie_breaks_lexicographic(self):
        assert term_frequencies(["b a"]) == [("a", 1), ("b", 1)]


class TestCsv:
    def test_header_and_six_significant_digits(self):
        rec = ExposureRecord("f1", "2020Q1", PRiskSum=0.0123456789)
        lines = exposure_csv_lines([rec])
        assert lines[0] == (
            "firm_id,fiscal_quarter,PRiskSum,PRiskAssess,CRiskSum,CRiskAssess,AIRiskSum,AIRiskAssess"
        )
        assert lines[1].split(",")[2] == "0.0123457"

    def test_benchmark_columns_appear_when_present(self):
        rec = ExposureRecord("f1", "2020Q1", PRiskBigram=0.5, CRiskBigram=0.25)
        lines = exposure_csv_lines([rec])
        assert lines[0].endswith("PRiskBigram,CRiskBigram")
        assert lines[1].endswith("0.5,0.25")
