"""Risk exposure ratios and descriptive text statistics.

The exposure measure for one (call, risk, mode) is the word count of the
generated risk document divided by the word count of the transcript body
that survived chunking. An all-NA document therefore scores exactly 0.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .gateway import RiskDocument

MEASURE_COLUMNS = (
    "PRiskSum",
    "PRiskAssess",
    "CRiskSum",
    "CRiskAssess",
    "AIRiskSum",
    "AIRiskAssess",
)
BENCHMARK_COLUMNS = ("PRiskBigram", "CRiskBigram")

_MEASURE_BY_KEY = {
    ("political", "summary"): "PRiskSum",
    ("political", "assessment"): "PRiskAssess",
    ("climate", "summary"): "CRiskSum",
    ("climate", "assessment"): "CRiskAssess",
    ("ai", "summary"): "AIRiskSum",
    ("ai", "assessment"): "AIRiskAssess",
}

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def measure_column(risk_type: str, mode: str) -> str:
    return _MEASURE_BY_KEY[(risk_type, mode)]


def word_count(text: str) -> int:
    """Number of maximal whitespace-delimited substrings."""
    return len(text.split())


@dataclass(frozen=True)
class TranscriptLength:
    call_id: str
    denominator_words: int


@dataclass
class ExposureRecord:
    firm_id: str
    fiscal_quarter: str
    PRiskSum: float = 0.0
    PRiskAssess: float = 0.0
    CRiskSum: float = 0.0
    CRiskAssess: float = 0.0
    AIRiskSum: float = 0.0
    AIRiskAssess: float = 0.0
    PRiskBigram: float | None = None
    CRiskBigram: float | None = None


def compute_exposure(doc: RiskDocument, length: TranscriptLength) -> float:
    """Words of generated risk text over words of retained transcript."""
    if length.denominator_words <= 0:
        raise DataError(f"empty transcript: call {length.call_id} has no retained words")
    return word_count(doc.text) / length.denominator_words


def _column(records: Sequence, name: str) -> np.ndarray:
    values = []
    for r in records:
        if isinstance(r, Mapping):
            v = r[name]
        else:
            v = getattr(r, name)
        values.append(float(v))
    return np.asarray(values, dtype=float)


def pearson_matrix(records: Sequence, columns: Sequence[str]) -> np.ndarray:
    """Pearson correlations among the selected columns.

    Diagonal is 1; entries involving a zero-variance column are NaN (the
    undefined sentinel) rather than 0.
    """
    if len(records) < 2:
        raise DataError("pearson_matrix needs at least 2 records")
    data = np.column_stack([_column(records, c) for c in columns])
    if np.isnan(data).any():
        raise DataError("pearson_matrix does not accept missing values")
    centered = data - data.mean(axis=0)
    sd = np.sqrt((centered**2).mean(axis=0))
    k = len(columns)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            if sd[i] == 0.0 or sd[j] == 0.0:
                out[i, j] = out[j, i] = np.nan
            else:
                cov = (centered[:, i] * centered[:, j]).mean()
                out[i, j] = out[j, i] = cov / (sd[i] * sd[j])
    return out


def within_quarter_demean(records: Sequence, column: str, quarter_field: str = "fiscal_quarter") -> np.ndarray:
    """Subtract each quarter's mean from the column."""
    values = _column(records, column)
    quarters = []
    for r in records:
        quarters.append(r[quarter_field] if isinstance(r, Mapping) else getattr(r, quarter_field))
    out = values.copy()
    for q in set(quarters):
        mask = np.array([x == q for x in quarters])
        out[mask] = values[mask] - values[mask].mean()
    return out


def _terms(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def cosine_similarity(doc_a: str, doc_b: str) -> float:
    """Cosine of term-frequency vectors over the union vocabulary."""
    ta, tb = Counter(_terms(doc_a)), Counter(_terms(doc_b))
    if not ta or not tb:
        raise DataError("cosine_similarity: empty document after tokenization")
    dot = sum(ta[w] * tb[w] for w in ta.keys() & tb.keys())
    norm_a = np.sqrt(sum(v * v for v in ta.values()))
    norm_b = np.sqrt(sum(v * v for v in tb.values()))
    return float(dot / (norm_a * norm_b))


def term_frequencies(docs: Iterable[RiskDocument | str], stopwords: set[str] = frozenset()) -> list[tuple[str, int]]:
    """Word-cloud data: (term, count) sorted by count desc, then term."""
    counts: Counter[str] = Counter()
    for doc in docs:
        text = doc if isinstance(doc, str) else doc.text
        counts.update(t for t in _terms(text) if t not in stopwords)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def format_exposure_value(x: float) -> str:
    """Serialize a real with 6 significant digits."""
    return format(float(x), ".6g")


def exposure_csv_lines(records: Sequence[ExposureRecord], include_benchmarks: bool | None = None) -> list[str]:
    """Rows for the exposures CSV; benchmark columns appear only when present."""
    if include_benchmarks is None:
        include_benchmarks = any(r.PRiskBigram is not None or r.CRiskBigram is not None for r in records)
    cols = list(MEASURE_COLUMNS) + (list(BENCHMARK_COLUMNS) if include_benchmarks else [])
    lines = ["firm_id,fiscal_quarter," + ",".join(cols)]
    for r in records:
        cells = [r.firm_id, r.fiscal_quarter]
        for c in cols:
            v = getattr(r, c)
            cells.append("" if v is None else format_exposure_value(v))
        lines.append(",".join(cells))
    return lines
