"""Seeded synthetic fixture generator.

Produces an earnings-call corpus with realistic call lengths (a few
thousand words each, occasional oversized answers) plus the companion
market/fundamentals/counts/factors files, so the whole pipeline can run
end to end against the stub provider. Everything is driven by one RNG
seed; identical seeds give identical bytes.

Risk content is injected through invented marker words (never part of
the neutral vocabulary), and the bundled stub rules key on the marker
plus a template phrase, so each (risk, mode) measure varies across calls
without any live model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

_VOCAB = (
    "revenue margin growth quarter segment demand supply pipeline product customer "
    "market channel pricing volume cost capital expense guidance outlook team "
    "platform service contract order backlog inventory logistics operations plant "
    "facility launch integration acquisition partner region performance execution "
    "balance sheet cash flow investment return efficiency productivity headcount "
    "initiative strategy transition momentum mix currency headwind tailwind share "
    "retention adoption utilization capacity footprint portfolio innovation quality"
).split()

# marker words that trigger stub rules; kept out of the neutral vocabulary
POLITICAL_KEYWORDS = ("tariffgate", "quotaphase")
CLIMATE_KEYWORDS = ("carbonshift", "floodzone")
AI_KEYWORDS = ("robotix", "neuralcore")
GENERIC_KEYWORD = "diversified"

_RISK_KEYWORDS = {
    "political": POLITICAL_KEYWORDS,
    "climate": CLIMATE_KEYWORDS,
    "ai": AI_KEYWORDS,
}

# template phrases from the default prompts (see gateway defaults)
_MARKERS = {
    ("political", "summary"): "summary of political or regulatory risk",
    ("political", "assessment"): "assessment of political or regulatory risk",
    ("climate", "summary"): "summary of climate-related risk",
    ("climate", "assessment"): "assessment of climate-related risk",
    ("ai", "summary"): "summary of AI-related risk",
    ("ai", "assessment"): "assessment of AI-related risk",
}

_RESPONSE_TOPICS = {
    "political": "regulation",
    "climate": "emissions",
    "ai": "automation",
}

_FILLER = (
    "exposure pressure uncertainty duty oversight policy review agency compliance "
    "mandate restriction framework scenario mitigation contingency monitoring"
).split()


def _paragraph(topic: str, n_words: int) -> str:
    """Deterministic paragraph of exactly n_words words."""
    words = [topic]
    i = 0
    while len(words) < n_words:
        words.append(_FILLER[i % len(_FILLER)])
        i += 1
    return " ".join(words[:n_words]).capitalize() + "."


def default_stub_rules() -> list[dict]:
    """Bundled stub rules: (risk, mode) template phrase + marker word.

    First match wins; response lengths differ by rule so assessments run
    longer than summaries, mirroring the intended output profile.
    """
    lengths = {"summary": (22, 13), "assessment": (48, 26)}
    rules: list[dict] = []
    for risk, keywords in _RISK_KEYWORDS.items():
        topic = _RESPONSE_TOPICS[risk]
        for mode in ("assessment", "summary"):
            primary, secondary = lengths[mode]
            rules.append(
                {
                    "contains": [_MARKERS[(risk, mode)], keywords[0]],
                    "respond": _paragraph(topic, primary),
                }
            )
            rules.append(
                {
                    "contains": [_MARKERS[(risk, mode)], keywords[1]],
                    "respond": _paragraph(topic, secondary),
                }
            )
        # assessments also react to a generic resilience mention
        rules.append(
            {
                "contains": [_MARKERS[(risk, "assessment")], GENERIC_KEYWORD],
                "respond": _paragraph(_RESPONSE_TOPICS[risk], 11),
            }
        )
    return rules


def _sentence(rng: np.random.Generator, n_words: int, inject: str | None = None) -> str:
    words = [str(w) for w in rng.choice(_VOCAB, size=n_words)]
    if inject is not None:
        pos = int(rng.integers(1, n_words))  # never first: stays lowercase
        words[pos] = inject
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _speech(rng, n_sentences: tuple[int, int], words: tuple[int, int], injections: list[str]) -> str:
    count = max(int(rng.integers(n_sentences[0], n_sentences[1] + 1)), len(injections))
    sentences = [_sentence(rng, int(rng.integers(words[0], words[1] + 1))) for _ in range(count)]
    if injections:
        slots = rng.choice(count, size=len(injections), replace=False)
        for slot, word in zip(slots, injections):
            sentences[int(slot)] = _sentence(rng, int(rng.integers(words[0], words[1] + 1)), inject=word)
    return " ".join(sentences)


def _call_keywords(rng, clean: bool, force_all: bool) -> list[list[str]]:
    """Keyword injections for [presentation, per-qa-unit pool]."""
    pool: list[str] = []
    if clean:
        return [pool]
    for risk, keywords in _RISK_KEYWORDS.items():
        discussed = force_all or rng.random() < 0.7
        if not discussed:
            continue
        n_mentions = 1 + int(rng.poisson(1.2))
        for _ in range(n_mentions):
            pool.append(keywords[0] if rng.random() < 0.6 else keywords[1])
    if rng.random() < 0.5:
        pool.extend([GENERIC_KEYWORD] * int(rng.integers(1, 3)))
    return [pool]


def generate_call(
    rng: np.random.Generator,
    call_id: str,
    firm_id: str,
    quarter: str,
    call_date: str,
    clean: bool = False,
    force_all_risks: bool = False,
    long_answer_prob: float = 0.012,
) -> dict:
    """One synthetic call record in corpus JSONL shape."""
    (pool,) = _call_keywords(rng, clean, force_all_risks)
    rng.shuffle(pool)
    pres_pool: list[str] = []
    qa_pool: list[str] = []
    for word in pool:
        (pres_pool if rng.random() < 0.5 else qa_pool).append(word)

    turns = [
        {
            "speaker_id": "OPERATOR",
            "role": "operator",
            "section": "presentation",
            "text": _sentence(rng, 14),
        }
    ]
    n_exec = int(rng.integers(2, 5))
    pres_shares: list[list[str]] = [[] for _ in range(n_exec)]
    for word in pres_pool:
        pres_shares[int(rng.integers(0, n_exec))].append(word)
    for i in range(n_exec):
        turns.append(
            {
                "speaker_id": f"EXEC{i + 1}",
                "role": "executive",
                "section": "presentation",
                "text": _speech(rng, (8, 22), (14, 26), pres_shares[i]),
            }
        )

    n_units = int(rng.integers(5, 12))
    for u in range(n_units):
        analyst = f"ANALYST{int(rng.integers(1, 8))}"
        injections = []
        if qa_pool and rng.random() < 0.6:
            injections.append(qa_pool.pop())
        if rng.random() < 0.12:
            # a long question the next analyst talks over: no answer follows
            turns.append(
                {
                    "speaker_id": f"ANALYST{int(rng.integers(1, 8))}",
                    "role": "analyst",
                    "section": "qa",
                    "text": _speech(rng, (3, 5), (14, 24), []),
                }
            )
        turns.append(
            {
                "speaker_id": analyst,
                "role": "analyst",
                "section": "qa",
                "text": _speech(rng, (1, 3), (14, 24), []),
            }
        )
        if rng.random() < long_answer_prob:
            # rare monologue answer that exceeds the chunk budget
            turns.append(
                {
                    "speaker_id": "EXEC1",
                    "role": "executive",
                    "section": "qa",
                    "text": _speech(rng, (80, 120), (18, 26), injections),
                }
            )
        else:
            n_answers = int(rng.integers(1, 4))
            for a in range(n_answers):
                turns.append(
                    {
                        "speaker_id": f"EXEC{int(rng.integers(1, n_exec + 1))}",
                        "role": "executive",
                        "section": "qa",
                        "text": _speech(rng, (3, 10), (16, 26), injections if a == 0 else []),
                    }
                )
        if rng.random() < 0.2:
            turns.append(
                {
                    "speaker_id": analyst,
                    "role": "analyst",
                    "section": "qa",
                    "text": "Thank you very much, that is helpful.",
                }
            )
    if qa_pool:
        # leftover markers go into a closing management remark
        turns.append(
            {
                "speaker_id": "EXEC1",
                "role": "executive",
                "section": "qa",
                "text": _speech(rng, (4, 8), (16, 26), qa_pool),
            }
        )
    turns.append(
        {
            "speaker_id": "OPERATOR",
            "role": "operator",
            "section": "qa",
            "text": _sentence(rng, 10),
        }
    )
    return {
        "call_id": call_id,
        "firm_id": firm_id,
        "fiscal_quarter": quarter,
        "call_date": call_date,
        "language": "en",
        "turns": turns,
    }


_QUARTER_CALL_MONTH = {1: "02", 2: "05", 3: "08", 4: "11"}


def generate_corpus_records(
    seed: int,
    firm_ids: list[str],
    quarters: list[str],
    n_clean: int = 2,
) -> list[dict]:
    """One call per firm-quarter; the first n_clean (firm, quarter) cells
    hold no risk content at all, so their exposures are exactly zero."""
    rng = np.random.default_rng(seed)
    cells = [(f, q) for q in quarters for f in firm_ids]
    clean_cells = set(cells[:: max(1, len(cells) // max(n_clean, 1))][:n_clean])
    records = []
    first_risky_done: set[tuple[str, str]] = set()
    for firm, quarter in cells:
        year, qnum = quarter.split("Q")
        call_date = f"{year}-{_QUARTER_CALL_MONTH[int(qnum)]}-{int(rng.integers(3, 26)):02d}"
        clean = (firm, quarter) in clean_cells
        force = False
        if not clean and (firm, year) not in first_risky_done:
            force = True  # guarantee nonzero annual exposure for every risk
            first_risky_done.add((firm, year))
        records.append(
            generate_call(
                rng,
                call_id=f"{firm}-{quarter}",
                firm_id=firm,
                quarter=quarter,
                call_date=call_date,
                clean=clean,
                force_all_risks=force,
            )
        )
    return records


def generate_stress_corpus(seed: int, n_transcripts: int = 200) -> list[dict]:
    """Chunking stress corpus: many firms, one call each, varied lengths."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_transcripts):
        quarter = f"20{int(rng.integers(19, 23))}Q{int(rng.integers(1, 5))}"
        year, qnum = quarter.split("Q")
        call_date = f"{year}-{_QUARTER_CALL_MONTH[int(qnum)]}-{int(rng.integers(3, 26)):02d}"
        records.append(
            generate_call(
                rng,
                call_id=f"S{i:04d}",
                firm_id=f"SF{i:04d}",
                quarter=quarter,
                call_date=call_date,
                clean=bool(rng.random() < 0.05),
                long_answer_prob=0.012,
            )
        )
    return records


# ---------------------------------------------------------------------------
# companion market data


def _business_days(start: str, end: str) -> pd.DatetimeIndex:
    return pd.bdate_range(start, end)


def generate_market_inputs(
    seed: int,
    firm_ids: list[str],
    quarters: list[str],
    returns_start: str = "2018-06-01",
    returns_end: str = "2023-06-30",
) -> dict[str, pd.DataFrame]:
    """Returns, market, fundamentals, counts, factors, benchmarks,
    characteristics, and inflation tables covering the corpus span plus
    the lead/holding horizons."""
    rng = np.random.default_rng(seed + 1)
    days = _business_days(returns_start, returns_end)
    mkt = rng.normal(0.0003, 0.009, size=len(days))
    market = pd.DataFrame({"date": days.strftime("%Y-%m-%d"), "mkt_ret": mkt})

    frames = []
    for i, firm in enumerate(firm_ids):
        beta = rng.uniform(0.6, 1.4)
        sigma = rng.uniform(0.008, 0.02)
        ret = beta * mkt + rng.normal(0.0, sigma, size=len(days))
        frames.append(
            pd.DataFrame({"firm_id": firm, "date": days.strftime("%Y-%m-%d"), "ret": ret})
        )
    returns = pd.concat(frames, ignore_index=True)

    periods = sorted({pd.Period(q, freq="Q") for q in quarters})
    fund_quarters = pd.period_range(periods[0] - 1, periods[-1] + 2, freq="Q")
    industries = ["20", "35", "73"]
    fund_rows = []
    counts_rows = []
    bench_rows = []
    for i, firm in enumerate(firm_ids):
        industry = industries[i % len(industries)]
        for j, q in enumerate(fund_quarters):
            fund_rows.append(
                {
                    "firm_id": firm,
                    "quarter": str(q),
                    "capex": round(float(rng.uniform(4, 40)), 4),
                    "ppe_initial": round(float(rng.uniform(300, 900)), 4) if j == 0 else "",
                    "iv_90d_atm": round(float(rng.uniform(0.25, 0.75)), 6),
                    "total_assets": round(float(np.exp(rng.uniform(5, 8))), 4),
                    "industry": industry,
                }
            )
            counts_rows.append(
                {
                    "firm_id": firm,
                    "quarter": str(q),
                    "lobby_amount": round(float(rng.uniform(1e4, 1e6)), 2)
                    if rng.random() < 0.4
                    else 0.0,
                    "green_patents": int(rng.poisson(0.3)),
                    "ai_patents": int(rng.poisson(0.25)),
                }
            )
            bench_rows.append(
                {
                    "firm_id": firm,
                    "fiscal_quarter": str(q),
                    "PRiskBigram": round(float(abs(rng.normal(0.5, 0.3))), 6),
                    "CRiskBigram": round(float(abs(rng.normal(0.4, 0.25))), 6),
                }
            )
    fundamentals = pd.DataFrame(fund_rows)
    counts = pd.DataFrame(counts_rows)
    benchmarks = pd.DataFrame(bench_rows)

    months = pd.period_range("2018-01", "2023-06", freq="M")
    factors = pd.DataFrame(
        {
            "date": months.strftime("%Y-%m"),
            "MKT_RF": np.round(rng.normal(0.6, 3.5, len(months)), 6),
            "SMB": np.round(rng.normal(0.1, 2.0, len(months)), 6),
            "HML": np.round(rng.normal(0.0, 2.5, len(months)), 6),
            "RMW": np.round(rng.normal(0.15, 1.5, len(months)), 6),
            "CMA": np.round(rng.normal(0.1, 1.3, len(months)), 6),
            "RF": np.round(rng.uniform(0.05, 0.4, len(months)), 6),
        }
    )

    char_rows = []
    for firm in firm_ids:
        for m in months:
            char_rows.append(
                {
                    "firm_id": firm,
                    "month": str(m),
                    "me": round(float(np.exp(rng.normal(7, 1))), 4),
                    "be_me": round(float(np.exp(rng.normal(-0.5, 0.4))), 6),
                    "profitability": round(float(rng.normal(0.1, 0.05)), 6),
                    "investment": round(float(rng.normal(0.05, 0.08)), 6),
                }
            )
    characteristics = pd.DataFrame(char_rows)

    inflation = pd.DataFrame(
        {
            "month": months.strftime("%Y-%m"),
            "ppi_change": np.round(rng.normal(0.002, 0.004, len(months)), 8),
        }
    )

    return {
        "returns": returns,
        "market": market,
        "fundamentals": fundamentals,
        "counts": counts,
        "factors": factors,
        "benchmarks": benchmarks,
        "characteristics": characteristics,
        "inflation": inflation,
    }


DEFAULT_FIRMS = ["F0001", "F0002", "F0003", "F0004", "F0005"]
DEFAULT_QUARTERS = ["2020Q1", "2020Q2", "2020Q3", "2020Q4"]


def write_fixture(directory, seed: int = 7, firm_ids=None, quarters=None, n_clean: int = 2) -> dict:
    """Write the bundled fixture inputs plus a ready-to-run config.

    Returns the config dict (paths are relative to ``directory``).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    firm_ids = list(firm_ids or DEFAULT_FIRMS)
    quarters = list(quarters or DEFAULT_QUARTERS)

    records = generate_corpus_records(seed, firm_ids, quarters, n_clean=n_clean)
    corpus_path = directory / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    tables = generate_market_inputs(seed, firm_ids, quarters)
    for name, frame in tables.items():
        frame.to_csv(directory / f"{name}.csv", index=False)

    rules_path = directory / "stub_rules.json"
    rules_path.write_text(json.dumps(default_stub_rules(), indent=2) + "\n", encoding="utf-8")

    config = {
        "seed": seed,
        "output_dir": "out",
        "corpus": "corpus.jsonl",
        "returns": "returns.csv",
        "market": "market.csv",
        "fundamentals": "fundamentals.csv",
        "counts": "counts.csv",
        "factors": "factors.csv",
        "benchmarks": "benchmarks.csv",
        "characteristics": "characteristics.csv",
        "inflation": "inflation.csv",
        "provider": "stub",
        "stub_rules": "stub_rules.json",
        "model_id": "stub-model",
        "input_budget": 2000,
        "min_tokens": 50,
        "winsor_low": 0.01,
        "winsor_high": 0.99,
        "fe_spec": "time_industry",
        "parallelism": 4,
        # the bundled fixture is small: 5 firms, one exposure year held
        # for 12 months, so thin out the FMB controls and accept the
        # shorter factor-regression overlap
        "fmb_controls": ["r_0_1"],
        "portfolio_min_months": 12,
    }
    (directory / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return config
