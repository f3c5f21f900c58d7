"""Stage orchestration: ingest -> chunk -> generate -> measure -> panel ->
regress / vardecomp / rolling / fmb / portfolio.

Each stage writes its artifacts atomically (temp file, then rename) and
records content hashes in a manifest; a stage whose inputs and parameters
are unchanged is skipped entirely, which is what makes reruns free and
deterministic. All artifacts are plain JSONL/CSV so outputs can be
diffed byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .econometrics import (
    annualize_exposure,
    fama_macbeth,
    five_factor_alpha,
    panel_regression,
    quintile_portfolios,
    rolling_regression,
    trim,
    variance_decomposition,
)
from .econometrics.report import result_csv_rows, results_text
from .errors import (
    ConfigError,
    DataError,
    EstimationError,
    MissingColumnError,
)
from .exposure import (
    ExposureRecord,
    TranscriptLength,
    exposure_csv_lines,
    measure_column,
    MEASURE_COLUMNS,
    pearson_matrix,
    term_frequencies,
    within_quarter_demean,
    cosine_similarity,
)
from .gateway import (
    CompletionCache,
    Gateway,
    LiveProvider,
    RiskDocument,
    StubProvider,
    default_prompt_spec,
    MODES,
    RISK_TYPES,
)
from .outcomes import (
    ReturnSeries,
    abnormal_volatility,
    activity_indicators,
    compound_inflation,
    investment_series,
    realized_volatility,
)
from .transcripts import Chunk, chunk_transcript, load_corpus_file, retained_word_count

log = logging.getLogger("riskscope")

STAGES = (
    "ingest",
    "chunk",
    "generate",
    "measure",
    "panel",
    "regress",
    "vardecomp",
    "rolling",
    "fmb",
    "portfolio",
)

_STOPWORDS = frozenset(
    "the a an and or of to in on for with is are was were be been this that "
    "it its as at by from we our us they their".split()
)


# ---------------------------------------------------------------------------
# config


@dataclass
class PipelineConfig:
    corpus: Path
    returns: Path
    market: Path
    fundamentals: Path
    counts: Path
    factors: Path
    output_dir: Path
    benchmarks: Path | None = None
    characteristics: Path | None = None
    inflation: Path | None = None
    provider: str = "stub"
    stub_rules: Path | None = None
    live_endpoint: str | None = None
    model_id: str = "stub-model"
    prompt_overrides: dict = field(default_factory=dict)
    input_budget: int = 2000
    min_tokens: int = 50
    winsor_low: float = 0.01
    winsor_high: float = 0.99
    fe_spec: str = "time_industry"
    parallelism: int = 4
    cache_dir: Path | None = None
    seed: int = 42
    fmb_controls: list[str] | None = None  # None = auto from available data
    portfolio_min_months: int = 24

    _REQUIRED = ("corpus", "returns", "market", "fundamentals", "counts", "factors", "output_dir")
    _OPTIONAL_PATHS = ("benchmarks", "characteristics", "inflation", "stub_rules", "cache_dir")

    @classmethod
    def from_file(cls, path, overrides: list[str] = ()) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            try:
                raw[key] = json.loads(value)
            except json.JSONDecodeError:
                raw[key] = value
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for name in cls._REQUIRED:
            if name not in raw:
                raise ConfigError(f"config missing required key {name!r}")
            kwargs[name] = base_dir / str(raw[name])
        for name in cls._OPTIONAL_PATHS:
            if raw.get(name):
                kwargs[name] = base_dir / str(raw[name])
        for name in (
            "provider",
            "live_endpoint",
            "model_id",
            "prompt_overrides",
            "input_budget",
            "min_tokens",
            "winsor_low",
            "winsor_high",
            "fe_spec",
            "parallelism",
            "seed",
            "fmb_controls",
            "portfolio_min_months",
        ):
            if name in raw and raw[name] is not None:
                kwargs[name] = raw[name]
        return cls(**kwargs)

    def validate(self) -> None:
        for name in ("corpus", "returns", "market", "fundamentals", "counts", "factors"):
            p = getattr(self, name)
            if not Path(p).is_file():
                raise ConfigError(f"{name}: file not found: {p}")
        for name in ("benchmarks", "characteristics", "inflation", "stub_rules"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name}: file not found: {p}")
        if self.provider not in ("stub", "live"):
            raise ConfigError(f"provider must be 'stub' or 'live', got {self.provider!r}")
        if self.provider == "live":
            if not self.live_endpoint:
                raise ConfigError("provider=live requires live_endpoint")
            if not os.environ.get("RISKSCOPE_API_KEY"):
                raise ConfigError("provider=live requires RISKSCOPE_API_KEY in the environment")
        if self.fe_spec not in ("time_industry", "time_x_industry"):
            raise ConfigError(f"fe_spec must be time_industry or time_x_industry, got {self.fe_spec!r}")
        if not 0 <= self.winsor_low < self.winsor_high <= 1:
            raise ConfigError("winsor bounds must satisfy 0 <= low < high <= 1")
        if self.input_budget <= self.min_tokens:
            raise ConfigError("input_budget must exceed min_tokens")

    @property
    def fe(self) -> list:
        if self.fe_spec == "time_x_industry":
            return [("quarter", "industry")]
        return ["quarter", "industry"]

    def params_for(self, stage: str) -> dict:
        common = {"version": __version__, "seed": self.seed}
        per_stage = {
            "ingest": {},
            "chunk": {"input_budget": self.input_budget, "min_tokens": self.min_tokens},
            "generate": {
                "provider": self.provider,
                "live_endpoint": self.live_endpoint,
                "model_id": self.model_id,
                "prompt_overrides": self.prompt_overrides,
                "parallelism": self.parallelism,
            },
            "measure": {},
            "panel": {},
            "regress": {
                "fe_spec": self.fe_spec,
                "winsor": [self.winsor_low, self.winsor_high],
            },
            "vardecomp": {},
            "rolling": {"winsor": [self.winsor_low, self.winsor_high]},
            "fmb": {"controls": self.fmb_controls},
            "portfolio": {"min_months": self.portfolio_min_months},
        }
        common.update(per_stage.get(stage, {}))
        return common


# ---------------------------------------------------------------------------
# artifacts, hashing, manifest


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def frame_to_csv_text(frame: pd.DataFrame, float_format: str = "%.10g") -> str:
    return frame.to_csv(index=False, float_format=float_format, lineterminator="\n")


class Manifest:
    """Per-stage record of input hashes, parameters, and output hashes.

    Output paths are stored relative to the output directory so two runs
    into different directories produce identical manifest bytes.
    """

    def __init__(self, path: Path, base: Path):
        self.path = path
        self.base = base
        if path.is_file():
            self.data = json.loads(path.read_text(encoding="utf-8"))
        else:
            self.data = {"version": __version__, "stages": {}}

    def save(self) -> None:
        atomic_write_text(self.path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def _rel(self, out: Path) -> str:
        return out.relative_to(self.base).as_posix()

    def is_current(self, stage: str, inputs: dict[str, str], params: dict, outputs: list[Path]) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry:
            return False
        if entry.get("inputs") != inputs or entry.get("params") != params:
            return False
        recorded = entry.get("outputs", {})
        for out in outputs:
            rel = self._rel(out)
            if rel not in recorded or not out.is_file() or file_sha256(out) != recorded[rel]:
                return False
        return True

    def record(self, stage: str, inputs: dict[str, str], params: dict, outputs: list[Path]) -> None:
        self.data["stages"][stage] = {
            "inputs": inputs,
            "params": params,
            "outputs": {self._rel(out): file_sha256(out) for out in outputs},
        }
        self.save()


@dataclass
class StageReport:
    stage: str
    executed: bool
    outputs: list[str]


class Pipeline:
    """Resolves artifact paths and runs stages against the manifest."""

    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.tables = self.out / "tables"
        self.manifest = Manifest(self.out / "manifest.json", self.out)
        self.provider_calls = 0

    # artifact paths -------------------------------------------------------
    @property
    def transcripts_path(self) -> Path:
        return self.out / "transcripts.json"

    @property
    def issues_path(self) -> Path:
        return self.out / "ingest_issues.json"

    @property
    def chunks_path(self) -> Path:
        return self.out / "chunks.jsonl"

    @property
    def riskdocs_path(self) -> Path:
        return self.out / "riskdocs.jsonl"

    @property
    def exposures_path(self) -> Path:
        return self.out / "exposures.csv"

    @property
    def panel_path(self) -> Path:
        return self.out / "panel.csv"

    def _input_hashes(self, paths: dict[str, Path | None]) -> dict[str, str]:
        out = {}
        for name, p in sorted(paths.items()):
            if p is None:
                continue
            if not Path(p).is_file():
                raise DataError(f"stage prerequisite missing: {name} ({p})")
            out[name] = file_sha256(Path(p))
        return out

    def run(self, stage: str) -> list[StageReport]:
        if stage == "all":
            return [self._run_one(s) for s in STAGES]
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r} (choose from {', '.join(STAGES)} or all)")
        return [self._run_one(stage)]

    def _run_one(self, stage: str) -> StageReport:
        runner = getattr(self, f"_stage_{stage}")
        inputs, outputs = self._stage_io(stage)
        hashes = self._input_hashes(inputs)
        params = self.config.params_for(stage)
        if self.manifest.is_current(stage, hashes, params, outputs):
            log.info("stage %s: inputs unchanged, skipping", stage)
            return StageReport(stage, executed=False, outputs=[str(o) for o in outputs])
        runner()
        for out in outputs:
            if not out.is_file():
                raise RiskscopeInternalError(f"stage {stage} did not produce {out}")
        self.manifest.record(stage, hashes, params, outputs)
        return StageReport(stage, executed=True, outputs=[str(o) for o in outputs])

    def _stage_io(self, stage: str) -> tuple[dict[str, Path | None], list[Path]]:
        c = self.config
        t = self.tables
        io: dict[str, tuple[dict, list[Path]]] = {
            "ingest": (
                {"corpus": c.corpus},
                [self.transcripts_path, self.issues_path],
            ),
            "chunk": ({"transcripts": self.transcripts_path}, [self.chunks_path]),
            "generate": (
                {"chunks": self.chunks_path, "stub_rules": c.stub_rules},
                [self.riskdocs_path],
            ),
            "measure": (
                {
                    "riskdocs": self.riskdocs_path,
                    "chunks": self.chunks_path,
                    "transcripts": self.transcripts_path,
                    "benchmarks": c.benchmarks,
                },
                [
                    self.exposures_path,
                    t / "correlations.csv",
                    t / "correlations_within_quarter.csv",
                    t / "cosine_similarity.csv",
                    t / "term_frequencies.csv",
                    t / "measure_timeseries.csv",
                ],
            ),
            "panel": (
                {
                    "exposures": self.exposures_path,
                    "transcripts": self.transcripts_path,
                    "returns": c.returns,
                    "market": c.market,
                    "fundamentals": c.fundamentals,
                    "counts": c.counts,
                    "inflation": c.inflation,
                },
                [self.panel_path],
            ),
            "regress": ({"panel": self.panel_path}, [t / "regress.csv", t / "regress.txt"]),
            "vardecomp": ({"panel": self.panel_path}, [t / "vardecomp.csv"]),
            "rolling": ({"panel": self.panel_path}, [t / "rolling.csv"]),
            "fmb": (
                {
                    "exposures": self.exposures_path,
                    "returns": c.returns,
                    "characteristics": c.characteristics,
                },
                [t / "fmb.csv"],
            ),
            "portfolio": (
                {"exposures": self.exposures_path, "returns": c.returns, "factors": c.factors},
                [t / "portfolio.csv"],
            ),
        }
        return io[stage]

    # stage bodies ---------------------------------------------------------

    def _stage_ingest(self) -> None:
        transcripts, issues, skipped = load_corpus_file(self.config.corpus)
        if skipped:
            log.info("ingest: skipped %d non-English record(s)", skipped)
        seen: set[str] = set()
        for t in transcripts:
            if t.call_id in seen:
                raise DataError(f"duplicate call_id {t.call_id!r} in corpus")
            seen.add(t.call_id)
        payload = {
            "skipped_non_english": skipped,
            "calls": [
                {
                    "call_id": t.call_id,
                    "firm_id": t.firm_id,
                    "fiscal_quarter": t.fiscal_quarter,
                    "call_date": t.call_date.isoformat(),
                    "turns": [
                        {
                            "speaker_id": u.speaker_id,
                            "role": u.speaker_role,
                            "section": u.section,
                            "text": u.text,
                        }
                        for u in t.utterances
                    ],
                }
                for t in sorted(transcripts, key=lambda t: t.call_id)
            ],
        }
        atomic_write_text(self.transcripts_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        atomic_write_text(
            self.issues_path,
            json.dumps(
                [{"line": i.line, "message": i.message} for i in issues], indent=1, sort_keys=True
            )
            + "\n",
        )

    def _load_transcripts(self):
        from .transcripts import parse_transcript

        payload = json.loads(self.transcripts_path.read_text(encoding="utf-8"))
        return [parse_transcript(record) for record in payload["calls"]]

    def _stage_chunk(self) -> None:
        transcripts = self._load_transcripts()
        lines = []
        for t in transcripts:
            for chunk in chunk_transcript(t, self.config.input_budget, self.config.min_tokens):
                lines.append(json.dumps(chunk.to_record(), sort_keys=True))
        atomic_write_text(self.chunks_path, "\n".join(lines) + ("\n" if lines else ""))

    def _load_chunks(self) -> dict[str, list[Chunk]]:
        by_call: dict[str, list[Chunk]] = {}
        with open(self.chunks_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                r = json.loads(line)
                by_call.setdefault(r["source_call_id"], []).append(
                    Chunk(
                        chunk_index=r["chunk_index"],
                        source_call_id=r["source_call_id"],
                        text=r["text"],
                        token_count=r["token_count"],
                        origin=r["origin"],
                    )
                )
        for chunks in by_call.values():
            chunks.sort(key=lambda c: c.chunk_index)
        return by_call

    def build_gateway(self) -> Gateway:
        c = self.config
        if c.provider == "stub":
            raw_rules = []
            if c.stub_rules is not None:
                raw_rules = json.loads(Path(c.stub_rules).read_text(encoding="utf-8"))
            provider = StubProvider.from_config(raw_rules)
        else:
            provider = LiveProvider(endpoint=c.live_endpoint)
        cache_dir = c.cache_dir if c.cache_dir is not None else self.out / "cache"
        return Gateway(
            provider=provider,
            cache=CompletionCache(cache_dir),
            model_id=c.model_id,
            parallelism=c.parallelism,
        )

    def _stage_generate(self) -> None:
        by_call = self._load_chunks()
        gateway = self.build_gateway()
        lines = []
        for call_id in sorted(by_call):
            for risk_type in RISK_TYPES:
                for mode in MODES:
                    spec = default_prompt_spec(risk_type, mode, self.config.prompt_overrides)
                    doc = gateway.generate_risk_document(by_call[call_id], spec)
                    lines.append(
                        json.dumps(
                            {
                                "call_id": call_id,
                                "risk_type": risk_type,
                                "mode": mode,
                                "text": doc.text,
                                "chunk_outputs": list(doc.chunk_outputs),
                            },
                            sort_keys=True,
                        )
                    )
        self.provider_calls = getattr(gateway.provider, "call_count", 0)
        log.info("generate: %d provider call(s)", self.provider_calls)
        atomic_write_text(self.riskdocs_path, "\n".join(lines) + ("\n" if lines else ""))

    def _load_riskdocs(self) -> dict[tuple[str, str, str], RiskDocument]:
        docs = {}
        with open(self.riskdocs_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                r = json.loads(line)
                docs[(r["call_id"], r["risk_type"], r["mode"])] = RiskDocument(
                    call_id=r["call_id"],
                    risk_type=r["risk_type"],
                    mode=r["mode"],
                    text=r["text"],
                    chunk_outputs=tuple(r["chunk_outputs"]),
                )
        return docs

    def _call_index(self) -> pd.DataFrame:
        payload = json.loads(self.transcripts_path.read_text(encoding="utf-8"))
        rows = [
            {
                "call_id": c["call_id"],
                "firm_id": c["firm_id"],
                "fiscal_quarter": c["fiscal_quarter"],
                "call_date": c["call_date"],
            }
            for c in payload["calls"]
        ]
        return pd.DataFrame(rows)

    def _stage_measure(self) -> None:
        from .exposure import compute_exposure

        index = self._call_index()
        by_call = self._load_chunks()
        docs = self._load_riskdocs()

        # one call per firm-quarter; keep the latest call when duplicated
        index = index.sort_values(["firm_id", "fiscal_quarter", "call_date", "call_id"])
        dups = index.duplicated(["firm_id", "fiscal_quarter"], keep="last")
        if dups.any():
            log.info("measure: dropping %d duplicate firm-quarter call(s)", int(dups.sum()))
        index = index[~dups]

        records = []
        for row in index.itertuples(index=False):
            chunks = by_call.get(row.call_id, [])
            record = ExposureRecord(firm_id=row.firm_id, fiscal_quarter=row.fiscal_quarter)
            if chunks:
                length = TranscriptLength(row.call_id, retained_word_count(chunks))
                for risk_type in RISK_TYPES:
                    for mode in MODES:
                        doc = docs.get((row.call_id, risk_type, mode))
                        if doc is None:
                            raise DataError(
                                f"risk document missing for {row.call_id}/{risk_type}/{mode}"
                            )
                        setattr(
                            record,
                            measure_column(risk_type, mode),
                            compute_exposure(doc, length),
                        )
            records.append(record)

        if self.config.benchmarks is not None:
            bench = pd.read_csv(self.config.benchmarks, dtype={"firm_id": str, "fiscal_quarter": str})
            bench = bench.drop_duplicates(["firm_id", "fiscal_quarter"], keep="last")
            lookup = bench.set_index(["firm_id", "fiscal_quarter"])
            for record in records:
                key = (record.firm_id, record.fiscal_quarter)
                if key in lookup.index:
                    row = lookup.loc[key]
                    if "PRiskBigram" in lookup.columns:
                        record.PRiskBigram = float(row["PRiskBigram"])
                    if "CRiskBigram" in lookup.columns:
                        record.CRiskBigram = float(row["CRiskBigram"])

        atomic_write_text(self.exposures_path, "\n".join(exposure_csv_lines(records)) + "\n")
        self._write_descriptives(records, docs, index)

    def _write_descriptives(self, records, docs, index) -> None:
        cols = list(MEASURE_COLUMNS)
        have_bench = all(r.PRiskBigram is not None and r.CRiskBigram is not None for r in records)
        if have_bench and records:
            cols += ["PRiskBigram", "CRiskBigram"]
        if len(records) >= 2:
            corr = pearson_matrix(records, cols)
            corr_frame = pd.DataFrame(corr, index=cols, columns=cols).reset_index(names="measure")
        else:
            log.info("measure: <2 records, correlation tables left empty")
            corr_frame = pd.DataFrame(columns=["measure", *cols])
        atomic_write_text(self.tables / "correlations.csv", frame_to_csv_text(corr_frame))

        if len(records) >= 2:
            demeaned = {c: within_quarter_demean(records, c) for c in cols}
            demeaned_records = [
                {**{c: demeaned[c][i] for c in cols}, "fiscal_quarter": r.fiscal_quarter}
                for i, r in enumerate(records)
            ]
            corr_within = pearson_matrix(demeaned_records, cols)
            within_frame = pd.DataFrame(corr_within, index=cols, columns=cols).reset_index(names="measure")
        else:
            within_frame = pd.DataFrame(columns=["measure", *cols])
        atomic_write_text(
            self.tables / "correlations_within_quarter.csv", frame_to_csv_text(within_frame)
        )

        # pairwise similarity of political vs climate assessments per call
        sims = []
        for row in index.itertuples(index=False):
            pol = docs.get((row.call_id, "political", "assessment"))
            cli = docs.get((row.call_id, "climate", "assessment"))
            if pol is None or cli is None or not pol.text.strip() or not cli.text.strip():
                continue
            sims.append({"call_id": row.call_id, "cosine": cosine_similarity(pol.text, cli.text)})
        sim_frame = pd.DataFrame(sims, columns=["call_id", "cosine"])
        if len(sim_frame):
            mean_row = pd.DataFrame([{"call_id": "MEAN", "cosine": sim_frame["cosine"].mean()}])
            sim_frame = pd.concat([sim_frame, mean_row], ignore_index=True)
        atomic_write_text(self.tables / "cosine_similarity.csv", frame_to_csv_text(sim_frame))

        term_rows = []
        for risk_type in RISK_TYPES:
            risk_docs = [d for (cid, rt, mode), d in sorted(docs.items()) if rt == risk_type and mode == "assessment"]
            for term, count in term_frequencies(risk_docs, _STOPWORDS)[:100]:
                term_rows.append({"risk_type": risk_type, "term": term, "count": count})
        atomic_write_text(
            self.tables / "term_frequencies.csv",
            frame_to_csv_text(pd.DataFrame(term_rows, columns=["risk_type", "term", "count"])),
        )

        frame = pd.DataFrame([r.__dict__ for r in records])
        ts = frame.groupby("fiscal_quarter", sort=True)[list(MEASURE_COLUMNS)].mean().reset_index()
        atomic_write_text(self.tables / "measure_timeseries.csv", frame_to_csv_text(ts))

    # panel ----------------------------------------------------------------

    def _quarterly_inflation(self) -> dict[str, float]:
        if self.config.inflation is None:
            return {}
        monthly = pd.read_csv(self.config.inflation)
        for col in ("month", "ppi_change"):
            if col not in monthly.columns:
                raise MissingColumnError(col, "inflation file")
        monthly["quarter"] = pd.PeriodIndex(monthly["month"], freq="M").asfreq("Q")
        out = {}
        for quarter, group in monthly.groupby("quarter"):
            out[str(quarter)] = compound_inflation(group["ppi_change"].astype(float).tolist())
        return out

    def _stage_panel(self) -> None:
        exposures = pd.read_csv(self.exposures_path, dtype={"firm_id": str, "fiscal_quarter": str})
        exposures = exposures.rename(columns={"fiscal_quarter": "quarter"})
        calls = self._call_index().rename(columns={"fiscal_quarter": "quarter"})

        returns = pd.read_csv(self.config.returns, dtype={"firm_id": str})
        market = pd.read_csv(self.config.market)
        for col in ("firm_id", "date", "ret"):
            if col not in returns.columns:
                raise MissingColumnError(col, "returns file")
        for col in ("date", "mkt_ret"):
            if col not in market.columns:
                raise MissingColumnError(col, "market file")
        market_series = pd.Series(
            market["mkt_ret"].to_numpy(dtype=float),
            index=pd.DatetimeIndex(pd.to_datetime(market["date"])),
        ).sort_index()

        fundamentals = pd.read_csv(self.config.fundamentals, dtype={"firm_id": str, "quarter": str})
        for col in ("firm_id", "quarter"):
            if col not in fundamentals.columns:
                raise MissingColumnError(col, "fundamentals file")
        fundamentals = fundamentals.drop_duplicates(["firm_id", "quarter"], keep="last")
        counts = pd.read_csv(self.config.counts, dtype={"firm_id": str, "quarter": str})
        counts = counts.drop_duplicates(["firm_id", "quarter"], keep="last")
        inflation = self._quarterly_inflation()

        panel_quarters = sorted(exposures["quarter"].unique())
        lead_quarters = sorted(
            {str(pd.Period(q, freq="Q") + 1) for q in panel_quarters} | set(panel_quarters)
        )
        firms = sorted(exposures["firm_id"].unique())
        universe = pd.DataFrame(
            [(f, q) for f in firms for q in lead_quarters], columns=["firm_id", "quarter"]
        )

        # abnormal volatility, anchored at the call date; when a firm-quarter
        # has several calls keep the latest one, matching the measure stage
        calls = calls.sort_values(["firm_id", "quarter", "call_date", "call_id"])
        calls = calls.drop_duplicates(["firm_id", "quarter"], keep="last")
        firm_returns = {
            firm: pd.Series(
                group["ret"].to_numpy(dtype=float),
                index=pd.DatetimeIndex(pd.to_datetime(group["date"])),
            ).sort_index()
            for firm, group in returns.groupby("firm_id")
        }
        abn_rows = []
        n_insufficient = 0
        for row in calls.itertuples(index=False):
            series = firm_returns.get(row.firm_id)
            value = np.nan
            if series is not None:
                aligned = ReturnSeries.align(row.firm_id, series, market_series)
                try:
                    value = abnormal_volatility(aligned, pd.Timestamp(row.call_date).date())
                except EstimationError:
                    n_insufficient += 1
            abn_rows.append({"firm_id": row.firm_id, "quarter": row.quarter, "abnormal_vol": value})
        if n_insufficient:
            log.info("panel: %d call(s) lacked data for abnormal volatility", n_insufficient)
        abnormal = pd.DataFrame(abn_rows)

        # realized volatility per firm-quarter
        real_rows = []
        for firm in firms:
            series = firm_returns.get(firm)
            for q in lead_quarters:
                value = np.nan
                if series is not None:
                    q_end = pd.Period(q, freq="Q").end_time.date()
                    try:
                        value = realized_volatility(series, q_end)
                    except EstimationError:
                        value = np.nan
                real_rows.append({"firm_id": firm, "quarter": q, "realized_vol": value})
        realized = pd.DataFrame(real_rows)

        # fundamentals-based columns
        fundamentals = fundamentals.sort_values(["firm_id", "quarter"])
        fund_cols = universe.merge(fundamentals, on=["firm_id", "quarter"], how="left")
        if "iv_90d_atm" in fund_cols.columns:
            fund_cols = fund_cols.rename(columns={"iv_90d_atm": "implied_vol"})
        else:
            fund_cols["implied_vol"] = np.nan
        if "total_assets" in fund_cols.columns:
            with np.errstate(divide="ignore", invalid="ignore"):
                fund_cols["log_assets"] = np.where(
                    fund_cols["total_assets"].astype(float) > 0,
                    np.log(fund_cols["total_assets"].astype(float)),
                    np.nan,
                )
        else:
            fund_cols["log_assets"] = np.nan

        # investment recursion per firm over its fundamentals quarters
        inv_rows = []
        if {"ppe_initial", "capex"}.issubset(fundamentals.columns):
            for firm, group in fundamentals.groupby("firm_id"):
                group = group.sort_values("quarter")
                initial = pd.to_numeric(group["ppe_initial"], errors="coerce").iloc[0]
                if not np.isfinite(initial) or initial <= 0:
                    log.info("panel: firm %s has no starting PP&E, skipping investment", firm)
                    continue
                capex = pd.to_numeric(group["capex"], errors="coerce").fillna(0.0).to_numpy()
                rho = np.array([inflation.get(q, 0.0) for q in group["quarter"]])
                ratios = investment_series(float(initial), list(zip(capex, rho)))
                for q, ratio in zip(group["quarter"], ratios):
                    inv_rows.append({"firm_id": firm, "quarter": q, "investment": ratio})
        investment = pd.DataFrame(inv_rows, columns=["firm_id", "quarter", "investment"])

        indicators = activity_indicators(counts, universe)

        panel = universe.merge(exposures, on=["firm_id", "quarter"], how="left")
        industry = None
        if "industry" in fund_cols.columns:
            industry = (
                fund_cols.dropna(subset=["industry"])
                .groupby("firm_id")["industry"]
                .first()
                .astype(str)
            )
        panel = panel.merge(
            fund_cols[["firm_id", "quarter", "implied_vol", "log_assets"]],
            on=["firm_id", "quarter"],
            how="left",
        )
        if industry is not None:
            panel["industry"] = panel["firm_id"].map(industry)
        else:
            panel["industry"] = "00"
        panel = panel.merge(abnormal, on=["firm_id", "quarter"], how="left")
        panel = panel.merge(realized, on=["firm_id", "quarter"], how="left")
        panel = panel.merge(investment, on=["firm_id", "quarter"], how="left")
        panel = panel.merge(indicators, on=["firm_id", "quarter"], how="left")

        # t+1 leads
        lead_source = panel[
            [
                "firm_id",
                "quarter",
                "implied_vol",
                "abnormal_vol",
                "realized_vol",
                "lobby_any",
                "green_patent_any",
                "ai_patent_any",
            ]
        ].copy()
        lead_source["quarter"] = [str(pd.Period(q, freq="Q") - 1) for q in lead_source["quarter"]]
        lead_source = lead_source.rename(
            columns={
                "implied_vol": "implied_vol_next",
                "abnormal_vol": "abnormal_vol_next",
                "realized_vol": "realized_vol_next",
                "lobby_any": "lobby_any_next",
                "green_patent_any": "green_patent_any_next",
                "ai_patent_any": "ai_patent_any_next",
            }
        )
        panel = panel.merge(lead_source, on=["firm_id", "quarter"], how="left")
        panel = panel[panel["quarter"].isin(panel_quarters)].reset_index(drop=True)
        panel = panel.sort_values(["firm_id", "quarter"]).reset_index(drop=True)
        atomic_write_text(self.panel_path, frame_to_csv_text(panel))

    def _load_panel(self) -> pd.DataFrame:
        return pd.read_csv(
            self.panel_path, dtype={"firm_id": str, "quarter": str, "industry": str}
        )

    # estimation stages ------------------------------------------------------

    _RISK_MEASURES = {
        "political": ("PRiskSum", "PRiskAssess", "PRiskBigram"),
        "climate": ("CRiskSum", "CRiskAssess", "CRiskBigram"),
        "ai": ("AIRiskSum", "AIRiskAssess", None),
    }

    def _stage_regress(self) -> None:
        panel = self._load_panel()
        bounds = (self.config.winsor_low, self.config.winsor_high)
        fe = self.config.fe
        rows: list[dict] = []
        blocks: list[tuple[str, object]] = []

        def run(table: str, y: str, regressors: list[str], winsorize_outcome: bool) -> None:
            missing = [c for c in regressors + [y] if c not in panel.columns]
            if missing:
                log.info("regress: skipping %s (missing %s)", table, ", ".join(missing))
                return
            controls = ["log_assets"] if "log_assets" in panel.columns else []
            wins = ([y] if winsorize_outcome else []) + regressors + controls
            try:
                res = panel_regression(
                    panel,
                    y,
                    regressors,
                    controls=controls,
                    fe=fe,
                    cluster="firm_id",
                    winsorize_cols=wins,
                    winsor_bounds=bounds,
                )
            except EstimationError as exc:
                log.info("regress: %s failed (%s)", table, exc)
                return
            rows.extend(result_csv_rows(table, res))
            blocks.append((table, res))

        for risk, (sum_col, assess_col, bigram_col) in self._RISK_MEASURES.items():
            have_bigram = bigram_col is not None and bigram_col in panel.columns
            for outcome, label in (("implied_vol_next", "implied"), ("abnormal_vol_next", "abnormal")):
                specs = [("sum", [sum_col]), ("assess", [assess_col])]
                if have_bigram:
                    specs += [
                        ("sum_bigram", [sum_col, bigram_col]),
                        ("assess_bigram", [assess_col, bigram_col]),
                        ("joint", [sum_col, assess_col, bigram_col]),
                    ]
                else:
                    specs.append(("joint", [sum_col, assess_col]))
                for spec_name, regressors in specs:
                    run(f"vol_{label}_{risk}_{spec_name}", outcome, regressors, True)
            # investment (contemporaneous) and risk-specific response (lead)
            run(f"investment_{risk}_sum", "investment", [sum_col], True)
            run(f"investment_{risk}_assess", "investment", [assess_col], True)
        for risk, response in (
            ("political", "lobby_any_next"),
            ("climate", "green_patent_any_next"),
            ("ai", "ai_patent_any_next"),
        ):
            sum_col, assess_col, bigram_col = self._RISK_MEASURES[risk]
            run(f"response_{risk}_sum", response, [sum_col], False)
            run(f"response_{risk}_assess", response, [assess_col], False)
            if bigram_col is not None and bigram_col in panel.columns:
                run(f"response_{risk}_joint", response, [sum_col, assess_col, bigram_col], False)

        if not rows:
            raise EstimationError("regress: no table could be estimated")
        frame = pd.DataFrame(rows)
        atomic_write_text(self.tables / "regress.csv", frame_to_csv_text(frame))
        atomic_write_text(
            self.tables / "regress.txt",
            results_text("Volatility / investment / response regressions", blocks),
        )

    def _stage_vardecomp(self) -> None:
        panel = self._load_panel()
        rows = []
        measures = [c for c in MEASURE_COLUMNS if c in panel.columns]
        measures += [c for c in ("PRiskBigram", "CRiskBigram") if c in panel.columns]
        for measure in measures:
            try:
                d = variance_decomposition(panel, measure)
            except EstimationError as exc:
                log.info("vardecomp: %s failed (%s)", measure, exc)
                continue
            for component, share in (
                ("Time FE", d.time_fe),
                ("Industry FE", d.industry_fe),
                ("Time x Industry FE", d.time_industry_fe),
                ("Implied Firm Level Variation", d.firm_level),
                ("Sum", d.stage1_sum),
                ("Firm FE", d.firm_fe),
                ("Remaining Variation", d.remaining),
                ("Sum (firm stage)", d.stage2_sum),
            ):
                rows.append(
                    {"measure": measure, "component": component, "share_pct": f"{share:.2f}"}
                )
        if not rows:
            raise EstimationError("vardecomp: no measure could be decomposed")
        atomic_write_text(self.tables / "vardecomp.csv", frame_to_csv_text(pd.DataFrame(rows)))

    def _stage_rolling(self) -> None:
        panel = self._load_panel()
        bounds = (self.config.winsor_low, self.config.winsor_high)
        risk_cols = ["PRiskAssess", "CRiskAssess", "AIRiskAssess"]
        controls = ["log_assets"] if "log_assets" in panel.columns else []
        frames = []
        for label, joint in (("A", False), ("B", True)):
            table = rolling_regression(
                panel,
                "implied_vol",
                risk_cols,
                controls=controls,
                window=4,
                fe=["quarter", "industry"],
                joint=joint,
                winsor_bounds=bounds,
            )
            table.insert(0, "panel", label)
            frames.append(table)
        atomic_write_text(
            self.tables / "rolling.csv", frame_to_csv_text(pd.concat(frames, ignore_index=True))
        )

    # fmb / portfolio ---------------------------------------------------------

    def _monthly_returns(self) -> pd.DataFrame:
        returns = pd.read_csv(self.config.returns, dtype={"firm_id": str})
        returns["month"] = pd.PeriodIndex(pd.to_datetime(returns["date"]), freq="M")
        grouped = (
            returns.groupby(["firm_id", "month"])["ret"]
            .apply(lambda r: float(np.prod(1.0 + r.to_numpy(dtype=float)) - 1.0))
            .rename("ret")
            .reset_index()
        )
        return grouped

    def _annual_exposures(self) -> pd.DataFrame:
        exposures = pd.read_csv(self.exposures_path, dtype={"firm_id": str, "fiscal_quarter": str})
        exposures["year"] = exposures["fiscal_quarter"].str.slice(0, 4).astype(int)
        rows = []
        for (firm, year), group in exposures.groupby(["firm_id", "year"]):
            row = {"firm_id": firm, "year": year}
            for col in ("PRiskAssess", "CRiskAssess", "AIRiskAssess"):
                row[col] = annualize_exposure(group[col].tolist())
            rows.append(row)
        return pd.DataFrame(rows)

    def _stage_fmb(self) -> None:
        monthly = self._monthly_returns()
        annual = self._annual_exposures()

        # momentum controls from the monthly return history
        monthly = monthly.sort_values(["firm_id", "month"]).reset_index(drop=True)
        monthly["r_0_1"] = monthly.groupby("firm_id")["ret"].shift(1)
        log1p = np.log1p(monthly["ret"].to_numpy(dtype=float))
        monthly["_log1p"] = log1p
        cum = monthly.groupby("firm_id")["_log1p"].transform(
            lambda s: s.rolling(11, min_periods=11).sum()
        )
        monthly["r_2_12"] = np.expm1(cum.groupby(monthly["firm_id"]).shift(2))
        monthly = monthly.drop(columns="_log1p")

        available = ["r_0_1", "r_2_12"]
        if self.config.characteristics is not None:
            chars = pd.read_csv(self.config.characteristics, dtype={"firm_id": str})
            chars["month"] = pd.PeriodIndex(chars["month"], freq="M")
            with np.errstate(divide="ignore", invalid="ignore"):
                if "me" in chars.columns:
                    chars["log_me"] = np.where(chars["me"] > 0, np.log(chars["me"]), np.nan)
                if "be_me" in chars.columns:
                    chars["log_be_me"] = np.where(chars["be_me"] > 0, np.log(chars["be_me"]), np.nan)
            keep = [c for c in ("log_me", "log_be_me", "profitability", "investment") if c in chars.columns]
            monthly = monthly.merge(chars[["firm_id", "month", *keep]], on=["firm_id", "month"], how="left")
            available += keep
        if self.config.fmb_controls is None:
            controls = available
        else:
            unknown = [c for c in self.config.fmb_controls if c not in available]
            if unknown:
                raise ConfigError(f"fmb_controls not available: {unknown} (have {available})")
            controls = list(self.config.fmb_controls)

        # map month -> exposure year (formed March 31 of year+1)
        months = monthly["month"]
        monthly["exposure_year"] = np.where(
            months.dt.month >= 4, months.dt.year - 1, months.dt.year - 2
        )

        rows = []
        for measure in ("PRiskAssess", "CRiskAssess", "AIRiskAssess"):
            merged = monthly.merge(
                annual[["firm_id", "year", measure]].rename(columns={"year": "exposure_year"}),
                on=["firm_id", "exposure_year"],
                how="inner",
            )
            merged = merged.dropna(subset=[measure])
            merged = merged[merged[measure] > 0]
            if merged.empty:
                log.info("fmb: no usable rows for %s", measure)
                continue
            merged["log_exposure"] = np.log(merged[measure].to_numpy(dtype=float))
            regressors = ["log_exposure", *controls]
            for col in regressors:
                merged[col] = trim(merged[col].to_numpy(dtype=float))
            try:
                res = fama_macbeth(merged, "ret", regressors, period_col="month")
            except EstimationError as exc:
                log.info("fmb: %s failed (%s)", measure, exc)
                continue
            for i, name in enumerate(res.names):
                rows.append(
                    {
                        "sort_measure": measure,
                        "regressor": name,
                        "mean_coef": format(float(res.mean_coef[i]), ".10g"),
                        "nw_se": format(float(res.se[i]), ".10g"),
                        "nw_t": format(float(res.t[i]), ".10g"),
                        "n_months": res.n_periods,
                        "n_skipped": res.n_skipped,
                        "avg_adj_r2": format(res.avg_adj_r2, ".10g"),
                    }
                )
        if not rows:
            raise EstimationError("fmb: no measure could be estimated")
        atomic_write_text(self.tables / "fmb.csv", frame_to_csv_text(pd.DataFrame(rows)))

    def _stage_portfolio(self) -> None:
        monthly = self._monthly_returns()
        monthly_pct = monthly.copy()
        monthly_pct["ret"] = monthly_pct["ret"] * 100.0  # factor file is in percent
        annual = self._annual_exposures()
        factors = pd.read_csv(self.config.factors)
        if "date" not in factors.columns:
            raise MissingColumnError("date", "factor file")
        factors = factors.set_index(pd.PeriodIndex(factors["date"], freq="M")).drop(columns="date")

        rows = []
        for measure in ("PRiskAssess", "CRiskAssess", "AIRiskAssess"):
            frame = annual[["firm_id", "year", measure]].rename(columns={measure: "exposure"})
            try:
                result = quintile_portfolios(frame.dropna(), monthly_pct)
            except EstimationError as exc:
                log.info("portfolio: %s failed (%s)", measure, exc)
                continue
            for column in result.monthly.columns:
                series = result.monthly[column].dropna()
                try:
                    alpha = five_factor_alpha(
                        series, factors, min_overlap=self.config.portfolio_min_months
                    )
                except EstimationError as exc:
                    log.info("portfolio: %s/%s alpha failed (%s)", measure, column, exc)
                    continue
                rows.append(
                    {
                        "sort_measure": measure,
                        "portfolio": column,
                        "alpha_pct_monthly": format(alpha.alpha, ".10g"),
                        "nw_t": format(alpha.t, ".10g"),
                        "alpha_pct_annualized": format(alpha.alpha * 12.0, ".10g"),
                        "n_months": alpha.n_months,
                    }
                )
        if not rows:
            raise EstimationError("portfolio: no sort could be estimated")
        atomic_write_text(self.tables / "portfolio.csv", frame_to_csv_text(pd.DataFrame(rows)))


class RiskscopeInternalError(RuntimeError):
    pass
