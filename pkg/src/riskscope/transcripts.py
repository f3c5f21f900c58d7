"""Earnings-call transcript parsing and token-budgeted chunking.

A corpus is a JSONL file with one call per line:

    {"call_id": ..., "firm_id": ..., "fiscal_quarter": "2020Q3",
     "call_date": "2020-08-04", "language": "en",
     "turns": [{"speaker_id": ..., "role": "executive",
                "section": "presentation", "text": ...}, ...]}

Chunking keeps one executive's contiguous presentation speech together,
keeps an analyst question together with all consecutive answers to it,
drops operator turns and sub-minimum chunks, and splits oversized units
at sentence boundaries.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Iterator

from .errors import TranscriptParseError

SPEAKER_ROLES = ("executive", "analyst", "operator")
SECTIONS = ("presentation", "qa")

DEFAULT_INPUT_BUDGET = 2000
DEFAULT_MIN_TOKENS = 50

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")

# Boundary after ./?/! when followed by whitespace and an uppercase letter.
_SENTENCE_RE = re.compile(r"(?<=[.?!])\s+(?=[A-Z])")


def count_tokens(text: str) -> int:
    """Token estimate for budgeting: whitespace word count x 4/3, rounded up.

    Counts are always computed on atomic pieces (utterances, sentences)
    and summed, never recomputed on joined text, so transcript-level
    accounting is additive by construction.
    """
    words = len(text.split())
    return -(-4 * words // 3)


def word_count(text: str) -> int:
    """Number of maximal whitespace-delimited substrings."""
    return len(text.split())


def split_sentences(text: str) -> list[str]:
    """Split on ./?/! followed by whitespace and an uppercase letter."""
    return [s for s in (p.strip() for p in _SENTENCE_RE.split(text)) if s]


@dataclass(frozen=True)
class Utterance:
    speaker_id: str
    speaker_role: str  # executive | analyst | operator
    section: str  # presentation | qa
    text: str
    token_count: int

    @classmethod
    def build(cls, speaker_id: str, speaker_role: str, section: str, text: str) -> "Utterance":
        return cls(speaker_id, speaker_role, section, text, count_tokens(text))


@dataclass(frozen=True)
class Transcript:
    call_id: str
    firm_id: str
    fiscal_quarter: str  # "YYYYQn"
    call_date: date
    utterances: tuple[Utterance, ...]
    language: str = "en"


@dataclass(frozen=True)
class Chunk:
    chunk_index: int
    source_call_id: str
    text: str
    token_count: int
    origin: str  # presentation | qa | qa_group | overflow_split

    def to_record(self) -> dict:
        return {
            "source_call_id": self.source_call_id,
            "chunk_index": self.chunk_index,
            "origin": self.origin,
            "token_count": self.token_count,
            "text": self.text,
        }


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str


def _require(record: dict, field: str, line: int | None = None):
    if field not in record or record[field] in (None, ""):
        raise TranscriptParseError(f"missing field {field}", field=field, line=line)
    return record[field]


def parse_transcript(record: dict, line: int | None = None) -> Transcript:
    """Validate one JSONL record and return a structured call.

    Operator turns are retained here; they are dropped at chunking time.
    Raises :class:`TranscriptParseError` naming the offending field.
    """
    call_id = str(_require(record, "call_id", line))
    firm_id = str(_require(record, "firm_id", line))

    quarter = str(_require(record, "fiscal_quarter", line))
    if not _QUARTER_RE.match(quarter):
        raise TranscriptParseError(
            f"malformed fiscal_quarter {quarter!r} (want YYYYQn)", field="fiscal_quarter", line=line
        )

    raw_date = str(_require(record, "call_date", line))
    try:
        call_date = date.fromisoformat(raw_date)
    except ValueError:
        raise TranscriptParseError(
            f"malformed call_date {raw_date!r} (want YYYY-MM-DD)", field="call_date", line=line
        ) from None

    turns = _require(record, "turns", line)
    if not isinstance(turns, list):
        raise TranscriptParseError("turns must be a list", field="turns", line=line)

    utterances = []
    seen_qa = False
    for i, turn in enumerate(turns):
        if not isinstance(turn, dict):
            raise TranscriptParseError(f"turn {i} is not an object", field="turns", line=line)
        speaker = str(_require(turn, "speaker_id", line))
        role = turn.get("role")
        if role not in SPEAKER_ROLES:
            raise TranscriptParseError(
                f"turn {i}: unknown role {role!r}", field="role", line=line
            )
        section = turn.get("section")
        if section not in SECTIONS:
            raise TranscriptParseError(
                f"turn {i}: unknown section {section!r}", field="section", line=line
            )
        if section == "qa":
            seen_qa = True
        elif seen_qa:
            raise TranscriptParseError(
                f"turn {i}: presentation turn after qa section", field="section", line=line
            )
        text = turn.get("text")
        if not isinstance(text, str) or not text.strip():
            raise TranscriptParseError(f"turn {i}: empty text", field="text", line=line)
        utterances.append(Utterance.build(speaker, role, section, text.strip()))

    return Transcript(
        call_id=call_id,
        firm_id=firm_id,
        fiscal_quarter=quarter,
        call_date=call_date,
        utterances=tuple(utterances),
        language=str(record.get("language", "en")),
    )


def load_corpus(lines: Iterable[str]) -> tuple[list[Transcript], list[ParseIssue], int]:
    """Parse a JSONL corpus.

    Returns (transcripts, issues, skipped_non_english). Records that fail
    to parse are reported with their 1-based line number instead of
    aborting the run; records with a language field other than "en" are
    skipped and counted.
    """
    transcripts: list[Transcript] = []
    issues: list[ParseIssue] = []
    skipped_language = 0
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(ParseIssue(line_no, f"invalid JSON: {exc.msg}"))
            continue
        if record.get("language", "en") != "en":
            skipped_language += 1
            continue
        try:
            transcripts.append(parse_transcript(record, line=line_no))
        except TranscriptParseError as exc:
            issues.append(ParseIssue(line_no, str(exc)))
    return transcripts, issues, skipped_language


def load_corpus_file(path) -> tuple[list[Transcript], list[ParseIssue], int]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_corpus(fh)


# ---------------------------------------------------------------------------
# chunking


@dataclass
class _Unit:
    """A never-split-unless-oversized block: one presentation speech or
    one analyst question with its consecutive answers."""

    origin: str
    texts: list[str]
    token_count: int

    @property
    def text(self) -> str:
        return " ".join(self.texts)


def _presentation_units(utterances: list[Utterance]) -> list[_Unit]:
    """Group consecutive utterances by the same speaker into one speech."""
    speeches: list[_Unit] = []
    last_speaker = None
    for u in utterances:
        if speeches and u.speaker_id == last_speaker:
            speeches[-1].texts.append(u.text)
            speeches[-1].token_count += u.token_count
        else:
            speeches.append(_Unit("presentation", [u.text], u.token_count))
        last_speaker = u.speaker_id
    return speeches


def _qa_units(utterances: list[Utterance]) -> list[_Unit]:
    """One unit per analyst question turn, consolidating all consecutive
    answers that follow it. Multi-turn units are tagged qa_group."""
    units: list[_Unit] = []
    for u in utterances:
        if u.speaker_role == "analyst" or not units:
            units.append(_Unit("qa", [u.text], u.token_count))
        else:
            units[-1].texts.append(u.text)
            units[-1].token_count += u.token_count
            units[-1].origin = "qa_group"
    return units


def _split_long_sentence(sentence: str, budget: int) -> list[str]:
    # last resort: word-boundary split so every piece fits the budget
    max_words = budget * 3 // 4
    words = sentence.split()
    return [" ".join(words[i : i + max_words]) for i in range(0, len(words), max_words)]


def _split_oversized(unit: _Unit, budget: int) -> list[tuple[str, int]]:
    """Greedy sentence-boundary split of an oversized unit into pieces
    within the budget. Returns (text, token_count) pairs."""
    sentences: list[str] = []
    for text in unit.texts:
        sentences.extend(split_sentences(text))
    pieces: list[tuple[str, int]] = []
    cur: list[str] = []
    cur_tokens = 0
    for sentence in sentences:
        n = count_tokens(sentence)
        if n > budget:
            if cur:
                pieces.append((" ".join(cur), cur_tokens))
                cur, cur_tokens = [], 0
            for part in _split_long_sentence(sentence, budget):
                pieces.append((part, count_tokens(part)))
            continue
        if cur and cur_tokens + n > budget:
            pieces.append((" ".join(cur), cur_tokens))
            cur, cur_tokens = [], 0
        cur.append(sentence)
        cur_tokens += n
    if cur:
        pieces.append((" ".join(cur), cur_tokens))
    return pieces


def chunk_transcript(
    transcript: Transcript,
    input_budget: int = DEFAULT_INPUT_BUDGET,
    min_tokens: int = DEFAULT_MIN_TOKENS,
) -> list[Chunk]:
    """Split one call into submission-ready chunks.

    Operator turns are excluded. Presentation speeches are packed greedily
    without splitting any one speech; each Q&A question-plus-answers unit
    becomes its own chunk. Units that alone exceed the budget are split at
    sentence boundaries into ``overflow_split`` chunks. Chunks under
    ``min_tokens`` are dropped, and survivors are reindexed from 0 in
    source order.
    """
    kept = [u for u in transcript.utterances if u.speaker_role != "operator"]
    pres = [u for u in kept if u.section == "presentation"]
    qa = [u for u in kept if u.section == "qa"]

    raw: list[tuple[str, str, int]] = []  # (text, origin, token_count)

    # presentation: pack whole speeches greedily
    cur_texts: list[str] = []
    cur_tokens = 0
    for speech in _presentation_units(pres):
        if speech.token_count > input_budget:
            if cur_texts:
                raw.append((" ".join(cur_texts), "presentation", cur_tokens))
                cur_texts, cur_tokens = [], 0
            for text, n in _split_oversized(speech, input_budget):
                raw.append((text, "overflow_split", n))
            continue
        if cur_texts and cur_tokens + speech.token_count > input_budget:
            raw.append((" ".join(cur_texts), "presentation", cur_tokens))
            cur_texts, cur_tokens = [], 0
        cur_texts.append(speech.text)
        cur_tokens += speech.token_count
    if cur_texts:
        raw.append((" ".join(cur_texts), "presentation", cur_tokens))

    # Q&A: one unit per question, never packed together
    for unit in _qa_units(qa):
        if unit.token_count > input_budget:
            for text, n in _split_oversized(unit, input_budget):
                raw.append((text, "overflow_split", n))
        else:
            raw.append((unit.text, unit.origin, unit.token_count))

    chunks = [
        Chunk(i, transcript.call_id, text, tokens, origin)
        for i, (text, origin, tokens) in enumerate(
            (t, o, n) for t, o, n in raw if n >= min_tokens
        )
    ]
    return chunks


def retained_word_count(chunks: Iterable[Chunk]) -> int:
    """Exposure denominator: words over the chunks that survived filtering."""
    return sum(word_count(c.text) for c in chunks)


def iter_chunk_records(chunks: Iterable[Chunk]) -> Iterator[dict]:
    for c in chunks:
        yield c.to_record()
