"""Prompt construction, completion providers, and per-call risk documents.

Two provider backends share one interface: a deterministic stub driven by
substring rules (the default for tests and fixtures) and a live HTTP
provider with retry/backoff. Completions are written through a persistent
file cache keyed by (model, prompt), so reruns never hit the provider.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import ConfigError, ProviderError
from .transcripts import Chunk

RISK_TYPES = ("political", "climate", "ai")
MODES = ("summary", "assessment")

API_KEY_ENV = "RISKSCOPE_API_KEY"

_SUMMARY_PREAMBLE = (
    "The following text is excerpted from an earnings call transcript. "
    "Write a {name} of the risk-related content. Use only information "
    "contained in the text itself; do not rely on outside knowledge and "
    "do not make judgments beyond what the text states."
)
_ASSESSMENT_PREAMBLE = (
    "The following text is excerpted from an earnings call transcript. "
    "Write an {name} of the company's exposure to this risk. Make a "
    "judgment, supported by narrative reasoning, and feel free to draw "
    "on your general knowledge beyond the text."
)

_RISK_EXPLANATIONS = {
    "political": (
        "Political risk covers political and regulatory uncertainty: for "
        "example, whether the company is likely to be affected by a new "
        "regulation, government policy shifts, trade restrictions, or "
        "election outcomes."
    ),
    "climate": (
        "Climate risk covers how the company's operations might be "
        "impacted by extreme weather events or by environmental policy "
        "changes such as emissions rules or carbon pricing."
    ),
    "ai": (
        "AI risk covers whether the company's primary operations might be "
        "replaced or assisted by artificial intelligence, and how "
        "dependent the business is on AI technologies."
    ),
}

_SAMPLE_QUESTIONS = {
    "political": [
        "Is the company exposed to new or proposed regulation?",
        "Do government decisions, subsidies, or tariffs affect its markets?",
        "Could election outcomes or geopolitical events change its prospects?",
    ],
    "climate": [
        "Is the company exposed to extreme weather or natural disasters?",
        "Do environmental policies or emissions rules affect its costs?",
        "Is demand for its products sensitive to the energy transition?",
    ],
    "ai": [
        "Could the company's core operations be replaced or assisted by AI?",
        "Does the company depend on AI technologies it does not control?",
        "Is the company investing to keep up with AI-driven competition?",
    ],
}

_MODE_NAMES = {
    ("political", "summary"): "summary of political or regulatory risk discussions",
    ("political", "assessment"): "assessment of political or regulatory risk",
    ("climate", "summary"): "summary of climate-related risk discussions",
    ("climate", "assessment"): "assessment of climate-related risk",
    ("ai", "summary"): "summary of AI-related risk discussions",
    ("ai", "assessment"): "assessment of AI-related risk",
}

NA_INSTRUCTION = 'If the text contains no relevant content, print "NA".'


@dataclass(frozen=True)
class PromptSpec:
    risk_type: str
    mode: str
    preamble: str
    risk_explanation: str
    sample_questions: tuple[str, ...]


def default_prompt_spec(risk_type: str, mode: str, overrides: dict | None = None) -> PromptSpec:
    """Resolve the single template for a (risk_type, mode) pair.

    ``overrides`` maps "<risk>_<mode>_preamble" / "<risk>_explanation" /
    "<risk>_questions" keys to replacement text, so prompt wording can be
    changed from config without code edits.
    """
    if risk_type not in RISK_TYPES:
        raise ConfigError(f"unknown risk_type {risk_type!r}")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    overrides = overrides or {}
    base = _SUMMARY_PREAMBLE if mode == "summary" else _ASSESSMENT_PREAMBLE
    preamble = overrides.get(
        f"{risk_type}_{mode}_preamble", base.format(name=_MODE_NAMES[(risk_type, mode)])
    )
    explanation = overrides.get(f"{risk_type}_explanation", _RISK_EXPLANATIONS[risk_type])
    questions = tuple(overrides.get(f"{risk_type}_questions", _SAMPLE_QUESTIONS[risk_type]))
    return PromptSpec(risk_type, mode, preamble, explanation, questions)


def build_prompt(chunk: Chunk, spec: PromptSpec) -> str:
    """Assemble preamble + risk explanation + sample questions + chunk text.

    Pure string concatenation: chunk text is passed through verbatim, so
    braces or template-looking content cannot be interpolated.
    """
    questions = "\n".join("- " + q for q in spec.sample_questions)
    return (
        spec.preamble
        + "\n\n"
        + spec.risk_explanation
        + "\n\nQuestions to consider:\n"
        + questions
        + "\n\n"
        + NA_INSTRUCTION
        + "\n\nText:\n"
        + chunk.text
    )


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model_id: str
    temperature: float = 0.0  # fixed at zero; reruns must be reproducible
    max_output_tokens: int | None = None  # None = unbounded

    def __post_init__(self):
        if self.temperature != 0.0:
            raise ConfigError("completion temperature is fixed at 0")


@dataclass(frozen=True)
class RiskDocument:
    call_id: str
    risk_type: str
    mode: str
    text: str
    chunk_outputs: tuple[str, ...]


class Provider(Protocol):
    def complete(self, prompt: str, model_id: str) -> str: ...


@dataclass
class StubRule:
    contains: tuple[str, ...]  # all substrings must appear in the prompt
    respond: str

    @classmethod
    def parse(cls, raw: dict) -> "StubRule":
        contains = raw.get("contains")
        if isinstance(contains, str):
            contains = (contains,)
        elif isinstance(contains, list) and all(isinstance(c, str) for c in contains):
            contains = tuple(contains)
        else:
            raise ConfigError("stub rule 'contains' must be a string or list of strings")
        respond = raw.get("respond")
        if not isinstance(respond, str):
            raise ConfigError("stub rule 'respond' must be a string")
        return cls(contains, respond)


class StubProvider:
    """Deterministic provider: first matching rule wins, default "NA"."""

    def __init__(self, rules: Sequence[StubRule] = (), default: str = "NA"):
        self.rules = list(rules)
        self.default = default
        self.call_count = 0

    @classmethod
    def from_config(cls, raw_rules: Sequence[dict], default: str = "NA") -> "StubProvider":
        if not isinstance(raw_rules, list) or not all(isinstance(r, dict) for r in raw_rules):
            raise ConfigError("stub rules must be a JSON list of {contains, respond} objects")
        return cls([StubRule.parse(r) for r in raw_rules], default)

    def complete(self, prompt: str, model_id: str) -> str:
        self.call_count += 1
        for rule in self.rules:
            if all(sub in prompt for sub in rule.contains):
                return rule.respond
        return self.default


_RETRYABLE = {408, 409, 425, 429, 500, 502, 503, 504}


class LiveProvider:
    """HTTP chat-completion provider with exponential-backoff retries.

    Posts {"model", "temperature": 0, "messages": [{"role": "user",
    "content": prompt}]} and reads choices[0].message.content from the
    response. The credential comes from the RISKSCOPE_API_KEY env var.
    A custom httpx transport can be injected for testing.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        max_retries: int = 4,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise ConfigError(f"live provider requires credential in ${API_KEY_ENV}")
        self.endpoint = endpoint
        self._headers = {"Authorization": f"Bearer {key}"}
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.call_count = 0
        self.attempt_count = 0
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def complete(self, prompt: str, model_id: str) -> str:
        self.call_count += 1
        body = {
            "model": model_id,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        last_status: int | None = None
        last_error = "unknown"
        attempts = 0
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            attempts += 1
            self.attempt_count += 1
            try:
                resp = self._client.post(self.endpoint, json=body, headers=self._headers)
            except httpx.HTTPError as exc:
                last_status, last_error = None, f"transport failure: {exc}"
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    raise ProviderError(f"malformed provider response: {exc}") from exc
            last_status, last_error = resp.status_code, f"HTTP {resp.status_code}"
            if resp.status_code not in _RETRYABLE:
                break
        raise ProviderError(
            f"provider failed after {attempts} attempt(s): {last_error}",
            status=last_status,
        )


class CompletionCache:
    """Directory-backed key-value store: one file per completion.

    Keys are sha256(model_id \\x00 prompt) hex digests; values are UTF-8
    completion text. Writes go to a temp file then rename, so concurrent
    readers never observe partial values.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(model_id: str, prompt: str) -> str:
        digest = hashlib.sha256()
        digest.update(model_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(prompt.encode("utf-8"))
        return digest.hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None

    def put(self, key: str, value: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(value)
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def is_na_output(output: str) -> bool:
    """True when the output is just "NA" modulo whitespace, case, and
    trailing ./! punctuation. Longer outputs containing NA are kept."""
    trimmed = output.strip().rstrip(".!").strip()
    return trimmed.lower() == "na"


@dataclass
class Gateway:
    """Completion front end: memory cache -> disk cache -> provider."""

    provider: Provider
    cache: CompletionCache | None = None
    model_id: str = "gpt-3.5-turbo"
    parallelism: int = 4
    _memory: dict[str, str] = field(default_factory=dict)

    def complete(self, req: CompletionRequest) -> str:
        key = CompletionCache.key(req.model_id, req.prompt)
        if key in self._memory:
            return self._memory[key]
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                self._memory[key] = hit
                return hit
        out = self.provider.complete(req.prompt, req.model_id)
        self._memory[key] = out
        if self.cache is not None:
            self.cache.put(key, out)
        return out

    def drop_memory(self) -> None:
        self._memory.clear()

    def generate_risk_document(self, chunks: Sequence[Chunk], spec: PromptSpec) -> RiskDocument:
        """Complete every chunk (bounded parallelism, order-stable), purge
        NA outputs, and join the rest with newlines."""
        if not chunks:
            return RiskDocument("", spec.risk_type, spec.mode, "", ())
        call_id = chunks[0].source_call_id
        requests = [
            CompletionRequest(prompt=build_prompt(c, spec), model_id=self.model_id)
            for c in chunks
        ]

        def run_one(indexed: tuple[int, CompletionRequest]) -> str:
            i, req = indexed
            try:
                return self.complete(req)
            except ProviderError as exc:
                raise ProviderError(str(exc), status=exc.status, chunk_index=chunks[i].chunk_index) from exc

        if self.parallelism > 1 and len(requests) > 1:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                outputs = list(pool.map(run_one, enumerate(requests)))
        else:
            outputs = [run_one(pair) for pair in enumerate(requests)]

        kept = [o for o in outputs if not is_na_output(o)]
        return RiskDocument(call_id, spec.risk_type, spec.mode, "\n".join(kept), tuple(outputs))
