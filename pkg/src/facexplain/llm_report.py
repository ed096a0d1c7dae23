"""Textual explanations: prompt rendering, chat-completions client, lint.

The prompt contextualizes the verification score as a percentage, states
the sign convention of the contribution table, and asks for a short
explanation of the score.  Rendering substitutes two placeholders:
``[cosine_similarity_percentage]`` (used in two places) and
``[contributions_table]``.  Three instruction clauses can be toggled off to
study their effect on generated text.

Completions come from any OpenAI-compatible ``/v1/chat/completions``
endpoint; raw responses can be recorded to fixtures and replayed
byte-identically offline.  A heuristic lint flags generated text that
contradicts the table (claiming similarity for a negative-valued region,
inventing quantities the table does not contain); it is advisory and never
fails the pipeline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import FacexplainError, ValidationError
from .explanation import ContributionTable, SimilarityExplanation, contribution_table

__all__ = [
    "PromptTemplate",
    "DEFAULT_TEMPLATE",
    "render_prompt",
    "format_percentage",
    "EndpointConfig",
    "LlmError",
    "generate_text",
    "FixtureStore",
    "LintWarning",
    "lint_explanation",
    "ExplanationReport",
]

logger = logging.getLogger(__name__)

PERCENTAGE_PLACEHOLDER = "[cosine_similarity_percentage]"
TABLE_PLACEHOLDER = "[contributions_table]"


@dataclass(frozen=True)
class PromptTemplate:
    """The explanation prompt with its three optional instruction clauses."""

    percentage_hint: bool = True
    sign_example: bool = True
    no_long_explanation: bool = True

    def text(self) -> str:
        parts = [
            "Context: A face verification system assigns a cosine similarity score "
            "between two images. In this instance, the cosine similarity is ",
            PERCENTAGE_PLACEHOLDER,
        ]
        if self.percentage_hint:
            parts.append(" (a percentage from 0 to 100%)")
        parts.append(
            ". From the model's knowledge, several main human-understandable concepts "
            "are extracted; these concepts are used to explain the model's output "
            "(cosine similarity). These concepts are associated with a similar/dissimilar "
            "score. Specifically, when a value is positive or equal to zero"
        )
        if self.sign_example:
            parts.append(" (>=0)")
        parts.append(", the model perceives these areas in the two images as similar. "
                     "Conversely, they are seen as dissimilar when the value is negative")
        if self.sign_example:
            parts.append(" (example: -0.5)")
        parts.append(
            ": " + TABLE_PLACEHOLDER + ". Given that a color map is displayed where shades "
            "of purple indicate dissimilarity and shades of orange indicate similarity, "
            "with color intensity proportional to the magnitude of the similarity or "
            "dissimilarity, provide a simple explanation of why the cosine similarity "
            "between the two images is " + PERCENTAGE_PLACEHOLDER + "."
        )
        if self.no_long_explanation:
            parts.append(" No long explanation")
        return "".join(parts)


DEFAULT_TEMPLATE = PromptTemplate()


def format_percentage(s_ab: float) -> str:
    return f"{round(s_ab * 100)}%"


def render_prompt(
    template: PromptTemplate,
    expl: SimilarityExplanation | None = None,
    *,
    table: ContributionTable | None = None,
    s_ab: float | None = None,
    k: int | None = None,
) -> str:
    """Substitute the percentage and the two-block table listing.

    The explanation supplies both by default; a prebuilt table plus score
    can be passed instead (used when re-rendering from serialized results).
    """
    if table is None or s_ab is None:
        if expl is None:
            raise ValidationError("render_prompt needs an explanation or an explicit table and score")
        table = table or contribution_table(expl, k)
        s_ab = expl.s_ab if s_ab is None else s_ab
    if not table.negative and not table.positive:
        raise ValidationError("cannot render a prompt from an empty contribution table")
    text = template.text()
    for placeholder in (PERCENTAGE_PLACEHOLDER, TABLE_PLACEHOLDER):
        if placeholder not in text:
            raise ValidationError(f"template is missing the {placeholder} placeholder")
    rendered = text.replace(PERCENTAGE_PLACEHOLDER, format_percentage(s_ab))
    rendered = rendered.replace(TABLE_PLACEHOLDER, table.listing())
    for placeholder in (PERCENTAGE_PLACEHOLDER, TABLE_PLACEHOLDER):
        if placeholder in rendered:
            raise ValidationError(f"rendered prompt still contains {placeholder}")
    return rendered


# ---------------------------------------------------------------------------
# Chat-completions client with record/replay


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.2  # not taken from the upstream work, which leaves it unstated
    timeout: float = 30.0
    retries: int = 2
    max_tokens: int | None = None


class LlmError(FacexplainError):
    """The endpoint could not produce a completion."""


def _prompt_key(model: str, prompt: str) -> str:
    return hashlib.sha256(f"{model}\n{prompt}".encode()).hexdigest()


class FixtureStore:
    """Records raw endpoint responses keyed by (model, prompt) for offline replay."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key[:32]}.json"

    def save(self, model: str, prompt: str, response: dict) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        key = _prompt_key(model, prompt)
        path = self._path(key)
        path.write_text(json.dumps({"key": key, "model": model, "response": response},
                                   indent=2, sort_keys=True) + "\n")
        return path

    def load(self, model: str, prompt: str) -> dict | None:
        path = self._path(_prompt_key(model, prompt))
        if not path.exists():
            return None
        return json.loads(path.read_text())["response"]


def _extract_content(response: dict) -> str:
    try:
        content = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LlmError(f"malformed completion response: {exc}") from exc
    if not content:
        raise LlmError("endpoint returned an empty completion")
    return content


def generate_text(
    prompt: str,
    config: EndpointConfig,
    *,
    offline: bool = False,
    fixtures: FixtureStore | None = None,
    record: bool = False,
) -> str:
    """One completion for the prompt.

    Offline mode replays a recorded fixture and never opens a connection;
    record mode saves the raw response after a live call.
    """
    if offline:
        if fixtures is None:
            raise LlmError("offline mode requires a fixture store")
        response = fixtures.load(config.model, prompt)
        if response is None:
            raise LlmError(
                f"no recorded fixture for model '{config.model}' and this prompt; "
                "run once with --record-fixtures"
            )
        return _extract_content(response)

    import requests

    base = config.base_url.rstrip("/")
    if not base.endswith("/v1"):
        base += "/v1"
    url = f"{base}/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }
    if config.max_tokens is not None:
        payload["max_tokens"] = config.max_tokens
    logger.debug("llm request to %s: %s", url, json.dumps({**payload, "authorization": "<redacted>"}))

    last_error: Exception | None = None
    for attempt in range(config.retries + 1):
        try:
            reply = requests.post(url, json=payload, headers=headers, timeout=config.timeout)
            reply.raise_for_status()
            response = reply.json()
            logger.debug("llm response (attempt %d): %s", attempt + 1, json.dumps(response)[:2000])
            content = _extract_content(response)
            if record and fixtures is not None:
                fixtures.save(config.model, prompt, response)
            return content
        except (requests.RequestException, LlmError, ValueError) as exc:
            last_error = exc
            if attempt < config.retries:
                time.sleep(min(2.0**attempt * 0.2, 2.0))
    raise LlmError(f"completion failed after {config.retries + 1} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Consistency lint


@dataclass(frozen=True)
class LintWarning:
    kind: str  # "polarity" | "invented-quantity"
    message: str
    region: str | None = None


_NEGATIVE_CLAIM = re.compile(r"\b(dissimilar\w*|differen\w*|not similar|less alike|unlike)\b", re.IGNORECASE)
_POSITIVE_CLAIM = re.compile(r"\b(similar\w*|alike)\b", re.IGNORECASE)
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?%?")
_GEOMETRY = re.compile(
    r"\b(distance|width|length|angle|size)\s+(between|of|from)\b", re.IGNORECASE
)


def _sentences(text: str):
    start = 0
    for match in re.finditer(r"[.!?;\n]", text):
        yield start, text[start : match.end()]
        start = match.end()
    if start < len(text):
        yield start, text[start:]


def _claims(sentence: str):
    for match in _NEGATIVE_CLAIM.finditer(sentence):
        yield (match.start() + match.end()) / 2, "negative"
    for match in _POSITIVE_CLAIM.finditer(sentence):
        # skip positives embedded in a negative word already reported
        if _NEGATIVE_CLAIM.match(sentence, match.start()):
            continue
        yield (match.start() + match.end()) / 2, "positive"


def lint_explanation(text: str, source: SimilarityExplanation | ContributionTable) -> list[LintWarning]:
    """Advisory consistency check of generated text against the table.

    Polarity: a region named near a similarity keyword must carry a
    nonnegative value (and vice versa); the nearest keyword in the sentence
    wins.  Invented quantities: numbers absent from the table / the
    percentage, or geometric measurements the table cannot support.
    """
    table = source if isinstance(source, ContributionTable) else contribution_table(source)
    values = {name: value for name, value in (*table.negative, *table.positive)}
    warnings: list[LintWarning] = []

    for offset, sentence in _sentences(text):
        claims = list(_claims(sentence))
        if claims:
            masked = sentence.lower()
            for name in sorted(values, key=len, reverse=True):
                needle = name.lower()
                pos = 0
                while True:
                    found = masked.find(needle, pos)
                    if found == -1:
                        break
                    midpoint = found + len(needle) / 2
                    _, polarity = min(claims, key=lambda c: abs(c[0] - midpoint))
                    value = values[name]
                    if polarity == "positive" and value < 0:
                        warnings.append(LintWarning(
                            kind="polarity", region=name,
                            message=f"text presents '{name}' as similar but its value is {value:.4f}",
                        ))
                    elif polarity == "negative" and value >= 0:
                        warnings.append(LintWarning(
                            kind="polarity", region=name,
                            message=f"text presents '{name}' as dissimilar but its value is {value:.4f}",
                        ))
                    masked = masked[:found] + "#" * len(needle) + masked[found + len(needle):]
                    pos = found + len(needle)

    allowed = {"0", "100"}
    for value in values.values():
        allowed.add(f"{value:.4f}")
        allowed.add(f"{abs(value):.4f}")
    for match in re.finditer(r"\b\d{1,3}%", text):
        allowed.add(match.group(0).rstrip("%"))
    allowed.update({a + "%" for a in set(allowed)})
    for match in _NUMBER.finditer(text):
        token = match.group(0)
        if token not in allowed and token.lstrip("-") not in allowed:
            warnings.append(LintWarning(
                kind="invented-quantity",
                message=f"text cites the number '{token}' which appears nowhere in the table",
            ))
    for match in _GEOMETRY.finditer(text):
        warnings.append(LintWarning(
            kind="invented-quantity",
            message=f"text reasons about '{match.group(0)}', a geometric quantity the table does not contain",
        ))
    return warnings


# ---------------------------------------------------------------------------
# Report bundle


@dataclass(frozen=True)
class ExplanationReport:
    pair_id: str
    percentage: str
    s_ab: float
    table: ContributionTable
    map_files: tuple[str, ...]
    prompt_sha: str
    generated_at: str
    llm_text: str | None = None
    llm_model: str | None = None
    lint: tuple[LintWarning, ...] = ()

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "percentage": self.percentage,
            "s_ab": self.s_ab,
            "table": json.loads(self.table.to_json()),
            "map_files": list(self.map_files),
            "prompt_sha": self.prompt_sha,
            "generated_at": self.generated_at,
            "llm_text": self.llm_text,
            "llm_model": self.llm_model,
            "lint": [{"kind": w.kind, "message": w.message, "region": w.region} for w in self.lint],
        }

    def to_markdown(self) -> str:
        lines = [
            f"# Verification explanation: {self.pair_id}",
            "",
            f"Cosine similarity: **{self.percentage}** (raw {self.s_ab:.6f})",
            "",
            "## Contribution table",
            "",
            self.table.to_markdown(),
        ]
        if self.map_files:
            lines.append("## Similarity maps")
            lines.append("")
            for ref in self.map_files:
                lines.append(f"![{ref}]({ref})")
            lines.append("")
        if self.llm_text is not None:
            lines.append(f"## Explanation ({self.llm_model})")
            lines.append("")
            lines.append(self.llm_text.strip())
            lines.append("")
        if self.lint:
            lines.append("## Consistency warnings (advisory)")
            lines.append("")
            for w in self.lint:
                lines.append(f"- {w.kind}: {w.message}")
            lines.append("")
        return "\n".join(lines)


def build_report(
    expl: SimilarityExplanation,
    *,
    prompt: str,
    generated_at: str,
    map_files: tuple[str, ...] = (),
    llm_text: str | None = None,
    llm_model: str | None = None,
    k: int | None = None,
) -> ExplanationReport:
    table = contribution_table(expl, k)
    lint = tuple(lint_explanation(llm_text, table)) if llm_text else ()
    return ExplanationReport(
        pair_id=expl.pair_id,
        percentage=format_percentage(expl.s_ab),
        s_ab=expl.s_ab,
        table=table,
        map_files=map_files,
        prompt_sha=hashlib.sha256(prompt.encode()).hexdigest(),
        generated_at=generated_at,
        llm_text=llm_text,
        llm_model=llm_model,
        lint=lint,
    )
