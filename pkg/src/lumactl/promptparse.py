"""Deterministic instruction grammar for relighting prompts.

Accepted shape, case-insensitive, punctuation-insensitive:

    <verb> [the] [brightness|lighting|light of] [the] <target>
           [in this|the picture|image|photo] [by N%] | [<vague amount>]

The verb table, vague-amount table, and whole-image keywords are data
(VocabularyTable), overridable from a JSON file. An explicit "by N%" always
wins over a vague phrase. One instruction per prompt: a second known verb
after the first one rejects the prompt, so targets that themselves contain
instruction verbs are out of grammar.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path

SCOPES = ("region", "background", "global")
DIRECTIONS = ("brighten", "darken")

_STRIP_CHARS = "".join(c for c in string.punctuation if c != "%")
_PCT_RE = re.compile(r"^\d+(\.\d+)?%$")
_NUM_RE = re.compile(r"^\d+(\.\d+)?$")
_FILLER_NOUNS = ("brightness", "lighting", "light")
_LOCATIVE_TAILS = ("picture", "image", "photo")

DEFAULT_RATIO = 0.20


class ParseError(Exception):
    """Prompt rejected; kind names the rule, span quotes the offending text."""

    def __init__(self, kind: str, span: str, message: str) -> None:
        super().__init__(f"{message} (at: {span!r})" if span else message)
        self.kind = kind
        self.span = span


class VocabularyError(Exception):
    """Vocabulary file malformed; raised at startup, not per prompt."""


@dataclass(frozen=True)
class Instruction:
    target_phrase: str
    scope: str
    direction: str
    ratio: float
    source_text: str

    def __post_init__(self) -> None:
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(
                f"direction must be one of {DIRECTIONS}, got {self.direction!r}"
            )
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if (self.scope == "region") != bool(self.target_phrase):
            raise ValueError("target_phrase is required exactly when scope='region'")

    def to_dict(self) -> dict:
        return {
            "target_phrase": self.target_phrase,
            "scope": self.scope,
            "direction": self.direction,
            "ratio": self.ratio,
            "source_text": self.source_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instruction":
        return cls(
            target_phrase=d["target_phrase"],
            scope=d["scope"],
            direction=d["direction"],
            ratio=d["ratio"],
            source_text=d["source_text"],
        )


@dataclass(frozen=True)
class VocabularyTable:
    """Parser word tables. Keys are stored lowercase."""

    verbs: dict[str, str] = field(default_factory=dict)
    amounts: dict[str, float] = field(default_factory=dict)
    global_keywords: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "verbs", {k.lower(): v for k, v in self.verbs.items()}
        )
        object.__setattr__(
            self, "amounts", {k.lower(): float(v) for k, v in self.amounts.items()}
        )
        object.__setattr__(
            self, "global_keywords", frozenset(k.lower() for k in self.global_keywords)
        )
        for word, direction in self.verbs.items():
            if direction not in DIRECTIONS:
                raise VocabularyError(
                    f"verb {word!r} maps to unknown direction {direction!r}"
                )
        for phrase, ratio in self.amounts.items():
            if not 0.0 < ratio <= 1.0:
                raise VocabularyError(
                    f"amount {phrase!r} must map into (0, 1], got {ratio}"
                )

    @classmethod
    def from_json(cls, path: str | Path) -> "VocabularyTable":
        """Load overrides; each present key replaces that whole table."""
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise VocabularyError(f"cannot read vocabulary {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise VocabularyError("vocabulary file must hold a JSON object")
        allowed = {"verbs", "amounts", "global_keywords"}
        unknown = set(raw) - allowed
        if unknown:
            raise VocabularyError(f"unknown vocabulary keys: {sorted(unknown)}")
        base = default_vocabulary()
        verbs = raw.get("verbs", base.verbs)
        amounts = raw.get("amounts", base.amounts)
        keywords = raw.get("global_keywords", base.global_keywords)
        if not isinstance(verbs, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in verbs.items()
        ):
            raise VocabularyError("'verbs' must map words to directions")
        if not isinstance(amounts, dict) or not all(
            isinstance(k, str) and isinstance(v, (int, float)) and not isinstance(v, bool)
            for k, v in amounts.items()
        ):
            raise VocabularyError("'amounts' must map phrases to numbers")
        if not isinstance(keywords, (list, frozenset)) or not all(
            isinstance(k, str) for k in keywords
        ):
            raise VocabularyError("'global_keywords' must be a list of strings")
        return cls(dict(verbs), dict(amounts), frozenset(keywords))


def default_vocabulary() -> VocabularyTable:
    return VocabularyTable(
        verbs={
            "brighten": "brighten",
            "lighten": "brighten",
            "increase": "brighten",
            "raise": "brighten",
            "boost": "brighten",
            "darken": "darken",
            "dim": "darken",
            "decrease": "darken",
            "reduce": "darken",
            "lower": "darken",
        },
        amounts={
            "just a little": 0.10,
            "a little": 0.10,
            "slightly": 0.10,
            "somewhat": 0.20,
            "moderately": 0.20,
            "a lot": 0.40,
            "significantly": 0.40,
            "much": 0.40,
        },
        global_keywords=frozenset(
            base if qual is None else f"{qual} {base}"
            for base in ("image", "picture", "photo", "scene")
            for qual in (None, "whole", "entire")
        )
        | {"everything"},
    )


@dataclass(frozen=True)
class _Token:
    low: str
    orig: str


def _tokenize(text: str) -> list[_Token]:
    toks = []
    for raw in text.split():
        stripped = raw.strip(_STRIP_CHARS)
        if stripped:
            toks.append(_Token(stripped.lower(), stripped))
    return toks


def normalize_text(text: str) -> list[str]:
    """Lowercased tokens with edge punctuation removed; '%' survives."""
    return [t.low for t in _tokenize(text)]


def parse(text: str, vocab: VocabularyTable | None = None) -> Instruction:
    """Parse one prompt into an Instruction or raise ParseError."""
    if vocab is None:
        vocab = default_vocabulary()
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("no_verb", "", "empty prompt")
    head, rest = tokens[0], tokens[1:]
    direction = vocab.verbs.get(head.low)
    if direction is None:
        raise ParseError("no_verb", head.orig, f"unknown verb {head.orig!r}")
    for tok in rest:
        if tok.low in vocab.verbs:
            raise ParseError(
                "compound", tok.orig, "only one instruction per prompt"
            )

    # leading fillers: [the] [brightness|lighting|light of] [the]
    if rest and rest[0].low == "the":
        rest = rest[1:]
    if len(rest) >= 2 and rest[0].low in _FILLER_NOUNS and rest[1].low == "of":
        rest = rest[2:]
        if rest and rest[0].low == "the":
            rest = rest[1:]

    pct_token: _Token | None = None
    vague_ratio: float | None = None
    amount_phrases = sorted(vocab.amounts, key=lambda p: -len(p.split()))
    changed = True
    while changed and rest:
        changed = False
        low = [t.low for t in rest]
        if len(rest) >= 2 and low[-2] == "by" and _PCT_RE.match(low[-1]):
            if pct_token is None:
                pct_token = rest[-1]
            rest = rest[:-2]
            changed = True
            continue
        if len(rest) >= 2 and low[-2] == "by" and _NUM_RE.match(low[-1]):
            raise ParseError(
                "bad_ratio", rest[-1].orig, "amounts need a percent sign, e.g. 'by 20%'"
            )
        if (
            len(rest) >= 3
            and low[-3] == "in"
            and low[-2] in ("this", "the")
            and low[-1] in _LOCATIVE_TAILS
        ):
            rest = rest[:-3]
            changed = True
            continue
        for phrase in amount_phrases:
            words = phrase.split()
            if len(rest) >= len(words) and low[-len(words):] == words:
                if vague_ratio is None:
                    vague_ratio = vocab.amounts[phrase]
                rest = rest[: -len(words)]
                changed = True
                break

    if pct_token is not None:
        pct = float(pct_token.low.rstrip("%"))
        if not 0.0 < pct <= 100.0:
            raise ParseError(
                "bad_ratio", pct_token.orig, f"percentage must lie in (0, 100], got {pct:g}"
            )
        ratio = pct / 100.0
    elif vague_ratio is not None:
        ratio = vague_ratio
    else:
        ratio = DEFAULT_RATIO

    phrase_low = " ".join(t.low for t in rest)
    if phrase_low in vocab.global_keywords:
        scope, target = "global", ""
    elif phrase_low == "background":
        scope, target = "background", ""
    elif rest:
        scope, target = "region", " ".join(t.orig for t in rest)
    else:
        raise ParseError(
            "no_target", text, "prompt names no target region and no whole-image keyword"
        )
    return Instruction(target, scope, direction, ratio, text)
