"""Prompt rendering, the fixed closed vocabulary, and preference-to-q mapping.

A prediction sample becomes a canonical masked prompt::

    cell 7 ; time 36 ; past 10.0 12.0 11.0 13.0 12.0 ; mean 11.6 ; dev 1.0 ; next [MASK]

optionally followed by `` ; goal <preference phrase>``.  Numbers are
rendered to one decimal place and tokenized digit by digit, so the whole
template fits a closed vocabulary and round-trips exactly.

The five operator preference phrases map to the balancing-loss knob q.
Two orientations are exposed because the loss's q can be read as
weighting either the underprediction or the overprediction side:
``EQ4`` maps power-savings phrases to high q, ``TABLE_CONSISTENT`` to
its reciprocal.  Under ``TABLE_CONSISTENT`` the savings phrases train
models that underpredict and therefore switch more cells off — the
orientation that actually produces a savings-vs-quality trade-off in
the simulator — so it is the default.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from cellcast.data import PredictionSample

PAD, CLS, SEP, MASK = "[PAD]", "[CLS]", "[SEP]", "[MASK]"
NUMBER_CHARS = set("0123456789.-")
DEFAULT_SEQ_LEN = 96
VOCAB_VERSION = "cellcast-vocab-1"

_KEYWORDS = ["cell", "time", "past", "mean", "dev", "next", "goal", ";"]
_DIGITS = list("0123456789")
_PUNCT = [".", "-", ":"]
_PHRASE_WORDS = [
    "No", "specific", "focus",
    "Focus", "on", "service", "quality", "highly", "power", "savings",
]


class VocabularyError(ValueError):
    """Token outside the closed vocabulary."""


class PromptOverflowError(ValueError):
    """Prompt longer than the fixed sequence length; truncation is forbidden."""


class UnknownPreferenceError(ValueError):
    """Phrase is not one of the five canonical preference strings."""


class OperatorPreference(Enum):
    """The five canonical operator preference phrases, quality-first order."""

    HIGH_SERVICE_QUALITY = "Focus highly on service quality"
    SERVICE_QUALITY = "Focus on service quality"
    NEUTRAL = "No specific focus"
    POWER_SAVINGS = "Focus on power savings"
    HIGH_POWER_SAVINGS = "Focus highly on power savings"

    @property
    def phrase(self) -> str:
        return self.value

    @classmethod
    def from_phrase(cls, phrase: str) -> "OperatorPreference":
        for pref in cls:
            if pref.value == phrase:
                return pref
        raise UnknownPreferenceError(
            f"unknown preference {phrase!r}; valid phrases: {[p.value for p in cls]}"
        )


#: Quality-first evaluation order used for trade-off trends.
PREFERENCE_ORDER = list(OperatorPreference)

_EQ4_Q = {
    OperatorPreference.NEUTRAL: 1.0,
    OperatorPreference.SERVICE_QUALITY: 0.5,
    OperatorPreference.HIGH_SERVICE_QUALITY: 0.1,
    OperatorPreference.POWER_SAVINGS: 5.0,
    OperatorPreference.HIGH_POWER_SAVINGS: 10.0,
}


class Orientation(Enum):
    """Which way the q knob is read; TABLE_CONSISTENT reciprocates the EQ4 value."""

    EQ4 = "eq4"
    TABLE_CONSISTENT = "table_consistent"


def q_for_preference(
    pref: OperatorPreference, orientation: Orientation = Orientation.TABLE_CONSISTENT
) -> float:
    q = _EQ4_Q[pref]
    return q if orientation is Orientation.EQ4 else 1.0 / q


def render_prompt(sample: PredictionSample, pref: OperatorPreference | None = None) -> str:
    """Canonical masked prompt text for a sample, optionally with a goal clause."""
    past = " ".join(f"{v:.1f}" for v in sample.history)
    text = (
        f"cell {sample.cell_id} ; time {sample.tod_bucket} ; past {past} ; "
        f"mean {sample.mean:.1f} ; dev {sample.deviation:.1f} ; next {MASK}"
    )
    if pref is not None:
        text += f" ; goal {pref.phrase}"
    return text


class Vocabulary:
    """Immutable id<->token table over the closed prompt vocabulary."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self.ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("duplicate tokens")
        for special in (PAD, CLS, SEP, MASK):
            if special not in self.ids:
                raise ValueError(f"missing special token {special}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.ids[PAD]

    @property
    def mask_id(self) -> int:
        return self.ids[MASK]

    def serialize(self) -> str:
        lines = [VOCAB_VERSION]
        lines += [f"{i}\t{t}" for i, t in enumerate(self.tokens)]
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "Vocabulary":
        lines = [ln for ln in text.splitlines() if ln]
        if not lines or lines[0] != VOCAB_VERSION:
            raise ValueError(f"unsupported vocabulary version {lines[:1]}")
        tokens = []
        for i, line in enumerate(lines[1:]):
            idx, tok = line.split("\t")
            if int(idx) != i:
                raise ValueError("non-contiguous vocabulary ids")
            tokens.append(tok)
        return cls(tokens)

    def content_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def build_vocabulary() -> Vocabulary:
    """The fixed vocabulary covering every renderable prompt."""
    return Vocabulary([PAD, CLS, SEP, MASK] + _KEYWORDS + _DIGITS + _PUNCT + _PHRASE_WORDS)


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length token ids with attention mask and the single mask position."""

    ids: np.ndarray
    attention_mask: np.ndarray
    mask_index: int

    def __post_init__(self) -> None:
        if self.ids.shape != self.attention_mask.shape:
            raise ValueError("ids and attention_mask must share a shape")
        if self.attention_mask[self.mask_index] != 1:
            raise ValueError("mask position must be a real token")


def _word_tokens(word: str) -> list[str]:
    if word in (MASK, CLS, SEP, PAD):
        return [word]
    if set(word) <= NUMBER_CHARS:
        return list(word)
    return [word]


def tokenize(prompt: str, vocab: Vocabulary, length: int = DEFAULT_SEQ_LEN) -> TokenSequence:
    """[CLS] + body + [SEP], padded to ``length``; numbers split digit by digit."""
    body: list[str] = []
    for word in prompt.split():
        for tok in _word_tokens(word):
            if tok not in vocab.ids:
                raise VocabularyError(f"token {tok!r} not in vocabulary")
            body.append(tok)
    tokens = [CLS] + body + [SEP]
    if len(tokens) > length:
        raise PromptOverflowError(f"prompt needs {len(tokens)} tokens, limit is {length}")
    mask_positions = [i for i, t in enumerate(tokens) if t == MASK]
    if len(mask_positions) != 1:
        raise ValueError(f"prompt must contain exactly one {MASK}, got {len(mask_positions)}")
    ids = np.full(length, vocab.pad_id, dtype=np.int64)
    attention = np.zeros(length, dtype=np.int64)
    for i, t in enumerate(tokens):
        ids[i] = vocab.ids[t]
        attention[i] = 1
    return TokenSequence(ids=ids, attention_mask=attention, mask_index=mask_positions[0])


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> str:
    """Reconstruct the canonical prompt text from a token sequence.

    Number-character runs merge back into numbers; a one-decimal number
    ends exactly one digit after its '.', which makes adjacent rendered
    numbers separable without an explicit boundary token.
    """
    words: list[str] = []
    buffer = ""

    def flush() -> None:
        nonlocal buffer
        if buffer:
            words.append(buffer)
            buffer = ""

    for tok_id, real in zip(seq.ids, seq.attention_mask):
        if not real:
            continue
        tok = vocab.tokens[int(tok_id)]
        if tok in (CLS, SEP):
            continue
        if tok in NUMBER_CHARS and len(tok) == 1:
            buffer += tok
            dot = buffer.find(".")
            if dot != -1 and len(buffer) == dot + 2:
                flush()
        else:
            flush()
            words.append(tok)
    flush()
    return " ".join(words)
