"""Stimulus, cloze-response, and reading-time data structures and loaders.

Context identity is the (item_id, sentence_id, word_index) triple; every
other module addresses words through it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IntegrityError, ParseError, ResolutionError

MEASURES = ("SPR", "FP", "GP")


@dataclass(frozen=True, order=True)
class ContextId:
    """Address of one word token in the corpus."""

    item_id: str
    sentence_id: str
    word_index: int


@dataclass(frozen=True)
class WordToken:
    word_index: int
    text: str
    line_id: str | None = None


@dataclass(frozen=True)
class Sentence:
    sentence_id: str
    words: tuple[WordToken, ...]


@dataclass(frozen=True)
class Item:
    item_id: str
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class StimulusCorpus:
    """Immutable universe of contexts.

    Word indices are contiguous from 0 within each sentence and the
    (item, sentence, word_index) triples are unique corpus-wide.
    """

    items: tuple[Item, ...]
    _index: dict[ContextId, WordToken] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        index: dict[ContextId, WordToken] = {}
        for item in self.items:
            for sent in item.sentences:
                for pos, word in enumerate(sent.words):
                    if word.word_index != pos:
                        raise IntegrityError(
                            f"word_index not contiguous in {item.item_id}/{sent.sentence_id}: "
                            f"expected {pos}, got {word.word_index}"
                        )
                    if not word.text:
                        raise IntegrityError(
                            f"empty word text at {item.item_id}/{sent.sentence_id}/{pos}"
                        )
                    cid = ContextId(item.item_id, sent.sentence_id, word.word_index)
                    if cid in index:
                        raise IntegrityError(f"duplicate context {cid}")
                    index[cid] = word
        object.__setattr__(self, "_index", index)

    def word(self, context: ContextId) -> WordToken:
        try:
            return self._index[context]
        except KeyError:
            raise ResolutionError(f"context {context} not in corpus") from None

    def __contains__(self, context: ContextId) -> bool:
        return context in self._index

    def sentence(self, item_id: str, sentence_id: str) -> Sentence:
        for item in self.items:
            if item.item_id == item_id:
                for sent in item.sentences:
                    if sent.sentence_id == sentence_id:
                        return sent
        raise ResolutionError(f"sentence {item_id}/{sentence_id} not in corpus")

    def contexts(self):
        """All ContextIds in corpus order."""
        for item in self.items:
            for sent in item.sentences:
                for word in sent.words:
                    yield ContextId(item.item_id, sent.sentence_id, word.word_index)

    @property
    def n_words(self) -> int:
        return len(self._index)

    @property
    def n_sentences(self) -> int:
        return sum(len(item.sentences) for item in self.items)


class ClozeResponseSet:
    """Per-context multisets of normalized human completions.

    Responses are lower-cased and stripped; multi-word responses keep
    their first whitespace-separated token. Contexts may be sparse.
    """

    def __init__(self, responses: dict[ContextId, dict[str, int]]):
        for cid, counts in responses.items():
            if not counts or sum(counts.values()) < 1:
                raise IntegrityError(f"empty response multiset for {cid}")
        self._responses = responses

    def __contains__(self, context: ContextId) -> bool:
        return context in self._responses

    def contexts(self):
        return iter(self._responses)

    def counts(self, context: ContextId) -> dict[str, int]:
        from .errors import MissingContextError

        if context not in self._responses:
            raise MissingContextError(f"no responses for {context}")
        return dict(self._responses[context])

    def count(self, context: ContextId, word: str) -> int:
        return self.counts(context).get(normalize_response(word), 0)

    def total(self, context: ContextId) -> int:
        """N: total number of responses stored for the context."""
        return sum(self.counts(context).values())

    def __len__(self) -> int:
        return len(self._responses)


@dataclass(frozen=True)
class RTObservation:
    subject_id: str
    context: ContextId
    measure: str
    rt: float
    prev_word_fixated: bool | None = None
    trial_correct: bool | None = None

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise IntegrityError(f"unknown measure {self.measure!r}")
        if not self.rt > 0:
            raise IntegrityError(f"non-positive rt {self.rt} at {self.context}")
        if self.measure in ("FP", "GP") and self.prev_word_fixated is None:
            raise IntegrityError(f"prev_word_fixated missing for {self.measure} at {self.context}")


@dataclass(frozen=True)
class FilterConfig:
    spr_max_ms: float = 3000.0
    gp_max_ms: float = 3000.0
    fp_max_ms: float = 2000.0
    drop_sentence_edges: bool = True
    drop_line_edges: bool = True
    drop_incorrect_trials: bool = False

    def __post_init__(self):
        if min(self.spr_max_ms, self.gp_max_ms, self.fp_max_ms) <= 0:
            raise IntegrityError("RT thresholds must be positive")


def normalize_response(raw: str) -> str:
    """Lower-case, trim, and keep the first whitespace-separated token."""
    parts = raw.strip().lower().split()
    return parts[0] if parts else ""


def load_stimuli(path: str | Path) -> StimulusCorpus:
    """Read a stimuli CSV (item_id,sentence_id,word_index,word_text[,line_id])."""
    path = Path(path)
    rows: dict[str, dict[str, list[tuple[int, str, str | None]]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"item_id", "sentence_id", "word_index", "word_text"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                item_id = row["item_id"].strip()
                sentence_id = row["sentence_id"].strip()
                word_index = int(row["word_index"])
                text = row["word_text"].strip()
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed row ({exc})") from None
            line_id = (row.get("line_id") or "").strip() or None
            rows.setdefault(item_id, {}).setdefault(sentence_id, []).append(
                (word_index, text, line_id)
            )

    items = []
    for item_id, sentences in rows.items():
        sents = []
        for sentence_id, words in sentences.items():
            seen = {w[0] for w in words}
            if len(seen) != len(words):
                raise IntegrityError(f"{path}: duplicate word_index in {item_id}/{sentence_id}")
            words.sort(key=lambda w: w[0])
            sents.append(
                Sentence(
                    sentence_id,
                    tuple(WordToken(idx, text, line_id) for idx, text, line_id in words),
                )
            )
        items.append(Item(item_id, tuple(sents)))
    return StimulusCorpus(tuple(items))


def load_cloze_responses(path: str | Path, corpus: StimulusCorpus) -> ClozeResponseSet:
    """Read line-delimited JSON records {item_id, sentence_id, word_index, responses}."""
    path = Path(path)
    responses: dict[ContextId, dict[str, int]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                cid = ContextId(
                    str(record["item_id"]),
                    str(record["sentence_id"]),
                    int(record["word_index"]),
                )
                raw = list(record["responses"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed record ({exc})") from None
            if cid not in corpus:
                raise ResolutionError(f"{path}:{lineno}: context {cid} not in corpus")
            if not raw:
                raise IntegrityError(f"{path}:{lineno}: empty response list for {cid}")
            counts: dict[str, int] = {}
            for response in raw:
                word = normalize_response(str(response))
                if word:
                    counts[word] = counts.get(word, 0) + 1
            if not counts:
                raise IntegrityError(f"{path}:{lineno}: only blank responses for {cid}")
            responses[cid] = counts
    return ClozeResponseSet(responses)


def load_rt_data(path: str | Path, corpus: StimulusCorpus, measure: str) -> list[RTObservation]:
    """Read an RT CSV and resolve each row against the corpus."""
    if measure not in MEASURES:
        raise IntegrityError(f"unknown measure {measure!r}")
    path = Path(path)
    observations = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                row_measure = row["measure"].strip()
            except (KeyError, AttributeError):
                raise ParseError(f"{path}:{lineno}: missing measure column") from None
            if row_measure != measure:
                continue
            try:
                cid = ContextId(
                    row["item_id"].strip(),
                    row["sentence_id"].strip(),
                    int(row["word_index"]),
                )
                subject = row["subject_id"].strip()
                rt = float(row["rt_ms"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed row ({exc})") from None
            if cid not in corpus:
                raise ResolutionError(f"{path}:{lineno}: context {cid} not in corpus")
            if rt <= 0:
                raise IntegrityError(f"{path}:{lineno}: non-positive rt {rt}")
            prev = _parse_flag(row.get("prev_fixated"))
            correct = _parse_flag(row.get("correct"))
            observations.append(RTObservation(subject, cid, measure, rt, prev, correct))
    return observations


def _parse_flag(value: str | None) -> bool | None:
    if value is None or value.strip() == "":
        return None
    return value.strip() not in ("0", "false", "False")


def filter_rt(
    observations: list[RTObservation],
    corpus: StimulusCorpus,
    config: FilterConfig = FilterConfig(),
) -> list[RTObservation]:
    """Drop edge words, over-threshold RTs, and (optionally) incorrect trials.

    Idempotent; surviving observations keep their input order.
    """
    max_rt = {"SPR": config.spr_max_ms, "GP": config.gp_max_ms, "FP": config.fp_max_ms}
    survivors = []
    for obs in observations:
        sent = corpus.sentence(obs.context.item_id, obs.context.sentence_id)
        idx = obs.context.word_index
        last = len(sent.words) - 1
        if config.drop_sentence_edges and (idx == 0 or idx == last):
            continue
        if config.drop_line_edges and sent.words[idx].line_id is not None:
            line = sent.words[idx].line_id
            line_indices = [w.word_index for w in sent.words if w.line_id == line]
            if idx == min(line_indices) or idx == max(line_indices):
                continue
        if obs.rt > max_rt[obs.measure]:
            continue
        if config.drop_incorrect_trials and obs.trial_correct is False:
            continue
        survivors.append(obs)
    return survivors
