"""Token vocabularies, distributions, and word-probability aggregation.

Distributions are log-probability vectors in nats over a fixed token
vocabulary. Word probabilities multiply per-token conditionals and add
the mass of word-boundary continuations, so that subword products form a
proper distribution over words. Conversion to bits happens only in the
predictor transforms.
"""

from __future__ import annotations

import base64
import json
import unicodedata
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .corpus import ContextId, StimulusCorpus
from .errors import CoverageError, FormatError, IntegrityError, TokenizationError

PDLM_MAGIC = "PDLM"
PDEM_MAGIC = "PDEM"
DEFAULT_EOT = "<|endoftext|>"

NORMALIZATION_TOL = 1e-4  # distributions must exp-sum to 1 within this
RENORMALIZE_LIMIT = 1e-3  # dump rows off by more than this are rejected


@dataclass(frozen=True)
class TokenVocab:
    """Ordered token inventory; surface forms keep their whitespace marker."""

    tokens: tuple[str, ...]
    whitespace_marker: str = " "
    eot_token: str | None = DEFAULT_EOT

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise IntegrityError("vocabulary tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise TokenizationError(f"token {token!r} not in vocabulary") from None

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def surface(self, ids: Sequence[int]) -> str:
        return "".join(self.tokens[i] for i in ids)


def _is_punctuation(token: str) -> bool:
    return bool(token) and all(unicodedata.category(ch).startswith("P") for ch in token)


def is_word_end(token: str, vocab: TokenVocab | None = None) -> bool:
    """Whether a token marks a word boundary for the preceding material.

    True for tokens starting with the whitespace marker, tokens made
    entirely of punctuation, and the end-of-text token.
    """
    marker = vocab.whitespace_marker if vocab is not None else " "
    eot = vocab.eot_token if vocab is not None else DEFAULT_EOT
    if eot is not None and token == eot:
        return True
    return token.startswith(marker) or _is_punctuation(token)


def boundary_token_ids(vocab: TokenVocab) -> np.ndarray:
    """Indices of all boundary-marking tokens."""
    return np.array(
        [i for i, t in enumerate(vocab.tokens) if is_word_end(t, vocab)], dtype=int
    )


@dataclass(frozen=True)
class TokenDistribution:
    """Log-probabilities (nats) over the vocabulary for one context."""

    context: ContextId | tuple[int, ...] | None
    logprobs: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.logprobs, dtype=float)
        object.__setattr__(self, "logprobs", lp)
        total = float(logsumexp(lp))
        if abs(total) > NORMALIZATION_TOL:
            raise IntegrityError(f"distribution not normalized: logsumexp={total:.2e}")

    def logprob(self, token_id: int) -> float:
        return float(self.logprobs[token_id])

    def prob(self, token_id: int) -> float:
        return float(np.exp(self.logprobs[token_id]))

    def probs(self) -> np.ndarray:
        return np.exp(self.logprobs)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Static token embeddings, one row per vocabulary entry."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        if vec.ndim != 2:
            raise IntegrityError("embeddings must be a 2-D matrix")
        if not np.all(np.isfinite(vec)):
            raise IntegrityError("embeddings contain non-finite entries")
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


class Tokenization:
    """Word -> token-id segmentation table.

    Detokenizing an entry reproduces the word under the leading-whitespace
    convention (the first token may carry the marker).
    """

    def __init__(self, vocab: TokenVocab, table: Mapping[str, Sequence[int]]):
        self.vocab = vocab
        self._table = {w: tuple(ids) for w, ids in table.items()}
        marker = vocab.whitespace_marker
        for word, ids in self._table.items():
            surface = vocab.surface(ids)
            if surface not in (word, marker + word):
                raise IntegrityError(
                    f"segmentation of {word!r} detokenizes to {surface!r}"
                )

    def __contains__(self, word: str) -> bool:
        return word in self._table

    def segment(self, word: str) -> tuple[int, ...]:
        try:
            return self._table[word]
        except KeyError:
            raise TokenizationError(f"no segmentation for word {word!r}") from None

    def words(self) -> Iterable[str]:
        return self._table.keys()

    def as_dict(self) -> dict[str, list[int]]:
        return {w: list(ids) for w, ids in self._table.items()}

    @classmethod
    def greedy(cls, vocab: TokenVocab, words: Iterable[str]) -> "Tokenization":
        """Build a table by greedy longest-match over the vocabulary.

        The marker-prefixed form is tried first; words only expressible
        without the leading marker fall back to the bare form.
        """
        marker = vocab.whitespace_marker
        by_length = sorted(vocab.tokens, key=len, reverse=True)

        def segment(text: str) -> list[int] | None:
            ids: list[int] = []
            while text:
                for token in by_length:
                    if text.startswith(token):
                        ids.append(vocab.index(token))
                        text = text[len(token):]
                        break
                else:
                    return None
            return ids

        table = {}
        for word in words:
            ids = segment(marker + word)
            if ids is None:
                ids = segment(word)
            if ids is None:
                raise TokenizationError(f"cannot segment {word!r} greedily")
            table[word] = tuple(ids)
        return cls(vocab, table)


class DistributionProvider(ABC):
    """Source of next-token distributions for arbitrary token prefixes.

    Implementations must be deterministic for identical inputs and safe
    for concurrent read-only queries.
    """

    vocab: TokenVocab
    segmentation: Tokenization | None = None

    @abstractmethod
    def next_distribution(self, prefix: Sequence[int]) -> TokenDistribution:
        """Distribution over the next token given the prefix."""

    def score(self, prefix: Sequence[int], continuation: Sequence[int]) -> float:
        """Log-probability (nats) of the continuation given the prefix."""
        prefix = list(prefix)
        total = 0.0
        for token_id in continuation:
            total += self.next_distribution(prefix).logprob(token_id)
            prefix.append(token_id)
        return total


def word_probability(
    provider: DistributionProvider,
    prefix: Sequence[int],
    word: str,
    segmentation: Tokenization | None = None,
) -> float:
    """Boundary-corrected probability of a word given a token prefix.

    Multiplies the word's per-token conditionals and the total mass of
    boundary-marking continuations after its last token. The result never
    exceeds the bare token product.
    """
    seg = segmentation or provider.segmentation
    if seg is None:
        raise TokenizationError("no segmentation table available")
    tokens = seg.segment(word)
    boundary = boundary_token_ids(provider.vocab)
    prefix = list(prefix)
    log_p = 0.0
    for token_id in tokens:
        log_p += provider.next_distribution(prefix).logprob(token_id)
        prefix.append(token_id)
    after = provider.next_distribution(prefix)
    log_boundary = float(logsumexp(after.logprobs[boundary]))
    return float(np.exp(log_p + log_boundary))


def context_prefix(
    corpus: StimulusCorpus, segmentation: Tokenization, context: ContextId
) -> tuple[int, ...]:
    """Token prefix for a context: the segmented words before the target."""
    sentence = corpus.sentence(context.item_id, context.sentence_id)
    prefix: list[int] = []
    for word in sentence.words[: context.word_index]:
        prefix.extend(segmentation.segment(word.text))
    return tuple(prefix)


@dataclass
class DistributionDump:
    """Parsed contents of a PDLM file."""

    vocab: TokenVocab
    segmentation: Tokenization
    by_context: dict[ContextId, TokenDistribution] = field(default_factory=dict)
    by_prefix: dict[tuple[int, ...], TokenDistribution] = field(default_factory=dict)
    context_prefixes: dict[ContextId, tuple[int, ...]] = field(default_factory=dict)


def _decode_logprobs(blob: str, dim: int) -> np.ndarray:
    raw = base64.b64decode(blob.encode("ascii"))
    if len(raw) != 4 * dim:
        raise FormatError(f"logprob row has {len(raw)} bytes, expected {4 * dim}")
    return np.frombuffer(raw, dtype="<f4").astype(float)


def _encode_logprobs(logprobs: np.ndarray) -> str:
    return base64.b64encode(
        np.asarray(logprobs, dtype="<f4").tobytes()
    ).decode("ascii")


def load_distribution_dump(
    path: str | Path, corpus: StimulusCorpus | None = None
) -> DistributionDump:
    """Read a PDLM dump; rows are validated and renormalized if slightly off."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise FormatError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad header ({exc})") from None
        if header.get("magic") != PDLM_MAGIC or header.get("version") != 1:
            raise FormatError(f"{path}: bad magic/version in header")
        vocab = TokenVocab(
            tuple(header["vocab"]),
            whitespace_marker=header.get("whitespace_marker", " "),
            eot_token=header.get("eot_token", DEFAULT_EOT),
        )
        dim = int(header["dim_v"])
        if dim != len(vocab):
            raise FormatError(f"{path}: dim_v={dim} but vocab has {len(vocab)} tokens")
        segmentation = Tokenization(vocab, header.get("segmentation", {}))

        dump = DistributionDump(vocab, segmentation)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                logprobs = _decode_logprobs(row["logprobs"], dim)
            except (KeyError, json.JSONDecodeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad row ({exc})") from None
            total = float(logsumexp(logprobs))
            if abs(total) > RENORMALIZE_LIMIT:
                raise IntegrityError(
                    f"{path}:{lineno}: row off normalization by {total:.2e}"
                )
            if abs(total) > NORMALIZATION_TOL:
                logprobs = logprobs - total
            context = None
            if "context" in row:
                ctx = row["context"]
                context = ContextId(
                    str(ctx["item"]), str(ctx["sentence"]), int(ctx["word_index"])
                )
                if corpus is not None and context not in corpus:
                    raise IntegrityError(f"{path}:{lineno}: unknown context {context}")
            prefix = tuple(row["prefix"]) if "prefix" in row else None
            if context is None and prefix is None:
                raise FormatError(f"{path}:{lineno}: row has neither context nor prefix")
            dist = TokenDistribution(context if context is not None else prefix, logprobs)
            if context is not None:
                dump.by_context[context] = dist
                if prefix is not None:
                    dump.context_prefixes[context] = prefix
            if prefix is not None:
                dump.by_prefix[prefix] = dist
    return dump


def write_distribution_dump(
    path: str | Path,
    vocab: TokenVocab,
    segmentation: Tokenization,
    rows: Iterable[tuple[ContextId | None, tuple[int, ...] | None, np.ndarray]],
) -> None:
    """Write a PDLM dump; each row carries a context, a prefix, or both."""
    path = Path(path)
    header = {
        "magic": PDLM_MAGIC,
        "version": 1,
        "vocab": list(vocab.tokens),
        "dim_v": len(vocab),
        "segmentation": segmentation.as_dict(),
        "whitespace_marker": vocab.whitespace_marker,
        "eot_token": vocab.eot_token,
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for context, prefix, logprobs in rows:
            row: dict = {"logprobs": _encode_logprobs(logprobs)}
            if context is not None:
                row["context"] = {
                    "item": context.item_id,
                    "sentence": context.sentence_id,
                    "word_index": context.word_index,
                }
            if prefix is not None:
                row["prefix"] = list(prefix)
            fh.write(json.dumps(row, sort_keys=True) + "\n")


class ReplayProvider(DistributionProvider):
    """Serves stored dump rows; unseen prefixes raise a coverage error."""

    def __init__(self, dump: DistributionDump):
        self.vocab = dump.vocab
        self.segmentation = dump.segmentation
        self._rows = dump.by_prefix

    def next_distribution(self, prefix: Sequence[int]) -> TokenDistribution:
        key = tuple(prefix)
        if key not in self._rows:
            raise CoverageError(f"prefix {key} not covered by the dump")
        return self._rows[key]


def replay_provider(dump: DistributionDump) -> ReplayProvider:
    return ReplayProvider(dump)


class ToyNgramProvider(DistributionProvider):
    """Deterministic n-gram provider over a small vocabulary (test double).

    The table maps conditioning suffixes (length < order) to probability
    rows; lookups back off to shorter suffixes and finally to the empty
    key, which must be present.
    """

    MAX_VOCAB = 64

    def __init__(
        self,
        vocab: TokenVocab,
        table: Mapping[tuple[int, ...], np.ndarray],
        order: int = 2,
        segmentation: Tokenization | None = None,
    ):
        if len(vocab) > self.MAX_VOCAB:
            raise IntegrityError(f"toy vocabulary limited to {self.MAX_VOCAB} tokens")
        if () not in table:
            raise IntegrityError("toy table must include the empty-suffix row")
        self.vocab = vocab
        self.segmentation = segmentation
        self.order = order
        self._log_table: dict[tuple[int, ...], np.ndarray] = {}
        for key, row in table.items():
            row = np.asarray(row, dtype=float)
            if row.shape != (len(vocab),) or abs(row.sum() - 1.0) > NORMALIZATION_TOL:
                raise IntegrityError(f"toy table row for {key} is not normalized")
            with np.errstate(divide="ignore"):  # zero entries are legitimate
                self._log_table[tuple(key)] = np.log(row)

    def next_distribution(self, prefix: Sequence[int]) -> TokenDistribution:
        prefix = tuple(prefix)
        suffix = prefix[-(self.order - 1):] if self.order > 1 else ()
        while suffix not in self._log_table:
            suffix = suffix[1:]
        return TokenDistribution(prefix, self._log_table[suffix])

    @classmethod
    def seeded(
        cls,
        vocab: TokenVocab,
        order: int = 2,
        seed: int = 0,
        concentration: float = 1.0,
        boosts: Mapping[tuple[str, str], float] | None = None,
        segmentation: Tokenization | None = None,
    ) -> "ToyNgramProvider":
        """Random but reproducible table: one Dirichlet row per suffix.

        `boosts` adds probability mass to (previous token, next token)
        pairs before renormalization, to shape bigram structure.
        """
        rng = np.random.default_rng(seed)
        size = len(vocab)
        table: dict[tuple[int, ...], np.ndarray] = {
            (): rng.dirichlet(np.full(size, concentration))
        }
        if order > 1:
            for prev in range(size):
                row = rng.dirichlet(np.full(size, concentration))
                if boosts:
                    for (prev_tok, next_tok), mass in boosts.items():
                        if vocab.index(prev_tok) == prev:
                            row[vocab.index(next_tok)] += mass
                    row = row / row.sum()
                table[(prev,)] = row
        return cls(vocab, table, order=order, segmentation=segmentation)


def toy_provider(
    vocab: TokenVocab,
    table: Mapping[tuple[int, ...], np.ndarray],
    order: int = 2,
    segmentation: Tokenization | None = None,
) -> ToyNgramProvider:
    return ToyNgramProvider(vocab, table, order=order, segmentation=segmentation)


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read a PDEM file: one JSON header line, then raw little-endian f32."""
    path = Path(path)
    with path.open("rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad header ({exc})") from None
        if header.get("magic") != PDEM_MAGIC or header.get("version") != 1:
            raise FormatError(f"{path}: bad magic/version in header")
        dim_v, dim_d = int(header["dim_v"]), int(header["dim_d"])
        raw = fh.read()
    expected = 4 * dim_v * dim_d
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, got {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f4").astype(float).reshape(dim_v, dim_d)
    return EmbeddingMatrix(matrix)


def write_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    path = Path(path)
    header = {
        "magic": PDEM_MAGIC,
        "version": 1,
        "dim_v": len(matrix),
        "dim_d": matrix.dim,
    }
    with path.open("wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(np.asarray(matrix.vectors, dtype="<f4").tobytes())
