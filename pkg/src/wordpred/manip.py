"""Hypothesis-driven manipulations of LM probabilities.

Three interventions lower an LM distribution toward cloze-like behavior:
resolution matching by sampling (h1), semantic coarsening by vocabulary
clustering (h2), and frequency truncation with renormalization (h3).
Similarity-adjusted scoring (sa) weights alternatives' probabilities by
their embedding similarity to the observed word.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ContextId
from .errors import DegenerateThresholdError, IntegrityError, TokenizationError
from .lmcore import (
    DistributionProvider,
    EmbeddingMatrix,
    TokenDistribution,
    Tokenization,
    is_word_end,
)

KMEANS_MAX_ITER = 300
PAPER_CLUSTER_COUNTS = (20, 40, 80, 100, 500, 1000)
PAPER_FREQ_THRESHOLDS = (1e3, 1e4, 1e5)


@dataclass(frozen=True)
class SampleSet:
    """Multiset of sampled word strings for one context."""

    context: ContextId | tuple[int, ...]
    counts: dict[str, int]
    n: int
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.n:
            raise IntegrityError("sample multiset cardinality must equal N")

    def count(self, word: str) -> int:
        return self.counts.get(word, 0)

    def words(self) -> list[str]:
        out = []
        for word in sorted(self.counts):
            out.extend([word] * self.counts[word])
        return out


def sample_words(
    provider: DistributionProvider,
    prefix: Sequence[int],
    n: int,
    seed: int = 0,
) -> SampleSet:
    """Draw N word samples by walking token draws to the next boundary.

    Each draw samples up to four tokens: the word is the material before
    the first boundary-marking token among the second through fourth
    draws, or the first three tokens' concatenation if no boundary
    appears. Leading whitespace is stripped from emitted words.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    vocab = provider.vocab
    token_ids = np.arange(len(vocab))
    counts: dict[str, int] = {}

    def draw(pfx: list[int]) -> int:
        probs = provider.next_distribution(pfx).probs()
        return int(rng.choice(token_ids, p=probs / probs.sum()))

    base = list(prefix)
    for _ in range(n):
        first = draw(base)
        emitted = [first]
        for _step in range(3):
            nxt = draw(base + emitted)
            if is_word_end(vocab.tokens[nxt], vocab):
                break
            if _step < 2:
                emitted.append(nxt)
            # the fourth draw never extends the word
        word = vocab.surface(emitted)
        word = word.removeprefix(vocab.whitespace_marker)
        counts[word] = counts.get(word, 0) + 1
    return SampleSet(tuple(prefix), counts, n, seed)


def h1_probability(samples: SampleSet, word: str, s: int) -> float:
    """Resolution-matched probability (C_w + 1) / (N + S) from samples."""
    if s < 1:
        raise ValueError(f"smoothing factor must be >= 1, got {s}")
    return (samples.count(word) + 1) / (samples.n + s)


def write_sample_sets(path: str | Path, sample_sets: Iterable[SampleSet]) -> None:
    """Line-delimited records {context|prefix, seed, samples:[...]}"""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for samples in sample_sets:
            record: dict = {"seed": samples.seed, "samples": samples.words()}
            if isinstance(samples.context, ContextId):
                record["context"] = {
                    "item": samples.context.item_id,
                    "sentence": samples.context.sentence_id,
                    "word_index": samples.context.word_index,
                }
            else:
                record["prefix"] = list(samples.context)
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_sample_sets(path: str | Path) -> list[SampleSet]:
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "context" in record:
                ctx = record["context"]
                context: ContextId | tuple[int, ...] = ContextId(
                    str(ctx["item"]), str(ctx["sentence"]), int(ctx["word_index"])
                )
            else:
                context = tuple(record["prefix"])
            counts: dict[str, int] = {}
            for word in record["samples"]:
                counts[word] = counts.get(word, 0) + 1
            out.append(SampleSet(context, counts, len(record["samples"]), int(record["seed"])))
    return out


@dataclass
class ClusterAssignment:
    """Hard k-means clustering of the token vocabulary."""

    k: int
    assignment: np.ndarray  # token index -> cluster id
    centroids: np.ndarray  # (k, d)
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.assignment.min() < 0 or self.assignment.max() >= self.k:
            raise IntegrityError("cluster ids must lie in [0, k)")

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster_id)


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared euclidean distances without forming n*k*d temporaries
    p2 = np.sum(points**2, axis=1)[:, None]
    c2 = np.sum(centroids**2, axis=1)[None, :]
    return np.maximum(p2 + c2 - 2.0 * points @ centroids.T, 0.0)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each new centroid drawn with prob ~ D^2."""
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = _squared_distances(points, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = points[rng.integers(n)]
        else:
            centroids[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _squared_distances(points, centroids[j : j + 1]).ravel())
    return centroids


def kmeans_cluster(
    embeddings: EmbeddingMatrix | np.ndarray,
    k: int,
    runs: int = 1,
    seed: int = 0,
) -> ClusterAssignment:
    """Lloyd's algorithm, best of `runs` restarts by inertia.

    Iterates to an assignment fixed point (at most 300 iterations); empty
    clusters are re-seeded from the point farthest from its centroid.
    Within-run inertia is checked to be non-increasing.
    """
    points = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings, dtype=float)
    n_distinct = len(np.unique(points, axis=0))
    if k < 1 or k > n_distinct:
        raise ValueError(f"k={k} must be in [1, {n_distinct}] (distinct rows)")
    rng = np.random.default_rng(seed)
    best: ClusterAssignment | None = None
    for _run in range(runs):
        centroids = _seed_centroids(points, k, rng)
        assignment = np.full(len(points), -1)
        history: list[float] = []
        converged = False
        for _it in range(KMEANS_MAX_ITER):
            d2 = _squared_distances(points, centroids)
            new_assignment = np.argmin(d2, axis=1)
            inertia = float(d2[np.arange(len(points)), new_assignment].sum())
            if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
                raise IntegrityError("k-means inertia increased across iterations")
            history.append(inertia)
            if np.array_equal(new_assignment, assignment):
                converged = True
                break
            assignment = new_assignment
            own = d2[np.arange(len(points)), assignment].copy()
            for j in range(k):
                members = points[assignment == j]
                if len(members) == 0:
                    farthest = int(np.argmax(own))
                    centroids[j] = points[farthest]
                    own[farthest] = -1.0
                else:
                    centroids[j] = members.mean(axis=0)
        if not converged:
            # iteration cap hit; take one last consistent assignment pass
            d2 = _squared_distances(points, centroids)
            assignment = np.argmin(d2, axis=1)
            history.append(float(d2[np.arange(len(points)), assignment].sum()))
        result = ClusterAssignment(k, assignment, centroids.copy(), history[-1], history)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


def cluster_masses(dist: TokenDistribution, clusters: ClusterAssignment) -> np.ndarray:
    """Total probability per cluster; sums to one."""
    probs = dist.probs()
    return np.bincount(clusters.assignment, weights=probs, minlength=clusters.k)


def _conditional(
    dist: TokenDistribution,
    provider: DistributionProvider | None,
    consumed: list[int],
) -> TokenDistribution:
    if not consumed:
        return dist
    if provider is None:
        raise TokenizationError(
            "multi-token word needs a provider for conditional distributions"
        )
    if not isinstance(dist.context, tuple):
        raise IntegrityError("distribution context must be a token prefix")
    return provider.next_distribution(list(dist.context) + consumed)


def h2_probability(
    dist: TokenDistribution,
    clusters: ClusterAssignment,
    word: str,
    segmentation: Tokenization,
    provider: DistributionProvider | None = None,
) -> float:
    """Probability of the word's cluster(s): total mass of co-clustered tokens.

    Multi-token words take the product of per-token cluster probabilities,
    each under the appropriate conditional distribution.
    """
    tokens = segmentation.segment(word)
    result = 1.0
    consumed: list[int] = []
    for token_id in tokens:
        step = _conditional(dist, provider, consumed)
        masses = cluster_masses(step, clusters)
        result *= float(masses[clusters.assignment[token_id]])
        consumed.append(token_id)
    return result


class FrequencyTable:
    """Word -> occurrences per billion words; absent words count as zero."""

    def __init__(self, per_billion: Mapping[str, float], coverage_note: str = ""):
        for word, value in per_billion.items():
            if not np.isfinite(value) or value < 0:
                raise IntegrityError(f"bad frequency for {word!r}: {value}")
        self._per_billion = dict(per_billion)
        self.coverage_note = coverage_note

    def per_billion(self, word: str) -> float:
        return self._per_billion.get(word, 0.0)

    def __len__(self) -> int:
        return len(self._per_billion)

    @classmethod
    def from_csv(cls, path: str | Path) -> "FrequencyTable":
        path = Path(path)
        table: dict[str, float] = {}
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                table[row["word"].strip()] = float(row["per_billion"])
        return cls(table, coverage_note=f"loaded from {path.name}")


def frequent_token_ids(
    vocab_tokens: Sequence[str],
    freq: FrequencyTable,
    threshold: float,
    whitespace_marker: str = " ",
) -> np.ndarray:
    """Token indices whose (marker-stripped) surface meets the threshold."""
    if threshold <= 0:
        raise ValueError("frequency threshold must be positive")
    ids = [
        i
        for i, token in enumerate(vocab_tokens)
        if freq.per_billion(token.removeprefix(whitespace_marker)) >= threshold
    ]
    if not ids:
        raise DegenerateThresholdError(
            f"threshold {threshold:g} leaves no frequent tokens"
        )
    return np.array(ids, dtype=int)


def h3_probability(
    dist: TokenDistribution,
    freq: FrequencyTable,
    threshold: float,
    word: str,
    segmentation: Tokenization,
    provider: DistributionProvider | None = None,
) -> float:
    """Frequency-truncated probability with renormalization and smoothing.

    Frequent tokens share |V_F|/(|V_F|+1) of the mass in their original
    proportions; every infrequent token gets 1/(|V_F|+1). Multi-token
    words multiply per-token values.
    """
    vocab = segmentation.vocab
    frequent = frequent_token_ids(vocab.tokens, freq, threshold, vocab.whitespace_marker)
    in_frequent = np.zeros(len(vocab), dtype=bool)
    in_frequent[frequent] = True
    n_f = len(frequent)
    smoothing = n_f / (n_f + 1)

    tokens = segmentation.segment(word)
    result = 1.0
    consumed: list[int] = []
    for token_id in tokens:
        step = _conditional(dist, provider, consumed)
        if in_frequent[token_id]:
            probs = step.probs()
            result *= float(probs[token_id] / probs[frequent].sum()) * smoothing
        else:
            result *= 1.0 / (n_f + 1)
        consumed.append(token_id)
    return result


@dataclass(frozen=True)
class SimilarityConfig:
    """How similarity-adjusted scores weight and aggregate alternatives.

    similarity "unit_interval" maps cosine to [0, 1] via (1 + cos) / 2;
    "response_normalized" additionally rescales the weights to sum to one
    over the response multiset. Aggregation divides by |R| ("mean") or
    keeps the literal sum ("sum"). Word embeddings are mean-pooled over
    token embeddings either way.
    """

    similarity: str = "unit_interval"
    aggregation: str = "mean"

    def __post_init__(self):
        if self.similarity not in ("unit_interval", "response_normalized"):
            raise ValueError(f"unknown similarity kind {self.similarity!r}")
        if self.aggregation not in ("mean", "sum"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


def pooled_embedding(
    word: str, embeddings: EmbeddingMatrix, segmentation: Tokenization
) -> np.ndarray:
    """Mean of the word's token embedding rows."""
    tokens = segmentation.segment(word)
    return embeddings.vectors[list(tokens)].mean(axis=0)


def _unit_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cannot compute similarity with a zero embedding")
    return (1.0 + float(a @ b) / (na * nb)) / 2.0


def sa_probability(
    responses: Sequence[str] | Mapping[str, int],
    provider: DistributionProvider,
    prefix: Sequence[int],
    embeddings: EmbeddingMatrix,
    word: str,
    segmentation: Tokenization,
    config: SimilarityConfig = SimilarityConfig(),
) -> float:
    """Similarity-weighted average probability of the response alternatives.

    Each response word contributes z(word, response) times its
    boundary-corrected probability given the context; invariant to
    permutation of the response multiset.
    """
    from .lmcore import word_probability

    if isinstance(responses, Mapping):
        counts = dict(responses)
    else:
        counts = {}
        for response in responses:
            counts[response] = counts.get(response, 0) + 1
    total = sum(counts.values())
    if total < 1:
        raise ValueError("response multiset must be nonempty")

    target_vec = pooled_embedding(word, embeddings, segmentation)
    weights = {}
    for response in counts:
        weights[response] = _unit_similarity(
            target_vec, pooled_embedding(response, embeddings, segmentation)
        )
    if config.similarity == "response_normalized":
        norm = sum(weights[r] * c for r, c in counts.items())
        if norm <= 0:
            raise ValueError("degenerate similarity normalization")
        weights = {r: w / norm for r, w in weights.items()}

    score = 0.0
    for response, count in counts.items():
        prob = word_probability(provider, prefix, response, segmentation)
        score += count * weights[response] * prob
    if config.similarity == "unit_interval" and config.aggregation == "mean":
        score /= total
    return score
