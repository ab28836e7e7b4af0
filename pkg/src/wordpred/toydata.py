"""Bundled toy dataset and generators for self-contained runs.

The stimulus file ships with the package (12 sentences, 118 words over a
46-word vocabulary). Everything else — cloze responses, reading times,
a distribution dump, embeddings, and a frequency table — is generated
deterministically from a seed so the experiment drivers can run without
any external model or corpus.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
from pathlib import Path

import numpy as np

from .cloze import DEFAULT_SMOOTHING, DEFAULT_TRANSFORM, transform
from .corpus import ContextId, StimulusCorpus, load_stimuli
from .lmcore import (
    DEFAULT_EOT,
    Tokenization,
    TokenVocab,
    ToyNgramProvider,
    context_prefix,
    write_distribution_dump,
    write_embeddings,
    EmbeddingMatrix,
)
from .manip import FrequencyTable, sample_words
from .stats import unigram_surprisal

EMBEDDING_DIM = 12

# Pieces let two corpus words ("carpet", "window") exercise multi-token paths.
_PIECES = (" car", "pet", "ow")
_PUNCTUATION = (".", ",")
_MULTI_TOKEN_WORDS = {"carpet", "window"}


def toy_stimuli_path() -> Path:
    resource = importlib.resources.files("wordpred").joinpath("data/toy_stimuli.csv")
    with importlib.resources.as_file(resource) as path:
        return Path(path)


def load_toy_corpus() -> StimulusCorpus:
    return load_stimuli(toy_stimuli_path())


def toy_vocab() -> TokenVocab:
    corpus = load_toy_corpus()
    words = sorted(
        {w.text for item in corpus.items for s in item.sentences for w in s.words}
    )
    tokens = [f" {w}" for w in words if w not in _MULTI_TOKEN_WORDS]
    tokens.extend(_PIECES)
    tokens.extend(_PUNCTUATION)
    tokens.append(DEFAULT_EOT)
    return TokenVocab(tuple(tokens), whitespace_marker=" ", eot_token=DEFAULT_EOT)


def _emittable_words(vocab: TokenVocab) -> list[str]:
    """Closed set of words the sampling walk can emit over this vocabulary."""
    marker = vocab.whitespace_marker
    pieces = [t for t in vocab.tokens if not t.startswith(marker) and t not in _PUNCTUATION and t != vocab.eot_token]
    starts = [t.removeprefix(marker) for t in vocab.tokens]
    words = set(starts)
    for start in starts:
        for p1 in pieces:
            words.add(start + p1)
            for p2 in pieces:
                words.add(start + p1 + p2)
    return sorted(words)


def toy_segmentation(vocab: TokenVocab | None = None) -> Tokenization:
    """Greedy table covering corpus words and every emittable sample."""
    vocab = vocab or toy_vocab()
    corpus = load_toy_corpus()
    words = {w.text for item in corpus.items for s in item.sentences for w in s.words}
    words.update(_emittable_words(vocab))
    return Tokenization.greedy(vocab, sorted(words))


def build_toy_provider(seed: int = 0) -> ToyNgramProvider:
    """Seeded bigram provider over the toy vocabulary.

    Piece boosts steer " car" toward "pet" and " wind" toward "ow" so the
    multi-token corpus words have non-trivial probability. Corpus bigram
    boosts make each attested continuation likely given the preceding
    word, so target words are predictable from their contexts rather
    than lost in the random tail.
    """
    vocab = toy_vocab()
    segmentation = toy_segmentation(vocab)
    boosts: dict[tuple[str, str], float] = {(" car", "pet"): 3.0, (" wind", "ow"): 3.0}
    corpus = load_toy_corpus()
    for item in corpus.items:
        for sent in item.sentences:
            for prev, nxt in zip(sent.words, sent.words[1:]):
                prev_token = vocab.tokens[segmentation.segment(prev.text)[-1]]
                next_token = vocab.tokens[segmentation.segment(nxt.text)[0]]
                key = (prev_token, next_token)
                boosts[key] = boosts.get(key, 0.0) + 0.35
    provider = ToyNgramProvider.seeded(
        vocab,
        order=2,
        seed=seed,
        concentration=0.8,
        boosts=boosts,
        segmentation=segmentation,
    )
    return provider


def _interior_contexts(corpus: StimulusCorpus) -> list[ContextId]:
    contexts = []
    for item in corpus.items:
        for sent in item.sentences:
            for word in sent.words[1:-1]:
                contexts.append(ContextId(item.item_id, sent.sentence_id, word.word_index))
    return contexts


def make_toy_bundle(out_dir: str | Path, seed: int = 0) -> dict[str, Path]:
    """Write a complete, deterministic input bundle into out_dir.

    Returns the path of every file written: stimuli, cloze responses,
    reading times (SPR + FP + GP), a PDLM distribution dump covering all
    interior contexts, PDEM embeddings, and a frequency table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    corpus = load_toy_corpus()
    vocab = toy_vocab()
    segmentation = toy_segmentation(vocab)
    provider = build_toy_provider(seed)
    contexts = _interior_contexts(corpus)

    paths = {"stimuli": out_dir / "stimuli.csv"}
    paths["stimuli"].write_bytes(toy_stimuli_path().read_bytes())

    # frequency table over every word the corpus or the sampler can produce
    freq_words = sorted(set(segmentation.words()))
    per_billion = {
        w: float(10 ** rng.uniform(2.0, 6.5)) for w in freq_words
    }
    paths["freq"] = out_dir / "freq.csv"
    with paths["freq"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word", "per_billion"])
        for word in freq_words:
            writer.writerow([word, f"{per_billion[word]:.4f}"])
    freq = FrequencyTable(per_billion)

    # cloze responses: provider samples, which keeps them segmentable
    paths["cloze"] = out_dir / "cloze.jsonl"
    cloze_counts: dict[ContextId, dict[str, int]] = {}
    with paths["cloze"].open("w", encoding="utf-8") as fh:
        for i, cid in enumerate(contexts):
            n = int(rng.integers(25, 55))
            samples = sample_words(
                provider, context_prefix(corpus, segmentation, cid), n, seed=seed * 7919 + i
            )
            cloze_counts[cid] = dict(samples.counts)
            record = {
                "item_id": cid.item_id,
                "sentence_id": cid.sentence_id,
                "word_index": cid.word_index,
                "responses": samples.words(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    # reading times driven by length, position, frequency, and cloze surprisal^2
    paths["rt"] = out_dir / "rt.csv"
    interior = set(contexts)
    with paths["rt"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["subject_id", "item_id", "sentence_id", "word_index", "measure", "rt_ms", "prev_fixated", "correct"]
        )
        plans = [("SPR", [f"s{i}" for i in range(1, 9)]), ("FP", [f"e{i}" for i in range(1, 7)]), ("GP", [f"e{i}" for i in range(1, 7)])]
        for measure, subjects in plans:
            intercepts = {s: rng.normal(0.0, 25.0) for s in subjects}
            base = {"SPR": 180.0, "FP": 220.0, "GP": 250.0}[measure]
            for subject in subjects:
                for item in corpus.items:
                    for sent in item.sentences:
                        for word in sent.words:
                            cid = ContextId(item.item_id, sent.sentence_id, word.word_index)
                            rt = (
                                base
                                + 3.0 * len(word.text)
                                + 1.2 * word.word_index
                                + 2.5 * unigram_surprisal(freq, word.text)
                                + intercepts[subject]
                                + rng.normal(0.0, 40.0)
                            )
                            if cid in interior:
                                n = sum(cloze_counts[cid].values())
                                count = cloze_counts[cid].get(word.text, 0)
                                p = (count + 1) / (n + DEFAULT_SMOOTHING)
                                rt += 1.4 * transform(p, DEFAULT_TRANSFORM)
                            rt = max(rt, 25.0)
                            if rng.random() < 0.01:  # a few over-threshold outliers
                                rt += 4000.0
                            prev = "" if measure == "SPR" else str(int(rng.random() < 0.85))
                            correct = str(int(rng.random() < 0.97))
                            writer.writerow(
                                [subject, cid.item_id, cid.sentence_id, cid.word_index,
                                 measure, f"{rt:.2f}", prev, correct]
                            )

    # distribution dump: one row per interior context plus the extended
    # prefixes needed to score each target word and its boundary mass
    paths["dump"] = out_dir / "dump.pdlm"
    rows: dict[tuple[int, ...], tuple[ContextId | None, tuple[int, ...]]] = {}
    for cid in contexts:
        prefix = context_prefix(corpus, segmentation, cid)
        rows.setdefault(prefix, (cid, prefix))
        tokens = segmentation.segment(corpus.word(cid).text)
        for i in range(1, len(tokens) + 1):
            extended = prefix + tokens[:i]
            rows.setdefault(extended, (None, extended))
    write_distribution_dump(
        paths["dump"],
        vocab,
        segmentation,
        (
            (cid, prefix, provider.next_distribution(prefix).logprobs)
            for prefix, (cid, _) in sorted(rows.items(), key=lambda kv: kv[0])
        ),
    )

    # embeddings
    paths["embeddings"] = out_dir / "embeddings.pdem"
    vectors = rng.normal(0.0, 1.0, size=(len(vocab), EMBEDDING_DIM))
    write_embeddings(paths["embeddings"], EmbeddingMatrix(vectors))

    return paths
