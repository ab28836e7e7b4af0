import numpy as np
import pytest

from wordpred.corpus import load_stimuli
from wordpred.lmcore import Tokenization, TokenVocab, ToyNgramProvider
from wordpred.toydata import make_toy_bundle


@pytest.fixture(scope="session")
def toy_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    return make_toy_bundle(out, seed=0)


@pytest.fixture(scope="session")
def toy_corpus(toy_bundle):
    return load_stimuli(toy_bundle["stimuli"])


def tiny_vocab() -> TokenVocab:
    """Ten tokens: six word starts, two continuation pieces, '.', end-of-text."""
    tokens = (" the", " cat", " dog", " car", " sun", " mat", "pet", "ow", ".", "<|endoftext|>")
    return TokenVocab(tokens, whitespace_marker=" ", eot_token="<|endoftext|>")


def tiny_provider(seed: int = 0, concentration: float = 1.5) -> ToyNgramProvider:
    vocab = tiny_vocab()
    words = [t.removeprefix(" ") for t in vocab.tokens if t not in ("<|endoftext|>",)]
    extra = [a + b for a in words for b in ("pet", "ow")]
    extra += [a + b + c for a in words for b in ("pet", "ow") for c in ("pet", "ow")]
    segmentation = Tokenization.greedy(vocab, sorted(set(words + extra)))
    return ToyNgramProvider.seeded(
        vocab, order=2, seed=seed, concentration=concentration, segmentation=segmentation
    )


@pytest.fixture
def small_provider():
    return tiny_provider(seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
