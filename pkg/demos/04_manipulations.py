"""The three distribution manipulations and similarity-adjusted scoring.

Each manipulation removes one capability from a high-resolution
distribution: h1 lowers resolution by sampling, h2 merges semantically
close tokens, h3 deletes low-frequency tokens and renormalizes.
"""

import numpy as np

from wordpred import (
    FrequencyTable,
    h1_probability,
    h2_probability,
    h3_probability,
    kmeans_cluster,
    sa_probability,
    sample_words,
    word_probability,
)
from wordpred.lmcore import EmbeddingMatrix
from wordpred.toydata import build_toy_provider

provider = build_toy_provider(seed=0)
vocab, seg = provider.vocab, provider.segmentation
prefix = tuple(seg.segment("the"))
word = "village"
exact = word_probability(provider, prefix, word)
print(f"P({word!r} | ' the') = {exact:.5f}  (boundary-corrected)\n")

# h1: resolution matching -- probabilities from 40 samples, like a cloze study
samples = sample_words(provider, prefix, n=40, seed=3)
p1 = h1_probability(samples, word, s=200)
print(f"h1 from N=40 samples, S=200: {p1:.5f}  ({samples.count(word)} hits)")

big = sample_words(provider, prefix, n=20000, seed=3)
print(f"h1 from N=20000 samples:     {h1_probability(big, word, 200):.5f}  (converges)\n")

# h2: semantic coarsening via k-means over token embeddings
rng = np.random.default_rng(0)
embeddings = EmbeddingMatrix(rng.normal(size=(len(vocab), 12)))
dist = provider.next_distribution(prefix)
for k in (4, 16, len(vocab)):
    clusters = kmeans_cluster(embeddings, k=k, runs=3, seed=1)
    p2 = h2_probability(dist, clusters, word, seg, provider)
    print(f"h2 with k={k:2d} clusters: {p2:.5f}")
print("k = |V| reproduces the raw token probability exactly\n")

# h3: frequency truncation
freq = FrequencyTable(
    {w: float(10 ** rng.uniform(2, 6.5)) for w in seg.words()}
)
for threshold in (1e3, 1e4, 1e5):
    p3 = h3_probability(dist, freq, threshold, word, seg, provider)
    print(f"h3 with threshold 10^{int(np.log10(threshold))} per billion: {p3:.5f}")

# similarity-adjusted scoring: responses stand in for the word itself
responses = samples.words()
sa = sa_probability(responses, provider, prefix, embeddings, word, seg)
print(f"\nsimilarity-adjusted score from the 40 sampled alternatives: {sa:.5f}")
