"""Token distributions, boundary correction, and word sampling.

A language model scores subword tokens, not words. The probability of a
word is the product of its token conditionals times the mass of all
boundary-marking continuations; without that correction, "carpet" could
never be more probable than "car".
"""

import numpy as np

from wordpred import is_word_end, sample_words, word_probability
from wordpred.toydata import build_toy_provider

provider = build_toy_provider(seed=0)
vocab = provider.vocab
seg = provider.segmentation

print(f"toy vocabulary: {len(vocab)} tokens, bigram rows seeded deterministically\n")

for token in (" the", "pet", ",", "<|endoftext|>"):
    print(f"  is_word_end({token!r}) = {is_word_end(token, vocab)}")

prefix = tuple(seg.segment("the"))
print("\nafter the prefix ' the':")
for word in ("village", "carpet", "window"):
    tokens = [vocab.tokens[i] for i in seg.segment(word)]
    p = word_probability(provider, prefix, word)
    # bare token product, no boundary mass
    bare = float(np.exp(provider.score(prefix, seg.segment(word))))
    print(f"  {word!r} -> {tokens}  corrected={p:.5f}  token-product={bare:.5f}")

print("\nthe corrected value is always <= the bare product: the boundary")
print("mass is a probability of ending the word there\n")

samples = sample_words(provider, prefix, n=2000, seed=42)
print("2000 sampled continuations of ' the' (top 8):")
for word, count in sorted(samples.counts.items(), key=lambda kv: -kv[1])[:8]:
    print(f"  {word:12s} {count:5d}  ({count / samples.n:.3f})")
