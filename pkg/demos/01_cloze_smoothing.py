"""Smoothed cloze probabilities and the transform family.

Counts from a norming study become predictors in three steps: add-one
smoothing over the response multiset, a log transform into surprisal,
and optionally a power transform on the surprisal value.
"""

from wordpred import ClozeResponseSet, ContextId
from wordpred.cloze import (
    PAPER_SMOOTHING_FACTORS,
    RAW_PROB,
    SURPRISAL,
    cloze_probability,
    surprisal_pow,
    transform,
)

context = ContextId("item1", "sent1", 9)
responses = ClozeResponseSet({context: {"glasses": 82, "contacts": 8}})

print("90 responses: 82 x glasses, 8 x contacts\n")

print("smoothing factor sweep for 'glasses' (observed) and 'goggles' (not):")
for s in PAPER_SMOOTHING_FACTORS:
    p_seen = cloze_probability(responses, context, "glasses", s)
    p_unseen = cloze_probability(responses, context, "goggles", s)
    print(f"  S={s:5d}   P(glasses)={p_seen:.5f}   P(goggles)={p_unseen:.6f}")

# more smoothing flattens everything toward the floor 1/(N+S); the
# unattested word always keeps a nonzero probability, which is the point

p = cloze_probability(responses, context, "glasses", 200)
print(f"\nwith S=200, P(glasses) = {p:.5f}")
print(f"  raw probability   : {transform(p, RAW_PROB):.5f}")
print(f"  surprisal (bits)  : {transform(p, SURPRISAL):.4f}")
print(f"  surprisal^0.5     : {transform(p, surprisal_pow(0.5)):.4f}")
print(f"  surprisal^2       : {transform(p, surprisal_pow(2)):.4f}")

print("\nsquared surprisal at S=200 is the default predictor downstream")
