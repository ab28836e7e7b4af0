"""Smoothed cloze probabilities and the predictor transform family.

Counts come from `corpus.ClozeResponseSet`; smoothing adds one
pseudo-count per candidate and S extra mass to the denominator, so
unattested words get probability 1/(N+S) instead of zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .corpus import ClozeResponseSet, ContextId, StimulusCorpus, normalize_response
from .errors import IntegrityError

if TYPE_CHECKING:
    from .stats import PredictorTable

PAPER_SMOOTHING_FACTORS = (50, 100, 200, 500, 1000, 2000)


@dataclass(frozen=True)
class Transform:
    """Functional form applied to a probability before regression.

    kind is one of "raw_prob", "surprisal", "surprisal_pow"; surprisal is
    base-2 (bits) and the power transform exponentiates it.
    """

    kind: str
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("raw_prob", "surprisal", "surprisal_pow"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "surprisal_pow" and not self.exponent > 0:
            raise ValueError("surprisal exponent must be positive")

    @property
    def label(self) -> str:
        if self.kind == "surprisal_pow":
            return f"surprisal_pow_{self.exponent:g}"
        return self.kind


RAW_PROB = Transform("raw_prob")
SURPRISAL = Transform("surprisal")


def surprisal_pow(exponent: float) -> Transform:
    return Transform("surprisal_pow", exponent)


PAPER_TRANSFORMS = (
    RAW_PROB,
    SURPRISAL,
    surprisal_pow(1 / 2),
    surprisal_pow(3 / 4),
    surprisal_pow(4 / 3),
    surprisal_pow(2),
)

# Default predictor used downstream: squared surprisal at S = 200.
DEFAULT_SMOOTHING = 200
DEFAULT_TRANSFORM = surprisal_pow(2)


def cloze_probability(
    responses: ClozeResponseSet, context: ContextId, word: str, s: int
) -> float:
    """Add-one smoothed probability (C_w + 1) / (N + S) for the context."""
    if s < 1:
        raise ValueError(f"smoothing factor must be >= 1, got {s}")
    count = responses.count(context, normalize_response(word))
    total = responses.total(context)
    return (count + 1) / (total + s)


def transform(p: float, kind: Transform) -> float:
    """Map a probability to its predictor value under the given form."""
    if not 0 < p <= 1:
        raise ValueError(f"probability must be in (0, 1], got {p}")
    if kind.kind == "raw_prob":
        return p
    surprisal_bits = -math.log2(p)
    if kind.kind == "surprisal":
        return surprisal_bits
    return surprisal_bits**kind.exponent


@dataclass
class GridResult:
    """In-sample log-likelihood gains over the smoothing x transform grid."""

    s_values: tuple[int, ...]
    transforms: tuple[Transform, ...]
    gains: np.ndarray  # (len(s_values), len(transforms)), nats; NaN where a fit failed
    cell_errors: dict[tuple[int, str], str] = field(default_factory=dict)

    def best_cell(self) -> tuple[int, Transform, float]:
        if not np.any(np.isfinite(self.gains)):
            raise IntegrityError("no grid cell produced a finite gain")
        flat = np.where(np.isfinite(self.gains), self.gains, -np.inf)
        i, j = np.unravel_index(int(np.argmax(flat)), flat.shape)
        return self.s_values[i], self.transforms[j], float(self.gains[i, j])

    def rows(self):
        for i, s in enumerate(self.s_values):
            for j, t in enumerate(self.transforms):
                yield s, t.label, float(self.gains[i, j])


def training_split(
    subjects: np.ndarray, train_fraction: float = 0.5, seed: int = 0
) -> np.ndarray:
    """Boolean mask for a seeded subject-stratified split.

    Each subject contributes the first ceil(n_s * fraction) of their
    observations after a seeded shuffle.
    """
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = np.zeros(len(subjects), dtype=bool)
    for subject in sorted(set(subjects)):
        idx = np.flatnonzero(subjects == subject)
        rng.shuffle(idx)
        take = math.ceil(len(idx) * train_fraction)
        mask[idx[:take]] = True
    return mask


def grid_evaluate(
    responses: ClozeResponseSet,
    corpus: StimulusCorpus,
    table: "PredictorTable",
    contexts: list[ContextId],
    baseline_columns: list[str],
    s_values: tuple[int, ...] = PAPER_SMOOTHING_FACTORS,
    transforms: tuple[Transform, ...] = PAPER_TRANSFORMS,
    train_fraction: float = 0.5,
    seed: int = 0,
) -> GridResult:
    """Fit baseline and baseline+cloze models for every grid cell.

    `contexts` aligns each table row with its stimulus context. Gains are
    in-sample log-likelihood increases (nats) on a ~50% training split;
    cells whose fit fails are recorded as NaN with the error message.
    """
    from .stats import fit_lme, standardized_design, zscore

    if len(contexts) != table.n:
        raise IntegrityError("contexts must align with predictor table rows")

    mask = training_split(table.subjects, train_fraction, seed)
    idx = np.flatnonzero(mask)
    y = table.rt[idx]
    groups = table.subjects[idx]
    target_words = [normalize_response(corpus.word(c).text) for c in contexts]

    # Smoothed probabilities depend on S only through the denominator, so
    # cache raw counts once per context.
    counts = np.array([responses.count(c, w) for c, w in zip(contexts, target_words)])
    totals = np.array([responses.total(c) for c in contexts], dtype=float)
    counts = counts[idx].astype(float)
    totals = totals[idx]

    base = standardized_design(table.columns, baseline_columns, idx)
    base_fit = fit_lme(base.x_train, y, groups)

    gains = np.full((len(s_values), len(transforms)), np.nan)
    errors: dict[tuple[int, str], str] = {}
    for i, s in enumerate(s_values):
        probs = (counts + 1) / (totals + s)
        for j, t in enumerate(transforms):
            try:
                pred = np.array([transform(p, t) for p in probs])
                X = np.column_stack([base.x_train, zscore(pred)])
                fit = fit_lme(X, y, groups)
                gains[i, j] = fit.loglik - base_fit.loglik
            except Exception as exc:  # annotate the cell, keep the grid going
                errors[(s, t.label)] = str(exc)
    return GridResult(tuple(s_values), tuple(transforms), gains, errors)
