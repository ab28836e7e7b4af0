"""Random-intercept mixed-effects regression and model comparison.

The model is y = X beta + b_g + e with one intercept b_g per subject,
b_g ~ N(0, sigma_b^2) and e ~ N(0, sigma^2). Estimation is maximum
likelihood (not REML) because models with different fixed effects are
compared on likelihood: beta and sigma^2 are profiled in closed form
given the variance ratio lambda = sigma_b^2 / sigma^2, and lambda is
found by bracketed 1-D search on log(lambda + eps). All per-candidate
work is O(n) in the observations via the grouped form of the Woodbury
identity. Log-likelihoods are in nats throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .corpus import RTObservation
from .errors import ConvergenceError, DesignError, IntegrityError, PlanError
from .manip import FrequencyTable

LOG_2PI = math.log(2.0 * math.pi)
LAMBDA_EPS = 1e-10
LAMBDA_MAX = 1e8
MAX_ITER = 200


@dataclass
class PredictorTable:
    """Column store aligned row-for-row with a list of RT observations."""

    columns: dict[str, np.ndarray]
    rt: np.ndarray
    subjects: np.ndarray

    def __post_init__(self):
        self.rt = np.asarray(self.rt, dtype=float)
        self.subjects = np.asarray(self.subjects, dtype=object)
        n = len(self.rt)
        if len(self.subjects) != n:
            raise IntegrityError("subjects must align with rt")
        for name, values in list(self.columns.items()):
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise IntegrityError(f"column {name!r} has shape {values.shape}")
            if not np.all(np.isfinite(values)):
                raise IntegrityError(f"column {name!r} has missing values")
            self.columns[name] = values

    @property
    def n(self) -> int:
        return len(self.rt)

    def with_column(self, name: str, values: np.ndarray) -> "PredictorTable":
        if name in self.columns:
            raise IntegrityError(f"column {name!r} already present")
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=float)
        return PredictorTable(cols, self.rt, self.subjects)


@dataclass
class LMEFit:
    """Maximum-likelihood fit of the random-intercept model."""

    beta: np.ndarray
    sigma2: float
    sigma_b2: float
    blups: dict[str, float]
    loglik: float
    converged: bool
    lam: float  # sigma_b2 / sigma2 at the optimum

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise IntegrityError("residual variance must be positive")
        if self.sigma_b2 < 0:
            raise IntegrityError("random-intercept variance must be nonnegative")


def _group_stats(X: np.ndarray, y: np.ndarray, groups: np.ndarray):
    labels, inverse = np.unique(np.asarray(groups, dtype=object), return_inverse=True)
    g = len(labels)
    n_j = np.bincount(inverse, minlength=g).astype(float)
    sum_x = np.zeros((g, X.shape[1]))
    np.add.at(sum_x, inverse, X)
    sum_y = np.bincount(inverse, weights=y, minlength=g)
    return labels, inverse, n_j, sum_x, sum_y


def _profile(lam, n, xtx, xty, yty, n_j, sum_x, sum_y):
    """Profiled beta, sigma^2, and log-likelihood for a fixed ratio."""
    c = lam / (1.0 + n_j * lam)
    a = xtx - (sum_x.T * c) @ sum_x
    b = xty - sum_x.T @ (c * sum_y)
    beta = np.linalg.solve(a, b)
    quad = yty - float(c @ (sum_y**2))
    rss = quad - 2.0 * float(beta @ b) + float(beta @ a @ beta)
    sigma2 = max(rss / n, 1e-300)
    loglik = -0.5 * n * (LOG_2PI + math.log(sigma2) + 1.0) - 0.5 * float(
        np.log1p(n_j * lam).sum()
    )
    return loglik, beta, sigma2


def fit_lme(
    X: np.ndarray,
    y: np.ndarray,
    groups: Sequence,
    max_iter: int = MAX_ITER,
) -> LMEFit:
    """Fit the random-intercept model by profiled maximum likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if len(y) != n:
        raise DesignError("X and y lengths differ")
    if np.linalg.matrix_rank(X) < p:
        raise DesignError("design matrix is rank deficient")
    labels, _, n_j, sum_x, sum_y = _group_stats(X, y, np.asarray(groups, dtype=object))
    if len(labels) < 2:
        raise DesignError("need at least 2 groups")

    xtx = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)

    def objective(u: float) -> float:
        lam = max(math.exp(u) - LAMBDA_EPS, 0.0)
        return -_profile(lam, n, xtx, xty, yty, n_j, sum_x, sum_y)[0]

    result = minimize_scalar(
        objective,
        bounds=(math.log(LAMBDA_EPS), math.log(LAMBDA_MAX)),
        method="bounded",
        options={"xatol": 1e-8, "maxiter": max_iter},
    )
    if not result.success:
        raise ConvergenceError(
            f"ratio search did not converge in {max_iter} iterations "
            f"(last log-ratio {result.x:.6g}, objective {result.fun:.6g})"
        )
    lam = max(math.exp(result.x) - LAMBDA_EPS, 0.0)
    loglik, beta, sigma2 = _profile(lam, n, xtx, xty, yty, n_j, sum_x, sum_y)
    # the boundary (no between-subject variance) is checked explicitly
    loglik0, beta0, sigma20 = _profile(0.0, n, xtx, xty, yty, n_j, sum_x, sum_y)
    if loglik0 >= loglik:
        lam, loglik, beta, sigma2 = 0.0, loglik0, beta0, sigma20

    resid = y - X @ beta
    sum_resid = np.bincount(
        np.unique(np.asarray(groups, dtype=object), return_inverse=True)[1],
        weights=resid,
        minlength=len(labels),
    )
    shrink = lam / (1.0 + n_j * lam)
    blups = {str(label): float(s * w) for label, s, w in zip(labels, sum_resid, shrink)}
    return LMEFit(
        beta=beta,
        sigma2=float(sigma2),
        sigma_b2=float(lam * sigma2),
        blups=blups,
        loglik=float(loglik),
        converged=True,
        lam=float(lam),
    )


def heldout_loglik(
    fit: LMEFit,
    X: np.ndarray,
    y: np.ndarray,
    groups: Sequence,
    mode: str = "blup",
) -> np.ndarray:
    """Per-observation held-out Gaussian log-likelihoods (nats).

    Subjects seen in training are evaluated conditionally on their
    estimated intercept with residual variance; unseen subjects (or
    mode="marginal") use the marginal variance sigma^2 + sigma_b^2.
    """
    if not fit.converged:
        raise ConvergenceError("held-out evaluation requires a converged fit")
    if mode not in ("blup", "marginal"):
        raise ValueError(f"unknown held-out mode {mode!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    mean = X @ fit.beta
    var = np.full(len(y), fit.sigma2 + fit.sigma_b2)
    if mode == "blup":
        for i, label in enumerate(groups):
            blup = fit.blups.get(str(label))
            if blup is not None:
                mean[i] += blup
                var[i] = fit.sigma2
    return -0.5 * (LOG_2PI + np.log(var)) - (y - mean) ** 2 / (2.0 * var)


@dataclass(frozen=True)
class CVPlan:
    """Deterministic round-robin fold assignment of subject-sentence cells."""

    n_folds: int
    assignment: dict[tuple[str, str, str], int]

    def fold_of(self, obs: RTObservation) -> int:
        key = (obs.subject_id, obs.context.item_id, obs.context.sentence_id)
        if key not in self.assignment:
            raise PlanError(f"combination {key} not in plan")
        return self.assignment[key]

    def row_folds(self, observations: Sequence[RTObservation]) -> np.ndarray:
        return np.array([self.fold_of(obs) for obs in observations], dtype=int)

    def fold_sizes(self, observations: Sequence[RTObservation]) -> np.ndarray:
        return np.bincount(self.row_folds(observations), minlength=self.n_folds)


def make_folds(observations: Sequence[RTObservation], n_folds: int = 10) -> CVPlan:
    """Sort subject-by-sentence combinations and deal them out round-robin."""
    if n_folds < 2:
        raise PlanError("need at least 2 folds")
    combos = sorted(
        {
            (obs.subject_id, obs.context.item_id, obs.context.sentence_id)
            for obs in observations
        }
    )
    if len(combos) < n_folds:
        raise PlanError(f"{len(combos)} combinations cannot fill {n_folds} folds")
    return CVPlan(n_folds, {combo: i % n_folds for i, combo in enumerate(combos)})


def zscore(values: np.ndarray, mean: float | None = None, sd: float | None = None):
    """Standardize values; raises on zero variance when stats not supplied."""
    values = np.asarray(values, dtype=float)
    if mean is None:
        mean = float(values.mean())
    if sd is None:
        sd = float(values.std())
        if sd == 0:
            raise ValueError("cannot z-score a constant column")
    return (values - mean) / sd


@dataclass
class _Design:
    x_train: np.ndarray
    x_test: np.ndarray | None
    kept: list[str]
    dropped: list[str]


def standardized_design(
    columns: dict[str, np.ndarray],
    names: Sequence[str],
    train_idx: np.ndarray,
    test_idx: np.ndarray | None = None,
) -> _Design:
    """Intercept + named columns z-scored by training statistics.

    Constant and collinear columns are dropped (recorded) so the design
    is always full rank.
    """
    n_train = len(train_idx)
    x_train = np.ones((n_train, 1))
    x_test = np.ones((len(test_idx), 1)) if test_idx is not None else None
    kept: list[str] = []
    dropped: list[str] = []
    for name in names:
        col = columns[name]
        train_col = col[train_idx]
        sd = float(train_col.std())
        if sd == 0:
            dropped.append(name)
            continue
        mean = float(train_col.mean())
        candidate = np.column_stack([x_train, (train_col - mean) / sd])
        if np.linalg.matrix_rank(candidate) < candidate.shape[1]:
            dropped.append(name)
            continue
        x_train = candidate
        if x_test is not None:
            x_test = np.column_stack([x_test, (col[test_idx] - mean) / sd])
        kept.append(name)
    return _Design(x_train, x_test, kept, dropped)


@dataclass
class ComparisonResult:
    """Cross-validated gains of two predictors and their joint model."""

    labels: tuple[str, str]
    fold_gains: dict[str, np.ndarray]  # per-fold mean held-out gain vs baseline (nats)
    p_values: dict[str, float]
    p_adjusted: dict[str, float]
    sems: dict[str, float]
    diff_sems: dict[str, float]
    n_folds: int
    bonferroni_m: int
    failed_folds: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        for key, p in self.p_values.items():
            if not 0 < p <= 1:
                raise IntegrityError(f"p-value {p} for {key} outside (0, 1]")

    def significant_improvement(
        self, label: str, alpha: float = 0.05, adjusted: bool = True
    ) -> bool:
        """Whether the joint model improves on `label` and the test agrees.

        The permutation test is two-sided, so it also fires when the joint
        model is consistently *worse* (the usual cost of a useless extra
        predictor); a gain claim additionally needs the right direction.
        """
        p = (self.p_adjusted if adjusted else self.p_values)[f"{label}_vs_both"]
        direction = float(np.mean(self.fold_gains["both"])) > float(
            np.mean(self.fold_gains[label])
        )
        return p <= alpha and direction


def _sem(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


def compare_models(
    table: PredictorTable,
    baseline_columns: Sequence[str],
    predictor_a: str,
    predictor_b: str,
    row_folds: np.ndarray,
    labels: tuple[str, str] | None = None,
    bonferroni_m: int = 1,
    heldout_mode: str = "blup",
) -> ComparisonResult:
    """Fit baseline / +A / +B / +A+B per training fold, score held-out gains.

    Gains are per-observation mean held-out log-likelihood increases over
    the baseline model; the two comparisons of interest (A vs joint,
    B vs joint) are tested with the exact paired permutation test. More
    than two failed folds abort the comparison.
    """
    labels = labels or (predictor_a, predictor_b)
    name_a, name_b = labels
    if name_a == name_b or "both" in labels:
        raise ValueError("comparison labels must be distinct and not 'both'")
    fold_ids = sorted(set(int(f) for f in row_folds))
    gains: dict[str, list[float]] = {name_a: [], name_b: [], "both": []}
    failed: list[int] = []
    notes: list[str] = []

    for fold in fold_ids:
        test_idx = np.flatnonzero(row_folds == fold)
        train_idx = np.flatnonzero(row_folds != fold)
        try:
            base = standardized_design(table.columns, baseline_columns, train_idx, test_idx)
            for name in base.dropped:
                note = f"baseline column {name!r} dropped (constant or collinear)"
                if note not in notes:
                    notes.append(note)
            designs = {}
            for label, extra in ((name_a, [predictor_a]), (name_b, [predictor_b]),
                                 ("both", [predictor_a, predictor_b])):
                aug = standardized_design(
                    table.columns, list(base.kept) + extra, train_idx, test_idx
                )
                extra_dropped = [n for n in aug.dropped if n in extra]
                if label == "both" and extra_dropped:
                    note = (
                        f"{extra_dropped[0]!r} dropped from joint model (collinear)"
                    )
                    if note not in notes:
                        notes.append(note)
                elif label != "both" and extra_dropped:
                    raise DesignError(f"predictor {extra_dropped[0]!r} unusable")
                designs[label] = aug

            y_train, g_train = table.rt[train_idx], table.subjects[train_idx]
            y_test, g_test = table.rt[test_idx], table.subjects[test_idx]
            base_fit = fit_lme(base.x_train, y_train, g_train)
            base_ll = heldout_loglik(base_fit, base.x_test, y_test, g_test, heldout_mode)
            for label in (name_a, name_b, "both"):
                design = designs[label]
                fit = fit_lme(design.x_train, y_train, g_train)
                ll = heldout_loglik(fit, design.x_test, y_test, g_test, heldout_mode)
                gains[label].append(float(np.mean(ll - base_ll)))
        except (DesignError, ConvergenceError, np.linalg.LinAlgError) as exc:
            failed.append(fold)
            notes.append(f"fold {fold} failed: {exc}")
            for label in gains:
                while len(gains[label]) > len(gains["both"]):
                    gains[label].pop()  # drop partial entries for this fold
            if len(failed) > 2:
                raise IntegrityError(
                    f"comparison aborted: {len(failed)} folds failed ({notes[-1]})"
                ) from exc

    fold_gains = {label: np.array(values) for label, values in gains.items()}
    p_values = {
        f"{name_a}_vs_both": paired_permutation_test(fold_gains[name_a], fold_gains["both"]),
        f"{name_b}_vs_both": paired_permutation_test(fold_gains[name_b], fold_gains["both"]),
    }
    return ComparisonResult(
        labels=labels,
        fold_gains=fold_gains,
        p_values=p_values,
        p_adjusted={k: bonferroni(p, bonferroni_m) for k, p in p_values.items()},
        sems={label: _sem(values) for label, values in fold_gains.items()},
        diff_sems={
            f"{name_a}_vs_both": _sem(fold_gains[name_a] - fold_gains["both"]),
            f"{name_b}_vs_both": _sem(fold_gains[name_b] - fold_gains["both"]),
        },
        n_folds=len(fold_ids) - len(failed),
        bonferroni_m=bonferroni_m,
        failed_folds=failed,
        notes=notes,
    )


def paired_permutation_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact two-sided sign-flip test on paired values (n <= 20).

    Enumerates all 2^n sign assignments of the differences; the p-value
    is the fraction of assignments whose |mean| ties or exceeds the
    observed |mean| (the identity assignment always counts, so p > 0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired inputs must be equal-length vectors")
    n = len(a)
    if not 1 <= n <= 20:
        raise ValueError(f"exact enumeration supports 1 <= n <= 20, got {n}")
    d = a - b
    sums = np.zeros(1)
    for di in d:
        sums = np.concatenate([sums + di, sums - di])
    observed = abs(float(d.sum()))
    tol = 1e-12 * max(1.0, float(np.abs(d).sum()))
    count = int(np.count_nonzero(np.abs(sums) >= observed - tol))
    return count / 2**n


def bonferroni(p: float, m: int) -> float:
    """Family-wise adjusted p-value min(1, m * p)."""
    if not 0 < p <= 1:
        raise ValueError(f"p must be in (0, 1], got {p}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return min(1.0, m * p)


def pearson_with_ci(
    x: Sequence[float],
    y: Sequence[float],
    resamples: int = 10000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Sample Pearson r with a seeded percentile 95% resampling interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise ValueError("need equal-length vectors with at least 3 points")
    if x.std() == 0 or y.std() == 0:
        raise ValueError("zero variance input")
    r = _pearson(x[None, :], y[None, :])[0]

    rng = np.random.default_rng(seed)
    n = len(x)
    stats = []
    chunk = max(1, min(resamples, 10_000_000 // max(n, 1)))
    remaining = resamples
    while remaining > 0:
        take = min(chunk, remaining)
        idx = rng.integers(0, n, size=(take, n))
        rs = _pearson(x[idx], y[idx])
        stats.append(rs[np.isfinite(rs)])
        remaining -= take
    rs = np.concatenate(stats)
    lo, hi = np.percentile(rs, [2.5, 97.5])
    return float(r), float(lo), float(hi)


def _pearson(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    xc = xs - xs.mean(axis=1, keepdims=True)
    yc = ys - ys.mean(axis=1, keepdims=True)
    denom = np.sqrt((xc**2).sum(axis=1) * (yc**2).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return (xc * yc).sum(axis=1) / denom


def unigram_surprisal(
    freq: FrequencyTable, word: str, min_per_billion: float = 0.01
) -> float:
    """Negative log2 relative frequency, floored for absent words."""
    per_billion = max(freq.per_billion(word), min_per_billion)
    return -math.log2(per_billion / 1e9)
