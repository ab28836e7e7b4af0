"""Acceptance suite: one test per exit criterion, each at its stated
tolerance, printing a PASS line on success (run with -s to see them).

Numeric criteria use the independent oracles from oracles.py; nothing
here trusts the implementation path it is checking.
"""

import csv
import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from wordpred.cloze import cloze_probability, surprisal_pow, transform
from wordpred.corpus import ClozeResponseSet, ContextId, RTObservation
from wordpred.experiments import ExperimentConfig, run_exp1, run_exp2, run_exp3, run_grid
from wordpred.lmcore import EmbeddingMatrix, Tokenization, TokenVocab, toy_provider
from wordpred.manip import (
    SampleSet,
    cluster_masses,
    h1_probability,
    h2_probability,
    h3_probability,
    kmeans_cluster,
    sample_words,
)
from wordpred.manip import FrequencyTable
from wordpred.stats import (
    compare_models,
    fit_lme,
    make_folds,
    paired_permutation_test,
)

from conftest import tiny_provider
from oracles import brute_force_permutation_p, dense_lme_oracle, enumerate_word_distribution
from test_stats import synthetic_comparison_data


def report(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


class TestSmoothingArithmetic:
    """Hand-computable smoothing and renormalization cases, exact to 1e-12."""

    def test_equation_arithmetic(self):
        start = time.time()
        cid = ContextId("i", "s", 1)
        responses = ClozeResponseSet({cid: {"glasses": 82, "contacts": 8}})
        assert abs(cloze_probability(responses, cid, "glasses", 200) - 83 / 290) <= 1e-12
        assert abs(cloze_probability(responses, cid, "zebra", 200) - 1 / 290) <= 1e-12
        all_same = ClozeResponseSet({cid: {"glasses": 90}})
        assert abs(cloze_probability(all_same, cid, "glasses", 200) - 91 / 290) <= 1e-12

        samples = SampleSet((), {"word": 5, "other": 85}, 90, 0)
        assert abs(h1_probability(samples, "word", 200) - 6 / 290) <= 1e-12
        assert abs(h1_probability(SampleSet((), {"x": 40}, 40, 0), "word", 200) - 1 / 240) <= 1e-12

        vocab = TokenVocab((" a", " b", " c"), eot_token=None)
        seg = Tokenization(vocab, {"a": (0,), "b": (1,), "c": (2,)})
        provider = toy_provider(vocab, {(): np.array([0.5, 0.3, 0.2])}, order=1)
        freq = FrequencyTable({"a": 1e6, "b": 1e5, "c": 10.0})
        dist = provider.next_distribution(())
        assert abs(
            h3_probability(dist, freq, 1e5, "a", seg) - (0.5 / 0.8) * (2 / 3)
        ) <= 1e-12
        assert abs(h3_probability(dist, freq, 1e5, "c", seg) - 1 / 3) <= 1e-12

        assert abs(transform(0.25, surprisal_pow(2)) - 4.0) <= 1e-12
        elapsed = time.time() - start
        assert elapsed < 1.0
        report(f"smoothing/manipulation arithmetic exact to 1e-12 ({elapsed:.2f}s)")


class TestLMEOracleEquivalence:
    def test_twenty_randomized_datasets(self):
        start = time.time()
        rng = np.random.default_rng(2024)
        for trial in range(20):
            n_groups = int(rng.integers(2, 9))
            n = int(rng.integers(30, 201))
            p = int(rng.integers(1, 5))
            groups = [f"g{rng.integers(n_groups)}" for _ in range(n)]
            while len(set(groups)) < 2:
                groups = [f"g{rng.integers(n_groups)}" for _ in range(n)]
            X = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
            beta = rng.normal(size=p + 1) * 3
            sb = rng.uniform(0, 2.0)
            intercepts = {g: rng.normal(0, sb) for g in set(groups)}
            y = X @ beta + np.array([intercepts[g] for g in groups]) + rng.normal(0, 1.0, n)

            fit = fit_lme(X, y, groups)
            oracle_ll, oracle_beta, _, _ = dense_lme_oracle(X, y, groups)
            assert abs(fit.loglik - oracle_ll) <= 1e-6, f"trial {trial}"
            rel = np.max(
                np.abs(fit.beta - oracle_beta) / np.maximum(np.abs(oracle_beta), 1e-12)
            )
            assert rel <= 1e-6, f"trial {trial}: beta rel err {rel}"
        elapsed = time.time() - start
        assert elapsed < 30.0
        report(f"mixed-model fit matches dense oracle on 20 datasets ({elapsed:.1f}s)")


class TestPermutationExactness:
    def test_exact_against_enumeration(self):
        start = time.time()
        assert paired_permutation_test(np.ones(10), np.zeros(10)) == 2 / 1024
        rng = np.random.default_rng(7)
        for _ in range(10):
            a = rng.normal(size=10)
            b = rng.normal(size=10)
            assert paired_permutation_test(a, b) == pytest.approx(
                brute_force_permutation_p(a, b), abs=1e-12
            )
        mostly = np.array([1.0] * 9 + [-1.0])
        assert paired_permutation_test(mostly, np.zeros(10)) == 22 / 1024
        elapsed = time.time() - start
        assert elapsed < 1.0
        report(f"permutation p-values exact vs 1024-assignment oracle ({elapsed:.2f}s)")


class TestH1Convergence:
    def test_three_sigma_bounds_over_twenty_seeds(self):
        start = time.time()
        provider = tiny_provider(seed=3, concentration=3.0)
        exact = enumerate_word_distribution(provider, ())
        assert sum(exact.values()) == pytest.approx(1.0, abs=1e-9)
        n = 5000
        checks = fails = 0
        for seed in range(20):
            samples = sample_words(provider, (), n, seed=1000 + seed)
            assert set(samples.counts) <= set(exact)
            for word, p in exact.items():
                bound = 3.0 * math.sqrt(p * (1 - p) / n)
                checks += 1
                if abs(samples.count(word) / n - p) > bound:
                    fails += 1
        rate = fails / checks
        elapsed = time.time() - start
        assert rate <= 0.01, f"{fails}/{checks} outside 3-sigma"
        assert elapsed < 60.0
        report(
            f"sampled word frequencies within 3-sigma for {1 - rate:.2%} "
            f"of word/seed pairs ({elapsed:.1f}s)"
        )


class TestH2Identity:
    def test_singleton_clusters_and_mass_conservation(self):
        rng = np.random.default_rng(5)
        provider = tiny_provider(seed=3)
        vocab = provider.vocab
        embeddings = EmbeddingMatrix(rng.normal(size=(len(vocab), 6)))
        clusters = kmeans_cluster(embeddings, k=len(vocab), runs=2, seed=0)
        assert clusters.inertia == pytest.approx(0.0, abs=1e-12)
        dist = provider.next_distribution(())
        seg = provider.segmentation
        for token_id, token in enumerate(vocab.tokens):
            word = token.removeprefix(" ")
            if word not in seg or len(seg.segment(word)) != 1:
                continue
            got = h2_probability(dist, clusters, word, seg)
            assert abs(got - dist.prob(seg.segment(word)[0])) <= 1e-12

        from wordpred.manip import ClusterAssignment

        for _ in range(50):
            k = int(rng.integers(1, len(vocab) + 1))
            assignment = rng.integers(0, k, size=len(vocab))
            random_clusters = ClusterAssignment(
                k, assignment, np.zeros((k, 2)), 0.0
            )
            assert cluster_masses(dist, random_clusters).sum() == pytest.approx(
                1.0, abs=1e-6
            )
        report("singleton clustering reduces to raw token probabilities (1e-12)")


class TestH3Invariants:
    def test_mass_and_ratios(self):
        rng = np.random.default_rng(6)
        vocab = TokenVocab((" a", " b", " c", " d", " e"), eot_token=None)
        seg = Tokenization(
            vocab, {w: (i,) for i, w in enumerate(["a", "b", "c", "d", "e"])}
        )
        freq = FrequencyTable({"a": 1e6, "b": 1e6, "c": 1e6, "d": 1.0, "e": 1.0})
        threshold = 1e5
        frequent_words = ["a", "b", "c"]
        for _ in range(100):
            probs = rng.dirichlet(np.ones(5))
            dist = toy_provider(vocab, {(): probs}, order=1).next_distribution(())
            total = sum(
                h3_probability(dist, freq, threshold, w, seg) for w in frequent_words
            )
            assert abs(total - 3 / 4) <= 1e-12
            pa = h3_probability(dist, freq, threshold, "a", seg)
            pb = h3_probability(dist, freq, threshold, "b", seg)
            assert pa / pb == pytest.approx(probs[0] / probs[1], rel=1e-9)
        report("frequency truncation conserves mass and within-set ratios")


class TestSimulationCalibration:
    def test_twenty_seeded_runs(self):
        start = time.time()
        wins = 0
        for seed in range(20):
            table, row_folds = synthetic_comparison_data(seed)
            result = compare_models(table, ["x1", "x2"], "a", "b", row_folds)
            ok_a = not result.significant_improvement("a", alpha=0.05, adjusted=False)
            ok_b = result.significant_improvement("b", alpha=0.05, adjusted=False)
            wins += ok_a and ok_b
        elapsed = time.time() - start
        assert wins >= 18, f"only {wins}/20 runs calibrated"
        assert elapsed < 300.0
        report(f"comparison calibrated in {wins}/20 seeded runs ({elapsed:.1f}s)")


class TestEndToEndSmoke:
    def test_all_drivers_on_bundled_toy_data(self, toy_bundle, tmp_path):
        start = time.time()

        def config(sub, **kw):
            defaults = dict(
                stimuli=toy_bundle["stimuli"],
                rt=toy_bundle["rt"],
                measure="SPR",
                out_dir=tmp_path / sub,
                cloze=toy_bundle["cloze"],
                freq=toy_bundle["freq"],
                embeddings=toy_bundle["embeddings"],
                toy_seed=0,
                resamples=200,
                runs=3,
            )
            defaults.update(kw)
            return ExperimentConfig(**defaults)

        reports = {
            "exp1": run_exp1(config("exp1")),
            "exp2-h1": run_exp2(config("h1"), "h1"),
            "exp2-h2": run_exp2(config("h2", k=8), "h2"),
            "exp2-h3": run_exp2(config("h3", threshold=1e4), "h3"),
            "exp3": run_exp3(config("exp3")),
            "grid": run_grid(config("grid")),
        }
        for name, rep in reports.items():
            if rep.comparison is not None:
                rows = list(csv.DictReader(open(rep.out_files["report"])))
                assert rows, name
                assert set(rows[0]) == {"measure", "model", "fold", "mean_gain_nats"}
                for row in rows:
                    assert math.isfinite(float(row["mean_gain_nats"])), name
                summary = list(csv.DictReader(open(rep.out_files["summary"])))
                assert set(summary[0]) == {"comparison", "p", "p_adjusted", "sem"}
                svg = rep.out_files["chart"].read_text()
                ET.fromstring(svg)  # well-formed markup
        grid_rows = list(csv.DictReader(open(reports["grid"].out_files["grid"])))
        assert len(grid_rows) == 36
        assert set(grid_rows[0]) == {"S", "transform", "loglik_gain"}

        # deterministic chart bytes on a rerun
        again = run_exp1(config("exp1_again", out_dir=tmp_path / "exp1_again"))
        assert (
            again.out_files["chart"].read_bytes()
            == reports["exp1"].out_files["chart"].read_bytes()
        )
        elapsed = time.time() - start
        assert elapsed < 120.0
        report(f"all experiment drivers complete on the toy bundle ({elapsed:.1f}s)")


class TestFoldConstruction:
    def test_round_robin_on_randomized_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n_subjects = int(rng.integers(2, 12))
            n_sentences = int(rng.integers(2, 15))
            if n_subjects * n_sentences < 10:
                continue
            observations = []
            for s in range(n_subjects):
                for sent in range(n_sentences):
                    for w in range(int(rng.integers(1, 5))):
                        observations.append(
                            RTObservation(
                                f"s{s}",
                                ContextId("item", f"t{sent}", w),
                                "SPR",
                                200.0 + w,
                            )
                        )
            plan = make_folds(observations, 10)
            row_folds = plan.row_folds(observations)
            by_combo = {}
            for obs, fold in zip(observations, row_folds):
                key = (obs.subject_id, obs.context.sentence_id)
                by_combo.setdefault(key, set()).add(int(fold))
            assert all(len(folds) == 1 for folds in by_combo.values())
            counts = np.bincount(list(plan.assignment.values()), minlength=10)
            assert counts.max() - counts.min() <= 1
            assert counts.min() >= 1
        report("fold assignment keeps combinations whole with balanced sizes")
