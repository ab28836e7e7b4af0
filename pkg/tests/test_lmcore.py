import numpy as np
import pytest
from scipy.special import logsumexp

from wordpred.corpus import ContextId, load_stimuli
from wordpred.errors import (
    CoverageError,
    FormatError,
    IntegrityError,
    TokenizationError,
)
from wordpred.lmcore import (
    EmbeddingMatrix,
    TokenDistribution,
    Tokenization,
    TokenVocab,
    ToyNgramProvider,
    boundary_token_ids,
    context_prefix,
    is_word_end,
    load_distribution_dump,
    load_embeddings,
    replay_provider,
    toy_provider,
    word_probability,
    write_distribution_dump,
    write_embeddings,
)

from conftest import tiny_provider, tiny_vocab


class TestIsWordEnd:
    def test_leading_whitespace(self):
        assert is_word_end(" in")

    def test_plain_subword_piece(self):
        assert not is_word_end("pet")

    def test_punctuation_only(self):
        assert is_word_end(",")
        assert is_word_end("...")
        assert is_word_end("¿")  # inverted question mark, category Po

    def test_end_of_text(self):
        vocab = tiny_vocab()
        assert is_word_end("<|endoftext|>", vocab)

    def test_mixed_is_not_boundary(self):
        assert not is_word_end("a,")
        assert not is_word_end("ow")


HAND_VOCAB = TokenVocab((" the", " cat", "s", "."), whitespace_marker=" ", eot_token=None)

HAND_TABLE = {
    (): np.array([0.4, 0.3, 0.2, 0.1]),
    (0,): np.array([0.1, 0.6, 0.1, 0.2]),  # after " the"
    (1,): np.array([0.3, 0.1, 0.4, 0.2]),  # after " cat"
    (2,): np.array([0.25, 0.25, 0.25, 0.25]),  # after "s"
    (3,): np.array([0.7, 0.1, 0.1, 0.1]),  # after "."
}


@pytest.fixture
def hand_provider():
    segmentation = Tokenization(
        HAND_VOCAB, {"the": (0,), "cat": (1,), "cats": (1, 2), "s": (2,), ".": (3,)}
    )
    return toy_provider(HAND_VOCAB, HAND_TABLE, order=2, segmentation=segmentation)


class TestWordProbability:
    def test_hand_computed_multi_token(self, hand_provider):
        # " cat" then "s" after " the"; boundary tokens are 0, 1, 3
        expected = 0.6 * 0.4 * (0.25 + 0.25 + 0.25)
        assert word_probability(hand_provider, (0,), "cats") == pytest.approx(
            expected, abs=1e-12
        )

    def test_boundary_mass_one(self):
        # the only continuation of " the" is " cat", then certainly a boundary
        table = dict(HAND_TABLE)
        table[(0,)] = np.array([0.0, 1.0, 0.0, 0.0])
        table[(1,)] = np.array([0.5, 0.2, 0.0, 0.3])  # boundary mass 1
        segmentation = Tokenization(HAND_VOCAB, {"cat": (1,)})
        provider = toy_provider(HAND_VOCAB, table, order=2, segmentation=segmentation)
        assert word_probability(provider, (0,), "cat") == pytest.approx(1.0, abs=1e-12)

    def test_corrected_never_exceeds_token_product(self, small_provider, rng):
        seg = small_provider.segmentation
        for word in list(seg.words())[:40]:
            tokens = seg.segment(word)
            prefix: list[int] = []
            product = 1.0
            for t in tokens:
                product *= small_provider.next_distribution(prefix).prob(t)
                prefix.append(t)
            corrected = word_probability(small_provider, (), word)
            assert corrected <= product + 1e-12

    def test_in_unit_interval(self, small_provider):
        for word in list(small_provider.segmentation.words())[:30]:
            p = word_probability(small_provider, (), word)
            assert 0 < p <= 1

    def test_closed_vocabulary_mass(self, small_provider):
        total = sum(
            word_probability(small_provider, (), w)
            for w in small_provider.segmentation.words()
        )
        assert total <= 1 + 1e-6

    def test_untokenizable_word(self, hand_provider):
        with pytest.raises(TokenizationError):
            word_probability(hand_provider, (), "zebra")


class TestTokenization:
    def test_greedy_round_trip(self):
        vocab = tiny_vocab()
        words = ["the", "cat", "carpet", "sunow", "catpetow"]
        seg = Tokenization.greedy(vocab, words)
        for word in words:
            surface = vocab.surface(seg.segment(word))
            assert surface in (word, " " + word)

    def test_greedy_failure(self):
        vocab = tiny_vocab()
        with pytest.raises(TokenizationError):
            Tokenization.greedy(vocab, ["zebra"])

    def test_bad_table_rejected(self):
        vocab = tiny_vocab()
        with pytest.raises(IntegrityError):
            Tokenization(vocab, {"cat": (0,)})  # detokenizes to " the"

    def test_context_prefix(self, tmp_path):
        path = tmp_path / "stim.csv"
        path.write_text(
            "item_id,sentence_id,word_index,word_text\n"
            "i,s,0,the\n"
            "i,s,1,cat\n"
            "i,s,2,carpet\n"
        )
        corpus = load_stimuli(path)
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the", "cat", "carpet"])
        assert context_prefix(corpus, seg, ContextId("i", "s", 0)) == ()
        assert context_prefix(corpus, seg, ContextId("i", "s", 2)) == (
            vocab.index(" the"),
            vocab.index(" cat"),
        )


class TestTokenDistribution:
    def test_rejects_unnormalized(self):
        with pytest.raises(IntegrityError):
            TokenDistribution(None, np.log(np.array([0.5, 0.4])))

    def test_accepts_within_tolerance(self):
        lp = np.log(np.array([0.5, 0.5])) + 2e-5
        TokenDistribution(None, lp)


class TestDumpRoundTrip:
    def make_rows(self, vocab, rng, contexts):
        rows = []
        for i, cid in enumerate(contexts):
            probs = rng.dirichlet(np.ones(len(vocab)))
            rows.append((cid, (i,), np.log(probs)))
        return rows

    def test_round_trip_bit_identical(self, tmp_path, rng):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the", "cat"])
        contexts = [ContextId("i", "s", k) for k in range(3)]
        path1 = tmp_path / "a.pdlm"
        write_distribution_dump(path1, vocab, seg, self.make_rows(vocab, rng, contexts))
        dump1 = load_distribution_dump(path1)
        path2 = tmp_path / "b.pdlm"
        write_distribution_dump(
            path2,
            dump1.vocab,
            dump1.segmentation,
            [
                (cid, dump1.context_prefixes[cid], dump1.by_context[cid].logprobs)
                for cid in contexts
            ],
        )
        assert path1.read_bytes() == path2.read_bytes()
        dump2 = load_distribution_dump(path2)
        for cid in contexts:
            assert np.array_equal(
                dump1.by_context[cid].logprobs, dump2.by_context[cid].logprobs
            )

    def test_rows_normalized_on_load(self, tmp_path, rng):
        vocab = TokenVocab(tuple(f"t{i}" for i in range(10)), whitespace_marker=" ")
        seg = Tokenization(vocab, {})
        contexts = [ContextId("i", "s", k) for k in range(3)]
        path = tmp_path / "d.pdlm"
        write_distribution_dump(path, vocab, seg, self.make_rows(vocab, rng, contexts))
        dump = load_distribution_dump(path)
        assert len(dump.by_context) == 3
        for dist in dump.by_context.values():
            assert abs(logsumexp(dist.logprobs)) <= 1e-4

    def test_truncated_file(self, tmp_path, rng):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the"])
        path = tmp_path / "t.pdlm"
        write_distribution_dump(
            path, vocab, seg, self.make_rows(vocab, rng, [ContextId("i", "s", 0)])
        )
        raw = path.read_bytes()
        path.write_bytes(raw[:-25])
        with pytest.raises(FormatError):
            load_distribution_dump(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.pdlm"
        path.write_text('{"magic": "NOPE", "version": 1}\n')
        with pytest.raises(FormatError):
            load_distribution_dump(path)

    def test_mild_misnormalization_fixed(self, tmp_path, rng):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the"])
        probs = rng.dirichlet(np.ones(len(vocab)))
        path = tmp_path / "mild.pdlm"
        write_distribution_dump(
            path, vocab, seg, [(None, (0,), np.log(probs) + 5e-4)]
        )
        dump = load_distribution_dump(path)
        assert abs(logsumexp(dump.by_prefix[(0,)].logprobs)) <= 1e-4

    def test_gross_misnormalization_rejected(self, tmp_path, rng):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the"])
        probs = rng.dirichlet(np.ones(len(vocab)))
        path = tmp_path / "gross.pdlm"
        write_distribution_dump(path, vocab, seg, [(None, (0,), np.log(probs) + 5e-3)])
        with pytest.raises(IntegrityError):
            load_distribution_dump(path)

    def test_unknown_context_with_corpus(self, tmp_path, rng, toy_corpus):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the"])
        path = tmp_path / "u.pdlm"
        write_distribution_dump(
            path, vocab, seg, self.make_rows(vocab, rng, [ContextId("zz", "s", 0)])
        )
        with pytest.raises(IntegrityError):
            load_distribution_dump(path, toy_corpus)


class TestReplayProvider:
    @pytest.fixture
    def dump_path(self, tmp_path, rng):
        vocab = tiny_vocab()
        seg = Tokenization.greedy(vocab, ["the", "cat"])
        rows = []
        for prefix in [(), (0,), (0, 1)]:
            rows.append((None, prefix, np.log(rng.dirichlet(np.ones(len(vocab))))))
        path = tmp_path / "r.pdlm"
        write_distribution_dump(path, vocab, seg, rows)
        return path

    def test_serves_stored_rows(self, dump_path):
        dump = load_distribution_dump(dump_path)
        provider = replay_provider(dump)
        for prefix in [(), (0,), (0, 1)]:
            served = provider.next_distribution(prefix)
            assert np.array_equal(served.logprobs, dump.by_prefix[prefix].logprobs)

    def test_coverage_error_names_prefix(self, dump_path):
        provider = replay_provider(load_distribution_dump(dump_path))
        with pytest.raises(CoverageError, match=r"\(5,\)"):
            provider.next_distribution((5,))

    def test_score_equals_row_lookup(self, dump_path):
        provider = replay_provider(load_distribution_dump(dump_path))
        dist = provider.next_distribution((0,))
        for t in range(3):
            assert provider.score((0,), [t]) == pytest.approx(dist.logprob(t), abs=1e-12)


class TestToyProvider:
    def test_deterministic(self, small_provider):
        a = small_provider.next_distribution((1, 2))
        b = small_provider.next_distribution((1, 2))
        assert np.array_equal(a.logprobs, b.logprobs)

    def test_uniform_table(self):
        vocab = tiny_vocab()
        size = len(vocab)
        provider = toy_provider(vocab, {(): np.full(size, 1 / size)}, order=1)
        dist = provider.next_distribution((3, 1))
        assert np.allclose(np.exp(dist.logprobs), 1 / size, atol=1e-12)

    def test_bigram_score_is_table_product(self, hand_provider):
        # score of " cat", "s" after " the" multiplies the two table rows
        expected = np.log(0.6) + np.log(0.4)
        assert hand_provider.score((0,), [1, 2]) == pytest.approx(expected, abs=1e-12)

    def test_score_decomposition(self, small_provider, rng):
        for _ in range(20):
            prefix = tuple(rng.integers(0, 9, size=rng.integers(0, 4)))
            a = [int(x) for x in rng.integers(0, 9, size=rng.integers(1, 3))]
            b = [int(x) for x in rng.integers(0, 9, size=rng.integers(1, 3))]
            lhs = small_provider.score(prefix, a + b)
            rhs = small_provider.score(prefix, a) + small_provider.score(
                tuple(prefix) + tuple(a), b
            )
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_normalization_invariant(self, small_provider, rng):
        for _ in range(10):
            prefix = tuple(rng.integers(0, 9, size=rng.integers(0, 3)))
            dist = small_provider.next_distribution(prefix)
            assert abs(logsumexp(dist.logprobs)) <= 1e-4

    def test_rejects_unnormalized_table(self):
        vocab = tiny_vocab()
        with pytest.raises(IntegrityError):
            toy_provider(vocab, {(): np.full(len(vocab), 0.2)})

    def test_rejects_oversized_vocab(self):
        tokens = tuple(f"t{i}" for i in range(65))
        with pytest.raises(IntegrityError):
            ToyNgramProvider(TokenVocab(tokens), {(): np.full(65, 1 / 65)})


class TestEmbeddingsFile:
    def test_round_trip(self, tmp_path, rng):
        matrix = EmbeddingMatrix(rng.normal(size=(10, 4)))
        path = tmp_path / "e.pdem"
        write_embeddings(path, matrix)
        loaded = load_embeddings(path)
        assert loaded.vectors.shape == (10, 4)
        assert np.array_equal(
            loaded.vectors, matrix.vectors.astype(np.float32).astype(float)
        )

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.pdem"
        path.write_bytes(b'{"magic": "XXXX", "version": 1}\n')
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_payload_size_checked(self, tmp_path, rng):
        matrix = EmbeddingMatrix(rng.normal(size=(4, 4)))
        path = tmp_path / "short.pdem"
        write_embeddings(path, matrix)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_nonfinite_rejected(self):
        bad = np.zeros((3, 2))
        bad[1, 1] = np.inf
        with pytest.raises(IntegrityError):
            EmbeddingMatrix(bad)


def test_boundary_ids_cover_marker_punct_eot():
    vocab = tiny_vocab()
    ids = set(boundary_token_ids(vocab).tolist())
    expected = {i for i, t in enumerate(vocab.tokens) if t not in ("pet", "ow")}
    assert ids == expected


def test_vocab_rejects_duplicates():
    with pytest.raises(IntegrityError):
        TokenVocab((" a", " a"))


def test_provider_agrees_with_tiny_fixture():
    # two constructions with the same seed give identical tables
    a = tiny_provider(seed=11)
    b = tiny_provider(seed=11)
    assert np.array_equal(
        a.next_distribution((2,)).logprobs, b.next_distribution((2,)).logprobs
    )
