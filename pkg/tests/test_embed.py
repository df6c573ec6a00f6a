import heapq
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from newsevents.embed import (
    EmbeddingModel,
    EmptyVocabularyError,
    ModelFormatError,
    TrainConfig,
    build_huffman,
    build_vocab,
    extract_matrix,
    extract_vector,
    hs_prob,
    infer_vector,
    infer_vectors,
    mean_log_prob,
    pack_store,
    train_dm,
    window_nll_and_grads,
)
from newsevents.embed import _kernels
from newsevents.embed.train import Packed
from newsevents.embed.vocab import Vocabulary

from conftest import store_from_tokens


def random_model(rng, counts, dim, use_proj=False, dtype=np.float64, n_sent=3, scale=0.5):
    vocab = Vocabulary([f"w{i}" for i in range(len(counts))], list(counts))
    tree = build_huffman(vocab.counts)
    m = EmbeddingModel.initialize(vocab, tree, list(range(n_sent)), dim, 2, 0,
                                  use_proj=use_proj, learn_proj=use_proj, dtype=dtype)
    m.word_vecs[:] = rng.normal(0, scale, m.word_vecs.shape)
    m.node_vecs[:] = rng.normal(0, scale, m.node_vecs.shape)
    m.sent_vecs[:] = rng.normal(0, scale, m.sent_vecs.shape)
    if use_proj:
        m.proj[:] = np.eye(dim) + rng.normal(0, 0.3, (dim, dim))
        m.bias[:] = rng.normal(0, 0.3, dim)
    return m


def huffman_cost(counts):
    """Optimal total weighted code length: sum of all merge weights."""
    heap = list(counts)
    heapq.heapify(heap)
    cost = 0
    while len(heap) > 1:
        s = heapq.heappop(heap) + heapq.heappop(heap)
        cost += s
        heapq.heappush(heap, s)
    return cost


class TestVocabulary:
    TOKENS = [["a"] * 4 + ["b"] * 2 + ["c"]]

    def test_threshold(self):
        v = build_vocab(self.TOKENS, min_count=2)
        assert dict(zip(v.words, v.counts)) == {"a": 4, "b": 2}

    def test_order(self):
        assert build_vocab(self.TOKENS, min_count=1).words == ["a", "b", "c"]

    def test_lexicographic_tie_break(self):
        assert build_vocab([["z", "y", "x", "x"]]).words == ["x", "y", "z"]

    def test_all_below_threshold(self):
        with pytest.raises(EmptyVocabularyError):
            build_vocab(self.TOKENS, min_count=10)

    def test_encode_drops_unknown(self):
        v = build_vocab(self.TOKENS)
        assert v.encode(["c", "q", "a"]) == [2, 0]


class TestHuffman:
    def test_two_words(self):
        t = build_huffman([5, 3])
        assert list(t.lengths) == [1, 1]
        assert {t.code(0), t.code(1)} == {(0,), (1,)}

    def test_hand_case(self):
        assert list(build_huffman([4, 2, 1, 1]).lengths) == [1, 2, 3, 3]

    def test_equal_frequencies(self):
        assert list(build_huffman([7, 7, 7, 7]).lengths) == [2, 2, 2, 2]

    def test_single_word_rejected(self):
        with pytest.raises(ValueError):
            build_huffman([3])

    def test_paths_start_at_root(self):
        t = build_huffman([9, 5, 4, 3, 1])
        assert all(t.path(w)[0] == 0 for w in range(5))
        assert set(itertools.chain.from_iterable(t.path(w) for w in range(5))) == set(range(4))

    @given(st.lists(st.integers(1, 1000), min_size=2, max_size=60))
    def test_optimal_and_prefix_free(self, counts):
        t = build_huffman(counts)
        lengths = np.asarray(t.lengths)
        assert int(np.dot(lengths, counts)) == huffman_cost(counts)
        p = np.asarray(counts, dtype=float) / sum(counts)
        entropy = -np.sum(p * np.log2(p))
        assert np.dot(p, lengths) <= entropy + 1 + 1e-12
        codes = [t.code(w) for w in range(len(counts))]
        assert len(set(codes)) == len(codes)
        for a, b in itertools.permutations(codes, 2):
            assert b[: len(a)] != a


class TestHsProb:
    def test_two_words_zero_vectors(self, rng):
        m = random_model(rng, [3, 2], 4)
        m.node_vecs[:] = 0
        assert hs_prob(m, np.zeros(4), 0) == 0.5
        assert hs_prob(m, np.zeros(4), 1) == 0.5

    @pytest.mark.parametrize("v", [2, 4, 7, 33, 64])
    def test_normalization(self, rng, v):
        counts = rng.integers(1, 50, v)
        for use_proj in (False, True):
            m = random_model(rng, counts, 6, use_proj=use_proj)
            x = rng.normal(0, 1, 6)
            total = math.fsum(hs_prob(m, x, w) for w in range(v))
            assert abs(total - 1.0) <= 1e-10

    def test_saturation(self, rng):
        m = random_model(rng, [4, 2, 1, 1], 3)
        x = rng.normal(0, 1, 3)
        w = 0  # single-node path
        (node,), (bit,) = m.tree.path(w), m.tree.code(w)
        m.node_vecs[node] = (1.0 if bit == 0 else -1.0) * x * 1e6
        assert hs_prob(m, x, w) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_word(self, rng):
        m = random_model(rng, [3, 2], 4)
        with pytest.raises(KeyError):
            hs_prob(m, np.zeros(4), "nope")


def central_diff(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8)


class TestWindowGradients:
    @pytest.mark.parametrize("use_proj", [False, True])
    @pytest.mark.parametrize("with_sent", [True, False])
    def test_reference_matches_finite_differences(self, rng, use_proj, with_sent):
        dim, n, depth = 5, 3, 4
        for _ in range(10):
            sent = rng.normal(0, 1, dim) if with_sent else None
            ctx = rng.normal(0, 1, (n, dim))
            nodes = rng.normal(0, 1, (depth, dim))
            code = rng.integers(0, 2, depth)
            proj = np.eye(dim) + rng.normal(0, 0.3, (dim, dim)) if use_proj else None
            bias = rng.normal(0, 0.3, dim) if use_proj else None

            def nll():
                return window_nll_and_grads(sent, ctx, nodes, code, proj, bias)[0]

            _, g = window_nll_and_grads(sent, ctx, nodes, code, proj, bias)
            checks = [(ctx, g["ctx"]), (nodes, g["nodes"])]
            if with_sent:
                checks.append((sent, g["sent"]))
            if use_proj:
                checks += [(proj, g["proj"]), (bias, g["bias"])]
            for param, analytic in checks:
                assert rel_err(analytic, central_diff(nll, param)) < 1e-4

    @pytest.mark.parametrize("use_proj", [False, True])
    def test_kernel_step_is_gradient_step(self, rng, use_proj):
        """A single kernel window moves every parameter by -lr * gradient."""
        dim, n, lr = 4, 3, 1e-3
        for _ in range(10):
            m = random_model(rng, rng.integers(1, 30, 9), dim, use_proj=use_proj, n_sent=1)
            m.context_n = n
            seq = list(rng.integers(0, 9, n + 1))
            target = seq[-1]
            before = {k: getattr(m, k).copy() for k in ("word_vecs", "node_vecs", "sent_vecs", "proj", "bias")}
            path = list(m.tree.path(target))
            _, g = window_nll_and_grads(
                before["sent_vecs"][0], before["word_vecs"][seq[:-1]], before["node_vecs"][path],
                np.array(m.tree.code(target)),
                before["proj"] if use_proj else None, before["bias"] if use_proj else None,
            )
            packed = Packed([seq], [0])
            _kernels.run_windows(
                packed.tokens, packed.offsets, packed.rows, np.array([0]), 1,
                m.word_vecs, m.sent_vecs, m.node_vecs, m.proj, m.bias, use_proj, use_proj,
                True, True, m.tree.codes, m.tree.points, m.tree.lengths, n, lr, lr, 0.0, 1.0,
            )
            want_words = before["word_vecs"].copy()
            for j, w in enumerate(seq[:-1]):
                want_words[w] -= lr * g["ctx"][j]
            want_nodes = before["node_vecs"].copy()
            want_nodes[path] -= lr * g["nodes"]
            np.testing.assert_allclose(m.word_vecs, want_words, rtol=0, atol=1e-12)
            np.testing.assert_allclose(m.node_vecs, want_nodes, rtol=0, atol=1e-12)
            np.testing.assert_allclose(m.sent_vecs[0], before["sent_vecs"][0] - lr * g["sent"], atol=1e-12)
            if use_proj:
                np.testing.assert_allclose(m.proj, before["proj"] - lr * g["proj"], atol=1e-12)
                np.testing.assert_allclose(m.bias, before["bias"] - lr * g["bias"], atol=1e-12)

    def test_kernel_log_prob_matches_hs_prob(self, rng):
        m = random_model(rng, rng.integers(1, 30, 12), 5, use_proj=True, n_sent=1)
        m.context_n = 2
        seq = [3, 7, 1]
        packed = Packed([seq], [0])
        total = mean_log_prob(m, packed)
        x = (m.sent_vecs[0] + m.word_vecs[3] + m.word_vecs[7]) / 3
        assert total == pytest.approx(math.log(hs_prob(m, x, 1)), rel=1e-12)


class TestExtraction:
    def test_identity_returns_row(self, rng):
        m = random_model(rng, [3, 2, 1], 4, n_sent=3)
        np.testing.assert_array_equal(extract_vector(m, 1), m.sent_vecs[1])

    def test_bias_shift(self, rng):
        m = random_model(rng, [3, 2, 1], 4, use_proj=True)
        m.proj[:] = np.eye(4)
        m.bias[:] = 0.25
        np.testing.assert_allclose(extract_vector(m, 2), m.sent_vecs[2] + 0.25, atol=0)

    def test_affine_oracle(self, rng):
        m = random_model(rng, [3, 2, 1], 4, use_proj=True)
        for s in range(3):
            want = [m.bias[d] + sum(m.proj[d, e] * m.sent_vecs[s, e] for e in range(4)) for d in range(4)]
            np.testing.assert_allclose(extract_vector(m, s), want, atol=1e-12)
        np.testing.assert_allclose(extract_matrix(m, [2, 0]), [extract_vector(m, 2), extract_vector(m, 0)], atol=1e-15)

    def test_unknown_sentence(self, rng):
        m = random_model(rng, [3, 2, 1], 4)
        with pytest.raises(KeyError):
            extract_vector(m, 99)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestTraining:
    def test_learns_cyclic_sequence(self):
        store = store_from_tokens([["a", "b", "c"] * 3] * 20)
        cfg = TrainConfig(dim=8, context_n=2, epochs=30, lr=0.05, seed=3)
        model = train_dm(store, cfg)
        untrained = EmbeddingModel.initialize(model.vocab, model.tree, store.mention_ids, 8, 2, seed=3)
        toks = ["a", "b", "c"] * 3
        for pos in range(2, len(toks)):
            x_new = (model.sent_vecs[0] + model.word_vecs[model.vocab.encode(toks[pos - 2 : pos])].sum(0)) / 3
            x_old = (untrained.sent_vecs[0] + untrained.word_vecs[untrained.vocab.encode(toks[pos - 2 : pos])].sum(0)) / 3
            p_new = hs_prob(model, x_new, toks[pos])
            assert p_new > 1 / 3
            assert p_new > hs_prob(untrained, x_old, toks[pos])

    def test_interchangeable_words_end_up_close(self):
        rng = np.random.default_rng(0)
        filler = [f"f{i}" for i in range(30)]
        sents = []
        for _ in range(400):
            toks = list(rng.choice(filler, 8))
            toks[4] = "alpha" if rng.random() < 0.5 else "beta"
            toks[5:7] = ["rose", "sharply"]
            sents.append(toks)
        model = train_dm(store_from_tokens(sents), TrainConfig(dim=16, context_n=3, epochs=15, lr=0.05, seed=1))
        wv = lambda w: model.word_vecs[model.vocab.index[w]].astype(float)
        assert cosine(wv("alpha"), wv("beta")) > cosine(wv("alpha"), wv("f7"))

    def test_history_improves(self):
        store = store_from_tokens([["a", "b", "c", "d"] * 3] * 10)
        model = train_dm(store, TrainConfig(dim=8, context_n=2, epochs=10, lr=0.05))
        assert len(model.history) == 10
        assert model.history[-1] > model.history[0]

    def test_deterministic(self, tmp_path):
        store = store_from_tokens([["a", "b", "c", "d", "e"] * 2] * 15)
        cfg = TrainConfig(dim=8, context_n=2, epochs=3)
        train_dm(store, cfg).save(tmp_path / "a.bin")
        train_dm(store, cfg).save(tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_only_mention_sentences_get_vectors(self):
        store = store_from_tokens([["a", "b", "c", "a"], ["b", "c", "a", "b"]], mentions=[["x"], []])
        model = train_dm(store, TrainConfig(dim=4, context_n=2, epochs=2))
        assert model.has_vector(0) and not model.has_vector(1)

    def test_short_sentences_recorded(self):
        store = store_from_tokens([["a", "b"], ["a", "b", "c", "d"]])
        model = train_dm(store, TrainConfig(dim=4, context_n=2, epochs=1))
        assert model.skipped_short == [0]

    def test_projection_training_stays_finite(self):
        store = store_from_tokens([["a", "b", "c", "d"] * 3] * 10)
        model = train_dm(store, TrainConfig(dim=6, context_n=2, epochs=5, lr=0.05, learn_projection=True))
        assert model.use_proj
        assert np.isfinite(model.proj).all() and not np.array_equal(model.proj, np.eye(6))

    def test_threads_run(self):
        store = store_from_tokens([["a", "b", "c", "d"] * 3] * 20)
        model = train_dm(store, TrainConfig(dim=6, context_n=2, epochs=2, threads=2))
        assert np.isfinite(model.sent_vecs).all()


class TestPersistence:
    def test_roundtrip_bit_exact(self, tmp_path):
        store = store_from_tokens([["a", "b", "c", "d"] * 2] * 5)
        model = train_dm(store, TrainConfig(dim=5, context_n=2, epochs=2, use_projection=True))
        model.save(tmp_path / "m.bin")
        back = EmbeddingModel.load(tmp_path / "m.bin")
        for k in ("word_vecs", "node_vecs", "sent_vecs", "proj", "bias", "sentence_ids"):
            np.testing.assert_array_equal(getattr(back, k), getattr(model, k))
        assert back.vocab.words == model.vocab.words and back.vocab.counts == model.vocab.counts
        np.testing.assert_array_equal(back.tree.codes, model.tree.codes)
        np.testing.assert_array_equal(back.tree.points, model.tree.points)
        assert back.use_proj and back.context_n == 2
        back.save(tmp_path / "m2.bin")
        assert (tmp_path / "m.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"garbage" * 4)
        with pytest.raises(ModelFormatError):
            EmbeddingModel.load(tmp_path / "x.bin")

    def test_truncated(self, tmp_path):
        store = store_from_tokens([["a", "b", "c", "d"] * 2] * 5)
        train_dm(store, TrainConfig(dim=5, context_n=2, epochs=1)).save(tmp_path / "m.bin")
        data = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(data[:-7])
        with pytest.raises(ModelFormatError):
            EmbeddingModel.load(tmp_path / "t.bin")


@pytest.fixture(scope="module")
def small_model():
    rng = np.random.default_rng(4)
    words = [f"t{i}" for i in range(40)]
    sents = [list(rng.choice(words, 12)) for _ in range(60)]
    model = train_dm(store_from_tokens(sents), TrainConfig(dim=12, context_n=3, epochs=20, lr=0.05, seed=2))
    return model, sents


class TestInference:
    def test_zero_steps_is_seeded_noise(self, small_model):
        model, sents = small_model
        v = infer_vector(model, sents[0], steps=0, seed=9)
        want = (np.random.default_rng(9).random(model.dim) - 0.5) / model.dim
        np.testing.assert_allclose(v, want.astype(np.float32), atol=0)

    def test_seeds_differ(self, small_model):
        model, sents = small_model
        a = infer_vector(model, sents[0], seed=1)
        b = infer_vector(model, sents[0], seed=2)
        assert not np.array_equal(a, b)

    def test_same_seed_reproducible(self, small_model):
        model, sents = small_model
        np.testing.assert_array_equal(infer_vector(model, sents[3], seed=5), infer_vector(model, sents[3], seed=5))

    def test_closer_to_own_vector(self, small_model):
        model, sents = small_model
        own, other = [], []
        rng = np.random.default_rng(0)
        for s in range(20):
            v = infer_vector(model, sents[s], steps=100, seed=s, lr=0.025)
            own.append(cosine(v, extract_vector(model, s)))
            other.append(np.mean([cosine(v, extract_vector(model, int(o)))
                                  for o in rng.choice([i for i in range(60) if i != s], 20, replace=False)]))
        assert np.mean(own) > np.mean(other)

    def test_shared_weights_frozen(self, small_model):
        model, sents = small_model
        before = (model.word_vecs.copy(), model.node_vecs.copy(), model.sent_vecs.copy())
        infer_vectors(model, sents[0], 10, [1, 2, 3])
        for a, b in zip(before, (model.word_vecs, model.node_vecs, model.sent_vecs)):
            np.testing.assert_array_equal(a, b)

    def test_batch_independent(self, small_model):
        model, sents = small_model
        batch = infer_vectors(model, sents[1], 20, [(0, 1, j) for j in range(3)])
        np.testing.assert_array_equal(batch[2], infer_vectors(model, sents[1], 20, [(0, 1, 2)])[0])

    def test_all_unknown_rejected(self, small_model):
        model, _ = small_model
        with pytest.raises(ValueError):
            infer_vector(model, ["zzz", "qqq"])
