import numpy as np
import pytest

from bayesgram import oracles
from bayesgram.baselines import (SgModel, W2gModel, clip_params, init_sg_model,
                                 init_w2g_model, sg_window_gradients,
                                 sg_window_loss, train_baseline, w2g_energy,
                                 w2g_energy_gradients, w2g_window_gradients,
                                 w2g_window_loss)
from bayesgram.bsg import TrainConfig
from bayesgram.corpus import build_vocabulary, iter_documents
from bayesgram.gauss import Gaussian

from helpers import flatten, rel_err, tiny_vocab, write_back


def sg_model(V=8, d=4, rng=None):
    rng = rng or np.random.default_rng(0)
    v = tiny_vocab(V)
    return SgModel(vocab=v, dim=d,
                   in_vec=rng.normal(scale=0.5, size=(V, d)),
                   out_vec=rng.normal(scale=0.5, size=(V, d)))


def w2g_model(V=8, d=3, cov_kind="spherical", energy="expected_likelihood",
              rng=None):
    rng = rng or np.random.default_rng(0)
    v = tiny_vocab(V)
    lv_shape = (V,) if cov_kind == "spherical" else (V, d)
    return W2gModel(vocab=v, cov_kind=cov_kind, dim=d,
                    mean=rng.normal(scale=0.5, size=(V, d)),
                    log_var=rng.normal(scale=0.3, size=lv_shape),
                    energy_kind=energy)


class TestSgLoss:
    def test_zero_vectors(self):
        m = sg_model()
        m.in_vec[:] = 0
        m.out_vec[:] = 0
        assert sg_window_loss(m, 0, [1], [2]) == pytest.approx(
            -2 * np.log(0.5), abs=1e-12)

    def test_saturation_limit(self):
        m = sg_model(d=1)
        m.in_vec[0] = 1.0
        m.out_vec[1] = 50.0    # positive score -> +inf direction
        m.out_vec[2] = -50.0   # negative score -> -inf direction
        assert sg_window_loss(m, 0, [1], [2]) == pytest.approx(0.0, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            m = sg_model(rng=rng)
            center = int(rng.integers(8))
            pos = list(rng.integers(0, 8, size=2))
            neg = list(rng.integers(0, 8, size=2))
            buffers = {k: np.zeros(v.shape) for k, v in m.param_arrays().items()}
            sg_window_gradients(m, center, pos, neg, buffers)
            params = m.param_arrays()
            names = sorted(params)
            x0 = flatten(params, names)

            def loss_of(vec):
                write_back(params, names, vec)
                return sg_window_loss(m, center, pos, neg)

            fd = oracles.finite_diff_grad(loss_of, x0, 1e-6)
            write_back(params, names, x0)
            assert rel_err(flatten(buffers, names), fd) <= 1e-4

    def test_length_mismatch(self):
        m = sg_model()
        with pytest.raises(ValueError, match="length mismatch"):
            sg_window_loss(m, 0, [1, 2], [3])


class TestW2gEnergy:
    def test_expected_likelihood_hand_value(self):
        a = Gaussian(np.array([0.0]), np.array(np.log(0.5)))
        b = Gaussian(np.array([0.0]), np.array(np.log(0.5)))
        # variances add: log N(0; 0, 1)
        assert w2g_energy(a, b, "expected_likelihood") == pytest.approx(
            -0.5 * np.log(2 * np.pi), abs=1e-12)

    def test_negated_kl_identical_is_zero(self):
        a = Gaussian(np.array([0.3, -0.1]), np.array([0.2, 0.1]))
        assert w2g_energy(a, a, "negated_kl") == pytest.approx(0.0, abs=1e-12)

    def test_expected_likelihood_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = Gaussian(rng.normal(size=3), rng.normal(size=3))
            b = Gaussian(rng.normal(size=3), rng.normal(size=3))
            assert w2g_energy(a, b, "expected_likelihood") == pytest.approx(
                w2g_energy(b, a, "expected_likelihood"), abs=1e-10)

    @pytest.mark.parametrize("kind", ["expected_likelihood", "negated_kl"])
    def test_energy_gradients(self, kind):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mu_a, mu_b = rng.normal(size=2), rng.normal(size=2)
            lv_a, lv_b = rng.normal(size=2), rng.normal(size=2)
            _, g_mu_a, g_lv_a, g_mu_b, g_lv_b = w2g_energy_gradients(
                Gaussian(mu_a, lv_a), Gaussian(mu_b, lv_b), kind)
            x0 = np.concatenate([mu_a, lv_a, mu_b, lv_b])

            def f(vec):
                return w2g_energy(Gaussian(vec[0:2], vec[2:4]),
                                  Gaussian(vec[4:6], vec[6:8]), kind)

            fd = oracles.finite_diff_grad(f, x0, 1e-6)
            analytic = np.concatenate([g_mu_a, g_lv_a, g_mu_b, g_lv_b])
            assert rel_err(analytic, fd) <= 1e-4

    def test_unknown_kind(self):
        a = Gaussian(np.array([0.0]), np.array(0.0))
        with pytest.raises(ValueError, match="unknown energy"):
            w2g_energy(a, a, "mahalanobis")


class TestW2gWindowLoss:
    def test_satisfied_margin_gives_zero(self):
        m = w2g_model(d=1)
        m.mean[:] = 0.0
        m.log_var[:] = 0.0
        m.mean[0, 0] = 0.0
        m.mean[1, 0] = 0.1   # positive close -> high energy
        m.mean[2, 0] = 9.0   # negative far -> low energy
        assert w2g_window_loss(m, 0, [1], [2], margin=1.0) == 0.0

    def test_identical_pos_neg_gives_margin_each(self):
        m = w2g_model()
        loss = w2g_window_loss(m, 0, [1, 2], [1, 2], margin=0.8)
        assert loss == pytest.approx(2 * 0.8, abs=1e-10)

    @pytest.mark.parametrize("cov_kind,energy", [
        ("spherical", "expected_likelihood"), ("diagonal", "expected_likelihood"),
        ("spherical", "negated_kl"), ("diagonal", "negated_kl")])
    def test_gradient_matches_finite_differences(self, cov_kind, energy):
        rng = np.random.default_rng(4)
        for _ in range(5):
            m = w2g_model(cov_kind=cov_kind, energy=energy, rng=rng)
            center = int(rng.integers(8))
            pos = list(rng.integers(0, 8, size=2))
            neg = list(rng.integers(0, 8, size=2))
            buffers = {k: np.zeros(v.shape) for k, v in m.param_arrays().items()}
            w2g_window_gradients(m, center, pos, neg, 1.0, buffers)
            params = m.param_arrays()
            names = sorted(params)
            x0 = flatten(params, names)

            def loss_of(vec):
                write_back(params, names, vec)
                return w2g_window_loss(m, center, pos, neg, 1.0)

            fd = oracles.finite_diff_grad(loss_of, x0, 1e-6)
            write_back(params, names, x0)
            assert rel_err(flatten(buffers, names), fd) <= 1e-4


class TestClipParams:
    def test_in_bounds_unchanged(self):
        m = w2g_model()
        m.mean[:] = 0.5
        m.log_var[:] = 0.0
        mean0, lv0 = m.mean.copy(), m.log_var.copy()
        clip_params(m)
        assert np.array_equal(m.mean, mean0)
        assert np.array_equal(m.log_var, lv0)

    def test_mean_rescaled_to_bound(self):
        m = w2g_model(d=3)
        m.max_mean_norm = 2.0
        m.mean[0] = [4.0, 0.0, 0.0]
        clip_params(m)
        assert np.linalg.norm(m.mean[0]) == pytest.approx(2.0, abs=1e-9)

    def test_variance_clamped(self):
        m = w2g_model()
        m.log_var[0] = np.log(100.0)
        m.log_var[1] = np.log(1e-9)
        clip_params(m)
        assert np.exp(m.log_var[0]) == pytest.approx(m.var_hi)
        assert np.exp(m.log_var[1]) == pytest.approx(m.var_lo)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        m = w2g_model(rng=rng)
        m.mean *= 100
        m.log_var *= 10
        clip_params(m)
        mean1, lv1 = m.mean.copy(), m.log_var.copy()
        clip_params(m)
        assert np.array_equal(m.mean, mean1)
        assert np.array_equal(m.log_var, lv1)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.txt"
    spec = oracles.polysemy_spec(tokens_per_doc=400, n_docs=20, seed=11)
    oracles.write_synth_corpus(spec, path)
    vocab = build_vocabulary(iter_documents(path), 100, 1)
    return path, vocab


class TestTrainBaseline:
    def cfg(self, **kw):
        base = dict(dim=6, window=2, epochs=3, seed=2, batch_size=256,
                    subsample_t=1e-2)
        base.update(kw)
        return TrainConfig(**base)

    @pytest.mark.parametrize("kind", ["sg", "w2g_s", "w2g_d"])
    def test_deterministic(self, corpus, kind):
        path, vocab = corpus
        cfg = self.cfg(epochs=1)
        m1 = train_baseline(kind, path, vocab, cfg, learning_rate=0.02)
        m2 = train_baseline(kind, path, vocab, cfg, learning_rate=0.02)
        for k, a in m1.param_arrays().items():
            assert np.array_equal(a, m2.param_arrays()[k])

    def test_sg_loss_trend(self, corpus):
        path, vocab = corpus
        losses = []
        train_baseline("sg", path, vocab, self.cfg(epochs=8),
                       epoch_losses=losses, learning_rate=0.01)
        assert losses[-1] < losses[0]

    @pytest.mark.parametrize("kind", ["w2g_s", "w2g_d"])
    def test_w2g_clip_invariants_after_training(self, corpus, kind):
        path, vocab = corpus
        m = train_baseline(kind, path, vocab, self.cfg(epochs=2),
                           learning_rate=0.05)
        norms = np.linalg.norm(m.mean.astype(np.float64), axis=1)
        assert np.all(norms <= m.max_mean_norm + 1e-6)
        var = np.exp(m.log_var.astype(np.float64))
        assert np.all(var >= m.var_lo - 1e-9)
        assert np.all(var <= m.var_hi + 1e-6)

    def test_unknown_kind(self, corpus):
        path, vocab = corpus
        with pytest.raises(ValueError, match="unknown baseline"):
            train_baseline("glove", path, vocab, self.cfg())

    def test_shared_stream_with_bsg(self, corpus):
        # identical seeds must give SG and BSG the same window/negative stream
        from bayesgram.bsg import data_rng, TrainConfig as TC
        from bayesgram.corpus import iter_training_windows
        path, vocab = corpus
        cfg = self.cfg()
        s1 = list(iter_training_windows(path, vocab, cfg.window,
                                        cfg.negatives_per_positive,
                                        data_rng(cfg)))
        s2 = list(iter_training_windows(path, vocab, cfg.window,
                                        cfg.negatives_per_positive,
                                        data_rng(cfg)))
        assert s1 == s2
