import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayopt.core import Ball, DimensionError, Unconstrained
from delayopt.oracle import (Objective, SampleRng, StreamBank, estimate_constants, full_grad, full_value,
                             load_csv, make_synthetic, save_csv, softplus, stochastic_grad)


def single(kind, a, b, domain=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return Objective(kind, a, [b], domain or Unconstrained(a.shape[1]))


class TestValues:
    def test_logistic_at_zero(self):
        obj = make_synthetic("logistic", 50, 6, noise=0.2, seed=3)
        assert full_value(obj, np.zeros(6)) == pytest.approx(math.log(2), abs=1e-15)

    def test_least_squares_interpolation(self, rng):
        A = rng.standard_normal((8, 3))
        x = rng.standard_normal(3)
        obj = Objective("least-squares", A, A @ x, Unconstrained(3))
        assert full_value(obj, x) == pytest.approx(0, abs=1e-25)
        np.testing.assert_allclose(full_grad(obj, x), 0, atol=1e-14)

    def test_logistic_hand_value(self):
        # log(1 + e^-10) = 4.5398899e-05
        obj = single("logistic", [1, 0], 1)
        assert full_value(obj, [10, 0]) == pytest.approx(4.5398899216870535e-05, rel=1e-12)

    def test_lad_value_and_subgradient(self):
        obj = Objective("lad", [[1.0], [2.0]], [0.0, 1.0], Unconstrained(1))
        assert full_value(obj, [1.0]) == pytest.approx(1.0)
        np.testing.assert_allclose(full_grad(obj, [1.0]), [1.5])

    def test_softplus_extremes(self):
        np.testing.assert_allclose(softplus(np.array([-800.0, 0.0, 800.0])), [0.0, math.log(2), 800.0])

    def test_dimension_mismatch(self):
        obj = single("logistic", [1, 0], 1)
        with pytest.raises(DimensionError):
            full_value(obj, [1, 2, 3])

    def test_batched_value(self, rng):
        obj = make_synthetic("least-squares", 30, 4, noise=0.1, seed=1)
        X = rng.standard_normal((5, 4))
        np.testing.assert_allclose(obj.value(X), [full_value(obj, x) for x in X], rtol=1e-14)

    @pytest.mark.parametrize("kw", [
        dict(A=np.zeros((0, 2)), b=[]),
        dict(A=np.ones((2, 2)), b=[1.0]),
        dict(A=np.ones((2, 2)), b=[1.0, 0.5], kind="logistic"),
    ])
    def test_invalid_data(self, kw):
        kind = kw.pop("kind", "least-squares")
        with pytest.raises(ValueError):
            Objective(kind, domain=Unconstrained(2), **kw)


class TestGradients:
    def test_least_squares_datum(self):
        # F = 1/2 (b - <a,x>)^2 gives -(b - <a,x>) a
        obj = single("least-squares", [1, 0], 1)
        np.testing.assert_allclose(stochastic_grad(obj, [0, 0], 1, SampleRng(0)), [-1, 0])

    def test_logistic_datum(self):
        obj = single("logistic", [1, 0], 1)
        np.testing.assert_allclose(stochastic_grad(obj, [0, 0], 1, SampleRng(0)), [-0.5, 0])

    @pytest.mark.parametrize("kind", ["logistic", "least-squares"])
    def test_singleton_stochastic_equals_full(self, kind, rng):
        obj = single(kind, rng.standard_normal(4), 1)
        x = rng.standard_normal(4)
        np.testing.assert_allclose(stochastic_grad(obj, x, 3, SampleRng(9)), full_grad(obj, x), rtol=1e-14)

    @pytest.mark.parametrize("kind", ["logistic", "least-squares"])
    def test_finite_difference(self, kind, rng):
        obj = make_synthetic(kind, 40, 5, noise=0.3, seed=2)
        eps = 1e-6
        for _ in range(5):
            x = rng.standard_normal(5)
            fd = np.array([(full_value(obj, x + eps * e) - full_value(obj, x - eps * e)) / (2 * eps)
                           for e in np.eye(5)])
            np.testing.assert_allclose(full_grad(obj, x), fd, atol=1e-5)

    def test_per_sample_mean_is_full(self, rng):
        obj = make_synthetic("logistic", 25, 4, noise=0.1, seed=5)
        x = rng.standard_normal(4)
        np.testing.assert_allclose(obj.per_sample_grads(x).mean(axis=0), full_grad(obj, x), atol=1e-15)

    def test_batched_sample_grad(self, rng):
        obj = make_synthetic("least-squares", 25, 3, seed=5)
        X = rng.standard_normal((4, 3))
        idx = rng.integers(0, 25, size=(4, 6))
        G = obj.sample_grad(X, idx)
        for r in range(4):
            np.testing.assert_allclose(G[r], obj.per_sample_grads(X[r])[idx[r]].mean(axis=0), rtol=1e-13)

    def test_unbiased(self):
        obj = make_synthetic("logistic", 200, 6, noise=0.2, seed=7)
        x = np.random.default_rng(1).standard_normal(6) * 0.5
        rng = SampleRng(11)
        draws = np.stack([stochastic_grad(obj, x, 1, rng) for _ in range(10_000)])
        sigma = math.sqrt(np.mean(np.sum((draws - full_grad(obj, x)) ** 2, axis=1)))
        assert np.linalg.norm(draws.mean(axis=0) - full_grad(obj, x)) <= 4 * sigma / 100

    def test_variance_scales_with_batch(self):
        obj = make_synthetic("least-squares", 300, 5, noise=0.5, seed=8)
        x = np.zeros(5)
        g = full_grad(obj, x)
        var = {}
        for m in (1, 16):
            bank = StreamBank(4, 10_000, 1, obj.N, m, block=1)
            draws = obj.sample_grad(np.broadcast_to(x, (10_000, 5)), bank.draw(0))
            var[m] = np.mean(np.sum((draws - g) ** 2, axis=1))
        assert 0.7 / 16 <= var[16] / var[1] <= 1.4 / 16

    @given(st.floats(0, 1), st.integers(0, 10_000))
    def test_convexity(self, lam, seed):
        rng = np.random.default_rng(seed)
        for kind in ("logistic", "least-squares", "lad"):
            obj = make_synthetic(kind, 30, 3, noise=0.2, seed=1)
            x, y = rng.standard_normal((2, 3)) * 3
            lhs = full_value(obj, lam * x + (1 - lam) * y)
            assert lhs <= lam * full_value(obj, x) + (1 - lam) * full_value(obj, y) + 1e-9


class TestSampling:
    def test_reproducible(self):
        a = SampleRng(5, (1, 2)).indices(100, 3000)
        b = SampleRng(5, (1, 2)).indices(100, 3000)
        np.testing.assert_array_equal(a, b)

    def test_chunking_does_not_matter(self):
        r1, r2 = SampleRng(5), SampleRng(5)
        joined = np.concatenate([r1.indices(50, 7) for _ in range(300)])
        np.testing.assert_array_equal(joined, r2.indices(50, 2100))

    def test_streams_differ(self):
        assert not np.array_equal(SampleRng(5, 0).indices(1000, 50), SampleRng(5, 1).indices(1000, 50))

    def test_bank_matches_streams(self):
        bank = StreamBank(3, replicas=2, workers=3, N=40, m=2, block=4)
        draws = np.stack([bank.draw_all() for _ in range(10)])       # (10, R, W, m)
        for r in range(2):
            for w in range(3):
                ref = SampleRng(3, (r, w)).indices(40, 20).reshape(10, 2)
                np.testing.assert_array_equal(draws[:, r, w], ref)


class TestConstants:
    def test_least_squares_unit(self):
        c = estimate_constants(single("least-squares", [1, 0], 0.5, Ball(np.zeros(2), 1.0)), trials=50)
        assert c.L == pytest.approx(1.0, rel=1e-9)
        assert c.sigma == 0
        assert c.R == pytest.approx(math.sqrt(2))

    def test_logistic_smoothness_against_hessian(self, rng):
        obj = single("logistic", [2, 0], 1)
        c = estimate_constants(obj, trials=20)
        assert c.L <= 1.0 + 1e-12
        eps = 1e-5
        for _ in range(100):
            x = rng.standard_normal(2) * 2
            H = np.stack([(full_grad(obj, x + eps * e) - full_grad(obj, x - eps * e)) / (2 * eps)
                          for e in np.eye(2)])
            assert np.linalg.eigvalsh(0.5 * (H + H.T)).max() <= c.L + 1e-6

    def test_lad_not_smooth(self):
        c = estimate_constants(make_synthetic("lad", 20, 2, seed=1), trials=10)
        assert math.isinf(c.L)
        assert math.isinf(c.R)

    def test_G_bounds_probed_gradients(self, rng):
        obj = make_synthetic("logistic", 50, 4, noise=0.1, seed=1, radius=2.0)
        c = estimate_constants(obj, trials=500, seed=0)
        x = obj.domain.project(rng.standard_normal(4))
        assert np.linalg.norm(obj.per_sample_grads(x), axis=1).max() <= c.G * 1.5

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            estimate_constants(single("logistic", [1, 0], 1), trials=0)


class TestSynthetic:
    def test_planted_beats_zero(self):
        obj = make_synthetic("logistic", 500, 20, noise=0.0, seed=4)
        planted = np.asarray(obj.meta["planted"])
        assert full_value(obj, planted) < math.log(2)

    def test_single_row(self):
        assert make_synthetic("least-squares", 1, 3, seed=0).N == 1

    @pytest.mark.parametrize("kind", ["logistic", "least-squares", "lad"])
    def test_deterministic(self, kind):
        a = make_synthetic(kind, 30, 5, noise=0.2, seed=9)
        b = make_synthetic(kind, 30, 5, noise=0.2, seed=9)
        assert a.A.tobytes() == b.A.tobytes() and a.b.tobytes() == b.b.tobytes()

    def test_logistic_sparsity(self):
        obj = make_synthetic("logistic", 100, 30, seed=1, active=4)
        assert np.all(np.count_nonzero(obj.A, axis=1) == 4)
        assert set(np.unique(obj.A)) <= {-1.0, 0.0, 1.0}

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            make_synthetic("hinge", 10, 2)


class TestCsv:
    def test_round_trip(self, tmp_path):
        obj = make_synthetic("logistic", 20, 4, noise=0.1, seed=2, radius=3.0)
        path = tmp_path / "data.csv"
        save_csv(obj, path)
        back = load_csv(path)
        assert back.kind == "logistic"
        np.testing.assert_array_equal(back.A, obj.A)
        np.testing.assert_array_equal(back.b, obj.b)
        assert isinstance(back.domain, Ball) and back.domain.radius == 3.0
        assert path.read_text().splitlines()[0] == "label,f0,f1,f2,f3"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,x0\n1,2\n")
        with pytest.raises(ValueError):
            load_csv(path, kind="least-squares")
