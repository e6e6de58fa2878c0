import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from delayopt.core import (Ball, DimensionError, EuclideanProx, StepSchedule, Unconstrained, alpha_at, as_vec,
                           bregman, da_argmin, md_step, norm, project, prox_value)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def vecs(d):
    return arrays(np.float64, d, elements=finite)


def unit_ball(d=2):
    return Ball(np.zeros(d), 1.0)


def prox(domain, center=None):
    return EuclideanProx(np.zeros(domain.dim) if center is None else np.asarray(center, float), domain)


class TestProxValue:
    def test_zero_at_center(self):
        assert prox_value(prox(Unconstrained(2)), [0, 0]) == 0

    def test_three_four(self):
        assert prox_value(prox(Unconstrained(2)), [3, 4]) == 12.5

    def test_shifted_center(self):
        assert prox_value(prox(Unconstrained(2), [1, 1]), [1, 2]) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            prox_value(prox(Unconstrained(2)), [1, 2, 3])


class TestBregman:
    def test_self_divergence(self, rng):
        x = rng.standard_normal(5)
        assert bregman(prox(Unconstrained(5)), x, x) == 0

    def test_unit(self):
        assert bregman(prox(Unconstrained(2)), [1, 0], [0, 0]) == 0.5

    def test_matches_definition(self, rng):
        p = prox(Unconstrained(4), rng.standard_normal(4))
        for _ in range(50):
            x, y = rng.standard_normal((2, 4)) * 3
            grad_y = y - p.center
            direct = prox_value(p, x) - prox_value(p, y) - grad_y @ (x - y)
            assert bregman(p, x, y) == pytest.approx(direct, abs=1e-12)
            assert bregman(p, x, y) == pytest.approx(0.5 * np.sum((x - y) ** 2), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            bregman(prox(Unconstrained(2)), [1, 0], [0, 0, 0])


class TestProject:
    def test_interior_fixed(self):
        np.testing.assert_array_equal(project(unit_ball(), [0.3, 0.4]), [0.3, 0.4])

    def test_radial_scaling(self):
        np.testing.assert_allclose(project(unit_ball(), [3, 4]), [0.6, 0.8], atol=1e-15)

    def test_unconstrained_identity(self):
        np.testing.assert_array_equal(project(Unconstrained(2), [30, -4]), [30, -4])

    def test_batched_rows(self):
        X = np.array([[3.0, 4.0], [0.1, 0.0]])
        np.testing.assert_allclose(unit_ball().project(X), [[0.6, 0.8], [0.1, 0.0]])

    @given(vecs(3), vecs(3), st.floats(0.1, 10))
    def test_idempotent_nonexpansive(self, x, y, r):
        ball = Ball(np.array([1.0, -2.0, 0.5]), r)
        px, py = ball.project(x), ball.project(y)
        assert ball.contains(px)
        np.testing.assert_allclose(ball.project(px), px, atol=1e-12)
        assert norm(px - py) <= norm(x - y) + 1e-9

    def test_contains_tolerance(self):
        b = unit_ball(1)
        assert b.contains([1.0 + 5e-13])
        assert not b.contains([1.0 + 1e-9])

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            Ball(np.zeros(2), 0.0)


class TestDaArgmin:
    def test_zero_dual_gives_center(self):
        p = prox(Ball(np.array([0.2, 0.1]), 1.0), [0.2, 0.1])
        np.testing.assert_array_equal(da_argmin(p, [0, 0], 3.0), [0.2, 0.1])

    def test_closed_form(self):
        np.testing.assert_allclose(da_argmin(prox(Unconstrained(2)), [1, 0], 0.5), [-0.5, 0])

    def test_clipped(self):
        np.testing.assert_allclose(da_argmin(prox(unit_ball()), [-4, 0], 1.0), [1, 0])

    @pytest.mark.parametrize("alpha", [0.0, -1.0])
    def test_nonpositive_alpha(self, alpha):
        with pytest.raises(ValueError):
            da_argmin(prox(unit_ball()), [1, 0], alpha)

    @given(vecs(2), st.floats(0.01, 10))
    def test_is_the_constrained_minimiser(self, z, alpha):
        # grid search oracle over the disc
        p = prox(unit_ball())
        xp = da_argmin(p, z, alpha)
        th = np.linspace(0, 2 * np.pi, 361)
        r = np.linspace(0, 1, 41)
        pts = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
        obj = pts @ z + prox_value(p, pts) / alpha
        best = z @ xp + prox_value(p, xp) / alpha
        assert best <= obj.min() + 1e-9


class TestMdStep:
    def test_zero_gradient(self):
        np.testing.assert_array_equal(md_step(prox(unit_ball()), [0.3, 0.1], [0, 0], 0.7), [0.3, 0.1])

    def test_unconstrained(self):
        np.testing.assert_allclose(md_step(prox(Unconstrained(2)), [1, 1], [1, 0], 0.5), [0.5, 1])

    def test_projected_back(self):
        np.testing.assert_allclose(md_step(prox(unit_ball()), [1, 0], [-2, 0], 1.0), [1, 0])

    def test_outside_domain(self):
        with pytest.raises(ValueError):
            md_step(prox(unit_ball()), [2, 0], [0, 0], 1.0)

    @given(vecs(3), vecs(3), st.floats(1e-3, 10))
    def test_closeness(self, x, g, alpha):
        p = prox(Ball(np.zeros(3), 2.0))
        x = p.domain.project(x)
        assert norm(md_step(p, x, g, alpha) - x) <= alpha * norm(g) + 1e-12 * (1 + alpha * norm(g))


class TestStepSchedule:
    def test_constant(self):
        assert alpha_at(StepSchedule.constant(2.0), 7) == 0.5

    def test_sqrt(self):
        assert alpha_at(StepSchedule.sqrt_growth(1.0, L=1.0), 4) == pytest.approx(1 / 3)

    def test_sqrt_offset(self):
        assert alpha_at(StepSchedule.sqrt_growth(3.0, t0=5), 4) == pytest.approx(1 / 9)

    def test_t_must_be_positive(self):
        with pytest.raises(ValueError):
            alpha_at(StepSchedule.constant(1.0), 0)

    @pytest.mark.parametrize("kw", [dict(L=-1), dict(scale=0), dict(t0=-1), dict(exponent=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            StepSchedule(**kw)

    def test_kinds(self):
        assert StepSchedule.constant(1.0).eta_kind == "constant"
        assert StepSchedule.sqrt_growth(1.0).eta_kind == "sqrt-growth"
        assert StepSchedule(exponent=0.3).eta_kind == "power"

    @given(st.floats(0, 10), st.floats(0.01, 10), st.integers(0, 50), st.floats(0, 1),
           st.integers(1, 10_000), st.integers(0, 10_000))
    def test_monotone_and_positive(self, L, scale, t0, c, t, dt):
        s = StepSchedule(L=L, scale=scale, t0=t0, exponent=c)
        a, b = alpha_at(s, t), alpha_at(s, t + dt)
        assert a >= b > 0
        assert s.eta(t) <= s.eta(t + dt)


def test_as_vec_rejects_nan():
    with pytest.raises(ValueError):
        as_vec([1.0, np.nan])
