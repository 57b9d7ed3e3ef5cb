import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from trgppo.clip_solver import (ClipRange, ConstraintPoint, GaussianQuery, SolverConfig,
                                adaptive_delta, batch_adaptive_delta, best_representable, eval_g,
                                gaussian_adaptive_delta, gaussian_clip_range,
                                gaussian_clip_ranges, gaussian_delta_for_ratio, gaussian_kl,
                                gaussian_log_ratio, polish_roots, solve_clip_range,
                                solve_clip_ranges, truncate_range, truncate_ranges)

from oracles import brute_force_gaussian

mpmath.mp.dps = 50


def g_mp(p, x):
    p, x = mpmath.mpf(p), mpmath.mpf(x)
    return (1 - p) * mpmath.log((1 - p) / (1 - p * x)) - p * mpmath.log(x)


probs = st.floats(1e-6, 1 - 1e-6)
budgets = st.floats(1e-6, 1.0)


class TestEvalG:
    def test_hand_value(self):
        # 0.5 ln(0.5/0.4) - 0.5 ln 1.2
        expected = 0.5 * math.log(1.25) - 0.5 * math.log(1.2)
        assert eval_g(0.5, 1.2) == pytest.approx(expected, rel=1e-14)
        assert eval_g(0.5, 1.2) == pytest.approx(0.020410997, abs=1e-9)

    @given(probs)
    def test_zero_at_one(self, p):
        assert eval_g(p, 1.0) == 0.0

    @pytest.mark.parametrize("p,x", [(0.3, 0.5), (1e-5, 1.0 + 1e-9), (0.999, 1.0005),
                                     (0.5, 1.9999), (1e-7, 3e6)])
    def test_matches_high_precision(self, p, x):
        assert eval_g(p, x) == pytest.approx(float(g_mp(p, x)), rel=1e-9, abs=1e-300)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            eval_g(0.5, 2.0)
        with pytest.raises(ValueError):
            eval_g(0.5, 0.0)
        with pytest.raises(ValueError):
            eval_g(0.5, -1.0)

    def test_monotone_branches_on_grid(self):
        for p in np.linspace(0.01, 0.99, 25):
            left = np.linspace(1e-4, 1.0, 400)
            right = np.linspace(1.0, (1.0 / p) * (1 - 1e-6), 400)
            assert np.all(np.diff(eval_g(p, left)) < 0)
            assert np.all(np.diff(eval_g(p, right)) > 0)

    def test_vectorised(self):
        out = eval_g(np.array([0.2, 0.4]), np.array([1.1, 0.9]))
        assert out.shape == (2,)


class TestSolve:
    def test_recovers_ppo_bounds(self):
        clip = solve_clip_range(ConstraintPoint(0.2, eval_g(0.2, 1.2)))
        assert clip.upper == pytest.approx(1.2, abs=1e-9)
        clip = solve_clip_range(ConstraintPoint(0.2, eval_g(0.2, 0.8)))
        assert clip.lower == pytest.approx(0.8, abs=1e-9)

    def test_tiny_delta_collapses_to_one(self):
        clip = solve_clip_range(ConstraintPoint(0.5, 1e-12))
        assert clip.lower == pytest.approx(1.0, abs=1e-5)
        assert clip.upper == pytest.approx(1.0, abs=1e-5)

    def test_matches_mpmath_roots(self):
        for p, d in [(0.3, 0.02), (0.01, 0.1), (0.9, 0.05), (1e-4, 1e-3)]:
            lower, upper = solve_clip_ranges(np.array([p]), d)
            ref_l = mpmath.findroot(lambda x: g_mp(p, x) - d, (mpmath.mpf("1e-30"), 1),
                                    solver="anderson")
            ref_u = mpmath.findroot(lambda x: g_mp(p, x) - d, (1, (1 - mpmath.mpf("1e-30")) / p),
                                    solver="anderson")
            assert lower[0] == pytest.approx(float(ref_l), rel=1e-9)
            assert upper[0] == pytest.approx(float(ref_u), rel=1e-9)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 1 - 1e-3), st.floats(1e-5, 0.5))
    def test_round_trip(self, p, d):
        lower, upper = solve_clip_ranges(np.array([p]), d)
        for root in (lower, upper):
            # beyond 1e-10 only where no double gets closer
            assert abs(eval_g(p, root[0]) - d) <= 1e-10 or best_representable(p, d, root)[0]
        assert 0 < lower[0] < 1 < upper[0] < 1 / p

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            ConstraintPoint(1.5, 0.1)
        with pytest.raises(ValueError):
            ConstraintPoint(0.5, 0.0)
        with pytest.raises(ValueError):
            solve_clip_ranges(np.array([0.5]), -1.0)

    def test_extreme_points_stay_in_domain(self):
        p = np.array([1e-8, 1 - 1e-8, 0.5])
        lower, upper = solve_clip_ranges(p, 1.0)
        assert np.all(lower > 0) and np.all(lower < 1)
        assert np.all(upper > 1) and np.all(p * upper < 1)

    def test_clamps_probability(self):
        cfg = SolverConfig(p_min=1e-3)
        a = solve_clip_ranges(np.array([1e-9]), 0.1, cfg)
        b = solve_clip_ranges(np.array([1e-3]), 0.1, cfg)
        np.testing.assert_array_equal(a, b)


@settings(max_examples=300)
@given(probs, probs, budgets)
def test_monotone_in_probability(p1, p2, d):
    if p1 == p2:
        return
    p1, p2 = min(p1, p2), max(p1, p2)
    lower, upper = solve_clip_ranges(np.array([p1, p2]), d)
    assert upper[0] >= upper[1]
    assert lower[0] <= lower[1]


def test_polish_from_rough_guess():
    p = np.array([0.001, 0.2, 0.7])
    d = 0.05
    exact_l, exact_u = solve_clip_ranges(p, d)
    lower, upper, iters = polish_roots(p, d, exact_l * 1.05, exact_u * 0.97)
    np.testing.assert_allclose(lower, exact_l, rtol=1e-9)
    np.testing.assert_allclose(upper, exact_u, rtol=1e-9)
    assert iters.max() < 20


class TestTruncation:
    def test_examples(self):
        r = truncate_range(ClipRange(0.9, 1.5), 0.2)
        assert (r.lower, r.upper) == (0.8, 1.5)
        r = truncate_range(ClipRange(0.5, 1.1), 0.2)
        assert (r.lower, r.upper) == (0.5, 1.2)
        r = truncate_range(ClipRange(0.5, 1.5), 0.2)
        assert (r.lower, r.upper) == (0.5, 1.5)

    @given(st.floats(0.01, 0.99), st.floats(1.01, 10), st.floats(0.01, 0.9))
    def test_contains_ppo_range(self, lo, up, eps):
        lower, upper = truncate_ranges(np.array([lo]), np.array([up]), eps)
        assert lower[0] <= 1 - eps and upper[0] >= 1 + eps

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            truncate_range(ClipRange(0.5, 1.5), 1.5)


class TestAdaptiveDelta:
    def test_both_arms(self):
        want = max(eval_g(0.3, 1.2), eval_g(0.3, 0.8))
        assert adaptive_delta(0.3, 0.3, 0.2) == pytest.approx(want, rel=1e-14)

    def test_single_arm(self):
        assert adaptive_delta(0.3, None, 0.2) == pytest.approx(eval_g(0.3, 1.2), rel=1e-14)
        assert adaptive_delta(None, 0.3, 0.2) == pytest.approx(eval_g(0.3, 0.8), rel=1e-14)

    def test_empty_classes(self):
        with pytest.raises(ValueError):
            adaptive_delta(None, None, 0.2)
        assert batch_adaptive_delta(np.array([0.4]), np.array([0.0]), 0.2) is None

    def test_vanishes_with_epsilon(self):
        values = [adaptive_delta(0.3, 0.3, e) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-8

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(1e-4, 0.8), st.sampled_from([-1.0, 1.0])),
                    min_size=1, max_size=20), st.floats(0.05, 0.5))
    def test_every_sample_reaches_ppo_bounds(self, batch, eps):
        p = np.array([b[0] for b in batch])
        adv = np.array([b[1] for b in batch])
        d = batch_adaptive_delta(p, adv, eps)
        if d is None:
            return
        lower, upper = solve_clip_ranges(p, d)
        feasible = p * (1 + eps) < 1
        assert np.all(upper[(adv > 0) & feasible] >= 1 + eps - 1e-9)
        assert np.all(lower[adv < 0] <= 1 - eps + 1e-9)

    def test_infeasible_positive_sample_is_skipped(self):
        # 0.9 * 1.2 > 1: no budget can reach 1.2 there
        d = batch_adaptive_delta(np.array([0.9, 0.2]), np.array([1.0, 1.0]), 0.2)
        assert d == pytest.approx(eval_g(0.2, 1.2))


class TestGaussian:
    def test_kl_matches_integral(self):
        mu, ls = 0.7, -0.3
        sigma = math.exp(ls)

        def integrand(x):
            p = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
            q = math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
            return p * math.log(p / q)

        ref, _ = quad(integrand, -12, 12)
        assert gaussian_kl(mu, ls) == pytest.approx(ref, rel=1e-8)

    def test_against_grid_oracle(self):
        for z in (0.0, 1.5, -2.2):
            lo, up = brute_force_gaussian(z, 0.03)
            clip = gaussian_clip_range(GaussianQuery(z, 0.03))
            assert clip.lower == pytest.approx(lo, abs=1e-3)
            assert clip.upper == pytest.approx(up, abs=1e-3)

    def test_symmetric(self):
        z = np.array([0.3, 1.1, 2.5])
        a = gaussian_clip_ranges(z, 0.05)
        b = gaussian_clip_ranges(-z, 0.05)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_shrinks_with_delta(self):
        lo, up = gaussian_clip_ranges(np.array([0.7]), 1e-10)
        assert lo[0] == pytest.approx(1.0, abs=1e-4)
        assert up[0] == pytest.approx(1.0, abs=1e-4)

    def test_array_delta_matches_scalar(self):
        z = np.array([0.0, 1.0, 2.0])
        d = np.array([0.01, 0.05, 0.2])
        lo, up = gaussian_clip_ranges(z, d)
        for i in range(3):
            l1, u1 = gaussian_clip_ranges(z[i:i + 1], float(d[i]))
            assert (lo[i], up[i]) == pytest.approx((l1[0], u1[0]), rel=1e-12)

    def test_delta_for_ratio_round_trip(self):
        for z in (0.0, 0.8, 1.7):
            d = gaussian_delta_for_ratio(z, 1.2)
            _, up = gaussian_clip_ranges(np.array([z]), d)
            assert up[0] == pytest.approx(1.2, abs=1e-6)
            d = gaussian_delta_for_ratio(z, 0.8)
            lo, _ = gaussian_clip_ranges(np.array([z]), d)
            assert lo[0] == pytest.approx(0.8, abs=1e-6)

    def test_adaptive_uses_smallest_offset(self):
        z = np.array([0.2, 1.5, -0.1, 2.0])
        adv = np.array([1.0, 1.0, -1.0, -1.0])
        d = gaussian_adaptive_delta(z, adv, 0.2)
        want = max(gaussian_delta_for_ratio(0.2, 1.2), gaussian_delta_for_ratio(0.1, 0.8))
        assert d == pytest.approx(want, rel=1e-12)
        lo, up = gaussian_clip_ranges(z, d)
        assert np.all(up[adv > 0] >= 1.2 - 1e-6)
        assert np.all(lo[adv < 0] <= 0.8 + 1e-6)

    def test_adaptive_multi_dimensional(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal((6, 2))
        adv = np.array([1.0, -1.0, 1.0, -1.0, 1.0, 1.0])
        d = gaussian_adaptive_delta(z, adv, 0.2, dims=2)
        lo1, up1 = gaussian_clip_ranges(z[:, 0], d / 2)
        lo2, up2 = gaussian_clip_ranges(z[:, 1], d / 2)
        assert np.all((up1 * up2)[adv > 0] >= 1.2 - 1e-6)
        assert np.all((lo1 * lo2)[adv < 0] <= 0.8 + 1e-6)

    def test_query_validation(self):
        with pytest.raises(ValueError):
            GaussianQuery(float("nan"), 0.1)
        with pytest.raises(ValueError):
            gaussian_clip_ranges(np.array([0.0]), 0.0)
