import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdexp.errors import NonPositiveScale
from wdexp.lrsched import CorrectionRecord
from wdexp.scaleinv import norm_logistic, norm_quadratic
from wdexp.statealg import (
    apply,
    build_Ht,
    canon,
    compose,
    equivalent_scaling,
    gd,
    pi1,
    pi2,
    pi3,
    pi4,
    random_state,
    state,
    state_rel_err,
    verify_canonicalization,
    verify_lemma_commute,
    verify_lemma_commute_momentum,
    verify_lemma_gdw,
    verify_lemma_gdw_momentum,
)

QUAD = norm_quadratic(8, seed=1)
QUAD2 = norm_quadratic(2, seed=1)


def plain_quadratic_grad(dim, seed=2):
    """Gradient of theta^T A theta / 2: NOT scale-invariant."""
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((dim, dim))
    a = 0.5 * (m + m.T)

    def grad(theta, t=0):
        return a @ theta

    return grad


class TestMaps:
    def test_scales_act_on_their_coordinate(self):
        s = state([1.0, 2.0], 0.5, [3.0, 4.0], 0.25)
        out = apply(compose(pi1(2.0), pi2(3.0), pi3(5.0), pi4(7.0)), s)
        np.testing.assert_array_equal(out.theta, [2.0, 4.0])
        assert out.lr == 1.5
        np.testing.assert_array_equal(out.theta_prev, [15.0, 20.0])
        assert out.lr_prev == 1.75

    def test_non_positive_scale_rejected(self):
        for c in [0.0, -1.0, float("nan")]:
            with pytest.raises(NonPositiveScale):
                pi1(c)

    def test_canon_preserves_momentum_ratio(self):
        s = state([1.0, 0.0], 0.2, [0.0, 1.0], 0.05)
        out = apply(canon(), s)
        assert out.lr_prev == out.lr == 0.2
        np.testing.assert_allclose(
            (out.theta - out.theta_prev) / out.lr_prev,
            (s.theta - s.theta_prev) / s.lr_prev)
        np.testing.assert_array_equal(out.theta, s.theta)

    def test_gd_without_momentum(self):
        s = state([1.0, 1.0], 0.1, [9.0, 9.0], 1.0)
        g = QUAD2.grad(s.theta)
        out = apply(gd(QUAD2.grad, 0.0, rho=0.99), s)
        np.testing.assert_allclose(out.theta, 0.99 * s.theta - 0.1 * g)
        np.testing.assert_array_equal(out.theta_prev, s.theta)
        assert out.lr == out.lr_prev == 0.1

    def test_gd_momentum_uses_buffered_ratio(self):
        s = state([1.0, 0.0], 0.1, [0.5, 0.0], 0.2)
        out = apply(gd(QUAD2.grad, 0.9), s)
        g = QUAD2.grad(np.array([1.0, 0.0]))
        expect = s.theta + 0.1 * (0.9 * (s.theta - s.theta_prev) / 0.2 - g)
        np.testing.assert_allclose(out.theta, expect)

    def test_compose_applies_rightmost_first(self):
        s = state([1.0], 1.0, [1.0], 1.0)
        # pi2(2) then canon: lr_prev ends at 2, not 1
        out = apply(compose(canon(), pi2(2.0)), s)
        assert out.lr_prev == 2.0
        nested = compose(pi1(2.0), compose(pi2(3.0), pi4(5.0)))
        assert len(nested.maps) == 3

    def test_equivalent_scaling_coords(self):
        s = state([1.0, -1.0], 0.1, [2.0, 0.0], 0.4)
        out = apply(equivalent_scaling(3.0), s)
        np.testing.assert_array_equal(out.theta, [3.0, -3.0])
        assert out.lr == pytest.approx(0.9)
        np.testing.assert_array_equal(out.theta_prev, [6.0, 0.0])
        assert out.lr_prev == pytest.approx(3.6)

    def test_random_state_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = random_state(rng, 5)
            assert 0.5 - 1e-12 <= np.linalg.norm(s.theta) <= 2.0 + 1e-12
            assert 1e-3 <= s.lr <= 1.0 and 1e-3 <= s.lr_prev <= 1.0
        s = random_state(rng, 5, equal_lrs=True)
        assert s.lr == s.lr_prev


class TestLemmas:
    def test_gdw_exact_for_any_objective(self):
        for grad_fn in [QUAD.grad, plain_quadratic_grad(8)]:
            rep = verify_lemma_gdw(grad_fn, trials=100, seed=3)
            assert rep["passed"], rep["violations"][:2]
            assert rep["max_rel_err"] <= 1e-10

    def test_gdw_momentum_exact_for_any_objective(self):
        for grad_fn in [QUAD.grad, plain_quadratic_grad(8)]:
            rep = verify_lemma_gdw_momentum(grad_fn, gamma=0.9,
                                            trials=100, seed=4)
            assert rep["passed"], rep["violations"][:2]
            assert rep["max_rel_err"] <= 1e-10

    def test_commute_needs_scale_invariance(self):
        good = verify_lemma_commute(QUAD.grad, trials=100, seed=5)
        assert good["passed"]
        bad = verify_lemma_commute(plain_quadratic_grad(8), trials=100,
                                   seed=5)
        assert not bad["passed"]
        assert bad["max_rel_err"] > 1e-3

    def test_commute_momentum_needs_scale_invariance(self):
        obj = norm_logistic(8, 16, seed=9)
        good = verify_lemma_commute_momentum(obj.grad, trials=100, seed=6)
        assert good["passed"]
        bad = verify_lemma_commute_momentum(plain_quadratic_grad(8),
                                            trials=100, seed=6)
        assert not bad["passed"]

    def test_canonicalization_identities(self):
        rep = verify_canonicalization(QUAD.grad, trials=100, seed=7)
        assert rep["passed"]
        assert rep["max_rel_err"] <= 1e-10

    def test_report_fields(self):
        rep = verify_lemma_gdw(QUAD.grad, trials=7, seed=0)
        assert rep["lemma"] == "gdw"
        assert rep["trials"] == 7
        assert rep["violations"] == []

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_gdw_randomized(self, seed):
        rep = verify_lemma_gdw(QUAD.grad, trials=5, seed=seed)
        assert rep["passed"]


class TestBuildHt:
    def test_identity_when_phase_unchanged(self):
        c = CorrectionRecord(t=10, alpha_t=0.997, alpha_t1=0.997,
                             eta_prev=0.1, eta_cur=0.1)
        rng = np.random.default_rng(1)
        for _ in range(20):
            s = random_state(rng, 4, equal_lrs=True)
            out = apply(build_Ht(c), s)
            assert state_rel_err(out, s) <= 1e-12

    def test_buffered_action(self):
        c = CorrectionRecord(t=100, alpha_t=0.999, alpha_t1=0.9995,
                             eta_prev=0.1, eta_cur=0.01)
        rng = np.random.default_rng(2)
        s = random_state(rng, 4, equal_lrs=True)
        out = apply(build_Ht(c), s)
        r = 0.01 / 0.1
        expect_prev = 0.9995 * (s.theta - r * (s.theta - s.theta_prev / 0.999))
        np.testing.assert_allclose(out.theta_prev, expect_prev, rtol=1e-12)
        assert out.lr_prev == pytest.approx(s.lr * r * 0.9995 / 0.999,
                                            rel=1e-12)
        np.testing.assert_array_equal(out.theta, s.theta)
        assert out.lr == pytest.approx(s.lr, rel=1e-12)
