import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    FROZEN_COSINE_T10,
    FROZEN_ROOTS,
    FROZEN_TEXP_JUMP,
    FROZEN_TEXPPP_CONST,
    bisect_z1,
    mp_texppp,
)
from wdexp.errors import (
    BoundViolation,
    ConfigError,
    InfeasibleRoots,
    NonPositiveAlpha,
)
from wdexp.lrsched import (
    HyperParams,
    Phase,
    ScheduleSpec,
    alpha_bounds_check,
    solve_quadratic,
    texp_texppp_deviation,
    translate_constant,
    translate_cosine,
    translate_step_decay_texp,
    translate_texp_minus,
    translate_texppp,
)

STD = HyperParams(gamma=0.9, lam=5e-4, eta0=0.1)


def three_phase_spec(gamma=0.9, wd=5e-4, eta0=0.1, phase_len=100, drop=0.1):
    return ScheduleSpec(
        kind="step_decay",
        gamma=gamma,
        phases=tuple(
            Phase(start=i * phase_len, lr=eta0 * drop**i, wd=wd)
            for i in range(3)
        ),
    )


class TestSolveQuadratic:
    def test_no_decay_gives_one_and_gamma(self):
        for gamma in [0.0, 0.5, 0.9, 0.99]:
            r = solve_quadratic(gamma, 0.0, 0.1)
            assert r.z1 == 1.0
            assert r.z2 == gamma

    def test_standard_point_matches_bisection(self):
        r = solve_quadratic(0.9, 5e-4, 0.1)
        assert r.z1 == pytest.approx(FROZEN_ROOTS["z1_standard"], rel=1e-12)
        assert r.z2 == pytest.approx(FROZEN_ROOTS["z2_standard"], rel=1e-12)

    def test_infeasible_raises_with_limit(self):
        hp = HyperParams(gamma=0.9, lam=5e-4, eta0=0.1)
        assert hp.feasible
        with pytest.raises(InfeasibleRoots) as ei:
            solve_quadratic(0.9, 0.1, 0.1)
        assert "0.002633" in str(ei.value)  # (1 - sqrt(0.9))^2

    def test_feasibility_margin_frozen(self):
        assert STD.feasibility_margin == pytest.approx(
            FROZEN_ROOTS["feasibility_margin"], rel=1e-12)

    def test_boundary_discriminant_clamped(self):
        gamma = 0.25
        le = (1.0 - math.sqrt(gamma)) ** 2
        r = solve_quadratic(gamma, le, 1.0)
        assert r.z1 == pytest.approx(math.sqrt(gamma), rel=1e-7)
        assert r.z1 >= r.z2

    def test_rejects_bad_gamma(self):
        with pytest.raises(ConfigError):
            solve_quadratic(1.0, 0.0, 0.1)
        with pytest.raises(ConfigError):
            solve_quadratic(-0.1, 0.0, 0.1)

    # frac capped below 1: at the double root the discriminant is not
    # resolvable in doubles and root accuracy degrades to ~sqrt(eps),
    # which test_boundary_discriminant_clamped covers separately
    @given(
        gamma=st.floats(0.0, 0.999),
        frac=st.floats(0.0, 0.99),
        eta=st.floats(1e-4, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_root_identities(self, gamma, frac, eta):
        le = frac * (1.0 - math.sqrt(gamma)) ** 2
        lam = le / eta
        r = solve_quadratic(gamma, lam, eta)
        b = 1.0 + gamma - lam * eta
        assert gamma - 1e-12 <= r.z2 <= r.z1 <= 1.0 + 1e-12
        assert r.z1 * r.z2 == pytest.approx(gamma, abs=1e-12)
        assert r.z1 + r.z2 == pytest.approx(b, rel=1e-12)
        # safe bound on the gap; tau = lam*eta / (1 - gamma)
        tau = le / (1.0 - gamma)
        assert 1.0 - r.z1 <= 2.0 * tau + 1e-12

    def test_sweep_against_bisection(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            gamma = rng.uniform(0.0, 0.99)
            le = rng.uniform(0.0, 1.0) * (1.0 - math.sqrt(gamma)) ** 2
            z1 = solve_quadratic(gamma, le, 1.0).z1
            assert abs(z1 - bisect_z1(gamma, le, 1.0)) <= 1e-12


class TestTranslateConstant:
    def test_closed_form(self):
        tr = translate_constant(STD, 50)
        alpha = solve_quadratic(0.9, 5e-4, 0.1).z1
        t = np.arange(50)
        expect = 0.1 * alpha ** -(2 * t + 1)
        np.testing.assert_allclose(tr.eta_tilde, expect, rtol=1e-12)
        assert tr.eta_tilde[0] == pytest.approx(
            FROZEN_ROOTS["eta_tilde_0"], rel=1e-12)

    def test_logP_is_minus_t_log_alpha(self):
        tr = translate_constant(STD, 20)
        alpha = tr.alpha_seq[-1]
        np.testing.assert_allclose(
            tr.logP_seq, -np.arange(21) * math.log(alpha), atol=1e-15)
        assert tr.logP_seq[0] == 0.0
        assert tr.alpha_seq[0] == 1.0

    def test_initial_state_transform_fields(self):
        tr = translate_constant(STD, 5)
        alpha = tr.alpha_seq[-1]
        assert tr.init_buffer_scale == alpha
        assert tr.log_eta_tilde_minus1 == pytest.approx(
            math.log(0.1 * alpha), rel=1e-15)

    def test_overflow_marker(self):
        hp = HyperParams(gamma=0.0, lam=0.5, eta0=1.0)  # alpha = 0.5
        tr = translate_constant(hp, 600)
        assert tr.overflowed_at is not None
        assert np.isinf(tr.eta_tilde[tr.overflowed_at:]).all()
        assert np.isfinite(tr.eta_tilde[:tr.overflowed_at]).all()
        assert np.isfinite(tr.log_eta_tilde).all()

    def test_epoch_growth_frozen(self):
        tr = translate_constant(STD, 3)
        alpha = tr.alpha_seq[-1]
        assert (1.0 / alpha) ** (2 * 391) == pytest.approx(
            FROZEN_ROOTS["epoch_growth_391"], rel=1e-10)


class TestTexp:
    def test_single_phase_matches_constant(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),))
        tr = translate_step_decay_texp(spec, 40)
        const = translate_constant(STD, 40)
        np.testing.assert_allclose(tr.log_eta_tilde, const.log_eta_tilde,
                                   rtol=0, atol=1e-12)
        np.testing.assert_array_equal(tr.alpha_seq, const.alpha_seq)
        np.testing.assert_allclose(tr.logP_seq, const.logP_seq, atol=1e-12)
        assert tr.corrections == ()

    def test_in_phase_ratio_is_exact_growth(self):
        spec = three_phase_spec()
        tr = translate_step_decay_texp(spec, 300)
        pidx = spec.phase_index(np.arange(300))
        roots = [solve_quadratic(0.9, p.wd, p.lr).z1 for p in spec.phases]
        for t in range(1, 300):
            if pidx[t] == pidx[t - 1]:
                ratio = tr.eta_tilde[t] / tr.eta_tilde[t - 1]
                assert ratio == pytest.approx(roots[pidx[t]] ** -2, rel=1e-15)

    def test_jump_factor_frozen(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),
                                    Phase(100, 0.01, 5e-4)))
        tr = translate_step_decay_texp(spec, 120)
        ratio = tr.eta_tilde[100] / tr.eta_tilde[99]
        assert ratio == pytest.approx(FROZEN_TEXP_JUMP, rel=1e-14)

    def test_correction_records(self):
        spec = three_phase_spec()
        tr = translate_step_decay_texp(spec, 300)
        assert [c.t for c in tr.corrections] == [100, 200]
        c = tr.corrections[0]
        assert c.eta_prev == 0.1 and c.eta_cur == pytest.approx(0.01)
        assert c.alpha_t == pytest.approx(FROZEN_ROOTS["z1_standard"],
                                          rel=1e-12)
        assert c.alpha_t1 == pytest.approx(FROZEN_ROOTS["z1_phase2"],
                                           rel=1e-12)
        assert tr.correction_at(100) is c
        assert tr.correction_at(99) is None

    def test_degenerate_phase_change_skipped(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),
                                    Phase(50, 0.1, 5e-4)))
        tr = translate_step_decay_texp(spec, 100)
        assert tr.corrections == ()

    def test_infeasible_phase_reports_index(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),
                                    Phase(50, 10.0, 0.1)))
        with pytest.raises(InfeasibleRoots) as ei:
            translate_step_decay_texp(spec, 100)
        assert "phase 1" in str(ei.value)

    def test_texp_minus_skips_instant_decay(self):
        spec = three_phase_spec()
        texp = translate_step_decay_texp(spec, 300)
        minus = translate_texp_minus(spec, 300)
        r_texp = texp.eta_tilde[100] / texp.eta_tilde[99]
        r_minus = minus.eta_tilde[100] / minus.eta_tilde[99]
        assert r_minus == pytest.approx(r_texp / 0.1, rel=1e-12)
        # in-phase growth identical
        assert minus.eta_tilde[55] / minus.eta_tilde[54] == pytest.approx(
            texp.eta_tilde[55] / texp.eta_tilde[54], rel=1e-15)
        assert "WD reduced" in minus.note
        assert minus.corrections == ()


class TestTexppp:
    def test_constant_first_alphas_frozen(self):
        tr = translate_texppp([0.1] * 10, [5e-4] * 10, 0.9)
        assert tr.alpha_seq[0] == 1.0
        assert tr.alpha_seq[1] == FROZEN_TEXPPP_CONST["alpha_1"]
        assert tr.alpha_seq[2] == pytest.approx(
            FROZEN_TEXPPP_CONST["alpha_2"], rel=1e-15)

    def test_constant_alpha_converges_to_root(self):
        tr = translate_texppp([0.1] * 200, [5e-4] * 200, 0.9)
        z1 = solve_quadratic(0.9, 5e-4, 0.1).z1
        assert abs(tr.alpha_seq[-1] - z1) < 1e-12

    def test_lr_product_invariant(self):
        rng = np.random.default_rng(3)
        etas = 10.0 ** rng.uniform(-3, -1, size=50)
        lams = 10.0 ** rng.uniform(-5, -3, size=50)
        tr = translate_texppp(etas, lams, 0.7)
        expect = np.exp(tr.logP_seq[:-1] + tr.logP_seq[1:]) * etas
        np.testing.assert_allclose(tr.eta_tilde, expect, rtol=1e-12)

    def test_cosine_matches_extended_precision(self):
        tr = translate_cosine(eta0=0.1, T=100, lam=5e-4, gamma=0.9)
        assert tr.num_iters == 100
        assert tr.alpha_seq[10] == pytest.approx(FROZEN_COSINE_T10["alpha"],
                                                 rel=1e-13)
        assert tr.logP_seq[10] == pytest.approx(FROZEN_COSINE_T10["logP"],
                                                rel=1e-12)
        assert tr.eta_tilde[10] == pytest.approx(
            FROZEN_COSINE_T10["eta_tilde"], rel=1e-13)

    def test_against_mpmath_on_random_schedule(self):
        rng = np.random.default_rng(11)
        etas = 10.0 ** rng.uniform(-2, -0.5, size=30)
        lams = 10.0 ** rng.uniform(-4, -2.5, size=30)
        tr = translate_texppp(etas, lams, 0.85)
        ref = mp_texppp(etas, lams, 0.85, upto=25)
        assert tr.alpha_seq[25] == pytest.approx(ref["alpha"], rel=1e-12)
        assert tr.logP_seq[25] == pytest.approx(ref["logP"], rel=1e-10)
        assert tr.eta_tilde[25] == pytest.approx(ref["eta_tilde"], rel=1e-12)

    def test_non_positive_alpha_rejected(self):
        with pytest.raises(NonPositiveAlpha) as ei:
            translate_texppp([1.0, 1.0], [1.5, 1.5], 0.0)
        assert ei.value.t == 1

    def test_alpha_minus1_seed_shifts_logP(self):
        # alpha_-1 never enters the recursion, only the product P
        etas, lams = [0.1] * 5, [1e-3] * 5
        base = translate_texppp(etas, lams, 0.9)
        seeded = translate_texppp(etas, lams, 0.9, alpha_minus1=2.0)
        np.testing.assert_array_equal(seeded.alpha_seq, base.alpha_seq)
        np.testing.assert_allclose(seeded.logP_seq,
                                   base.logP_seq - math.log(2.0), atol=1e-12)
        assert seeded.init_buffer_scale == pytest.approx(0.5)

    def test_length_validation(self):
        with pytest.raises(ConfigError):
            translate_texppp([0.1], [1e-3], 0.9)
        with pytest.raises(ConfigError):
            translate_texppp([0.1, 0.1], [1e-3], 0.9)

    @given(gamma=st.floats(0.0, 0.95), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_random_schedules_keep_alpha_in_unit_interval(self, gamma, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        # decreasing LR, bounded WD: the regime the bounds are proven for
        etas = np.sort(10.0 ** rng.uniform(-3, -1, size=n))[::-1]
        lams = 10.0 ** rng.uniform(-5, -3, size=n)
        tr = translate_texppp(etas, lams, gamma)
        z_min = solve_quadratic(gamma, lams.max(), etas.max()).z1
        assert (tr.alpha_seq[1:] <= 1.0 + 1e-12).all()
        assert (tr.alpha_seq[1:] >= z_min - 1e-12).all()


class TestBoundsCheck:
    def test_passes_on_texp(self):
        tr = translate_step_decay_texp(three_phase_spec(), 300)
        rep = alpha_bounds_check(tr, 5e-4, 0.1, 0.9)
        assert rep["passed"]
        assert rep["z_min"] == pytest.approx(FROZEN_ROOTS["z1_standard"],
                                             rel=1e-12)
        assert all(row["rel_err"] <= 1e-12 for row in rep["identity"])

    def test_passes_on_cosine_texppp(self):
        tr = translate_cosine(0.1, 200, 5e-4, 0.9)
        rep = alpha_bounds_check(tr, 5e-4, 0.1, 0.9)
        assert rep["passed"]

    def test_doctored_alpha_flagged(self):
        tr = translate_step_decay_texp(three_phase_spec(), 300)
        bad = tr.alpha_seq.copy()
        bad[37] = 1.5
        doctored = dataclasses.replace(tr, alpha_seq=bad)
        with pytest.raises(BoundViolation) as ei:
            alpha_bounds_check(doctored, 5e-4, 0.1, 0.9)
        assert ei.value.t == 37

    def test_nonunit_seed_rejected(self):
        tr = translate_texppp([0.1] * 5, [1e-3] * 5, 0.9, alpha0=1.1)
        with pytest.raises(BoundViolation):
            alpha_bounds_check(tr, 1e-3, 0.1, 0.9)


class TestDeviation:
    def test_three_phase_within_envelope(self):
        rep = texp_texppp_deviation(three_phase_spec(), 300)
        assert rep["passed"]
        assert rep["exceedances"] == 0
        assert rep["max_in_phase_deviation"] <= FROZEN_ROOTS["envelope_coeff"]

    def test_deviation_decays_within_phase(self):
        rep = texp_texppp_deviation(three_phase_spec(), 300)
        t, dev, inp = rep["t"], rep["deviation"], rep["in_phase"]
        # mid-phase-2 deviation far below the phase-start deviation
        d_start = dev[(t == 102)][0]
        d_mid = dev[(t == 180)][0]
        assert d_mid < d_start * 1e-2
        assert inp[(t == 102)][0] and not inp[(t == 200)][0]


class TestScheduleSpec:
    def test_json_round_trip(self):
        spec = three_phase_spec()
        again = ScheduleSpec.from_json(spec.to_json())
        assert again == spec

    def test_cosine_json(self):
        doc = {"kind": "cosine", "gamma": 0.9, "eta0": 0.1, "wd": 5e-4,
               "T": 100}
        spec = ScheduleSpec.from_json(doc)
        eta, lam = spec.materialize(100)
        assert eta[0] == pytest.approx(0.1)
        assert eta[50] == pytest.approx(0.05)
        assert (eta > 0).all() and (lam == 5e-4).all()

    def test_explicit_round_trip(self):
        spec = ScheduleSpec(kind="explicit", gamma=0.5,
                            eta_seq=(0.1, 0.05), lambda_seq=(1e-3, 1e-3))
        again = ScheduleSpec.from_json(spec.to_json())
        assert again == spec
        assert again.num_iters() == 2

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            ScheduleSpec(kind="step_decay", gamma=0.9,
                         phases=(Phase(5, 0.1, 0.0),))
        with pytest.raises(ConfigError):
            ScheduleSpec(kind="step_decay", gamma=0.9,
                         phases=(Phase(0, 0.1, 0.0), Phase(0, 0.2, 0.0)))
        with pytest.raises(ConfigError):
            ScheduleSpec(kind="constant", gamma=0.9, eta0=0.1)
        with pytest.raises(ConfigError):
            ScheduleSpec(kind="nope", gamma=0.9)
        with pytest.raises(ConfigError):
            ScheduleSpec.from_json({"kind": "constant"})
