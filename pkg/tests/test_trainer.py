import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdexp.errors import ConfigError, LengthMismatch, NumericalBlowup
from wdexp.lrsched import (
    HyperParams,
    Phase,
    ScheduleSpec,
    translate_constant,
    translate_cosine,
    translate_step_decay_texp,
)
from wdexp.scaleinv import norm_logistic, norm_quadratic
from wdexp.trainer import (
    run_sgd_exp,
    run_sgd_wd,
    stabilize,
    verify_equivalence,
)

OBJ = norm_logistic(12, 64, seed=2)
THETA0 = np.random.default_rng(5).standard_normal(12) * 2.0


def paired_runs(translated, gamma, obj=OBJ, theta0=THETA0, v0=None,
                **kwargs):
    wd = run_sgd_wd(obj, translated.eta_seq, translated.lambda_seq,
                    theta0, gamma, v0=v0, **kwargs)
    ex = run_sgd_exp(obj, translated, theta0, gamma, v0=v0, **kwargs)
    return wd, ex


class TestEquivalence:
    def test_constant_no_momentum(self):
        obj = norm_quadratic(10, seed=3)
        tr = translate_constant(HyperParams(0.0, 5e-4, 0.1), 150)
        wd, ex = paired_runs(tr, 0.0, obj=obj,
                             theta0=np.linspace(1.0, 2.0, 10))
        rep = verify_equivalence(wd, ex, tr, growth_per_iter=0.0,
                                 dir_tol=1e-10, norm_tol=1e-12)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])

    def test_constant_with_momentum(self):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 200)
        wd, ex = paired_runs(tr, 0.9)
        rep = verify_equivalence(wd, ex, tr, growth_per_iter=0.0,
                                 dir_tol=1e-12, norm_tol=1e-12)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])

    def test_step_decay_with_corrections(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),
                                    Phase(60, 0.01, 5e-4),
                                    Phase(120, 0.001, 5e-4)))
        tr = translate_step_decay_texp(spec, 180)
        wd, ex = paired_runs(tr, 0.9)
        rep = verify_equivalence(wd, ex, tr, growth_per_iter=0.0,
                                 dir_tol=1e-12, norm_tol=1e-12)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])

    def test_removing_corrections_breaks_phase_starts(self):
        spec = ScheduleSpec(kind="step_decay", gamma=0.9,
                            phases=(Phase(0, 0.1, 5e-4),
                                    Phase(60, 0.01, 5e-4)))
        tr = translate_step_decay_texp(spec, 120)
        wd, ex = paired_runs(tr, 0.9)
        good = verify_equivalence(wd, ex, tr, growth_per_iter=0.0)
        bare = dataclasses.replace(tr, corrections=())
        ex_bare = run_sgd_exp(OBJ, bare, THETA0, 0.9)
        bad = verify_equivalence(wd, ex_bare, tr, growth_per_iter=0.0)
        assert good["passed"]
        assert not bad["passed"]
        assert bad["first_violation"] == 61  # first iterate shaped by the
        # new phase's LR without the buffered-state fix
        assert bad["max_norm_err"] > 10.0 * good["max_norm_err"]

    def test_texppp_cosine_exact(self):
        tr = translate_cosine(0.1, 150, 5e-4, 0.9)
        wd, ex = paired_runs(tr, 0.9)
        rep = verify_equivalence(wd, ex, tr, growth_per_iter=0.0,
                                 dir_tol=1e-12, norm_tol=1e-12)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])

    def test_nonzero_initial_velocity(self):
        rng = np.random.default_rng(9)
        v0 = rng.standard_normal(12)
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 120)
        wd, ex = paired_runs(tr, 0.9, v0=v0)
        rep = verify_equivalence(wd, ex, tr, growth_per_iter=0.0,
                                 dir_tol=1e-12, norm_tol=1e-11)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])

    @given(
        gamma=st.sampled_from([0.0, 0.5, 0.9]),
        le_frac=st.floats(0.01, 0.8),
        eta0=st.floats(0.01, 0.3),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=10, deadline=None)
    def test_equivalence_envelope_randomized(self, gamma, le_frac, eta0,
                                             seed):
        lam = le_frac * (1.0 - math.sqrt(gamma)) ** 2 / eta0
        tr = translate_constant(HyperParams(gamma, lam, eta0), 80)
        rng = np.random.default_rng(seed)
        theta0 = rng.standard_normal(12) * rng.uniform(0.5, 2.0)
        wd, ex = paired_runs(tr, gamma, theta0=theta0)
        rep = verify_equivalence(wd, ex, tr, dir_tol=1e-8, norm_tol=1e-7,
                                 growth_per_iter=0.01)
        assert rep["passed"], (rep["max_dir_gap"], rep["max_norm_err"])


class TestStabilization:
    def test_stabilize_hits_target(self):
        theta = np.array([3.0, 4.0])
        th, lr, thp, lrp, log_c = stabilize(theta, 0.1, theta * 0.9, 0.2,
                                            target=0.0)
        assert np.linalg.norm(th) == pytest.approx(1.0, rel=1e-15)
        assert lr == pytest.approx(0.1 * math.exp(2 * log_c))
        assert lrp == pytest.approx(0.2 * math.exp(2 * log_c))

    @pytest.mark.parametrize("every", [1, 50])
    def test_neutrality(self, every):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 200)
        base = run_sgd_exp(OBJ, tr, THETA0, 0.9)
        stab = run_sgd_exp(OBJ, tr, THETA0, 0.9, stabilize_every=every)
        assert np.abs(stab.log_norm - base.log_norm).max() <= 1e-10
        cos = np.sum(stab.unit_dirs() * base.unit_dirs(), axis=1)
        assert cos.min() >= 1.0 - 1e-12
        assert np.abs(stab.update_norm - base.update_norm).max() <= 1e-10
        assert np.abs(stab.grad_norm - base.grad_norm).max() <= 1e-10

    def test_neutrality_wd_run(self):
        n = 200
        base = run_sgd_wd(OBJ, [0.1] * n, [5e-4] * n, THETA0, 0.9)
        stab = run_sgd_wd(OBJ, [0.1] * n, [5e-4] * n, THETA0, 0.9,
                          stabilize_every=50)
        assert np.abs(stab.log_norm - base.log_norm).max() <= 1e-10

    def test_long_exp_run_stays_finite(self):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 5000)
        run = run_sgd_exp(OBJ, tr, THETA0, 0.9, stabilize_every=50)
        assert np.isfinite(run.thetas).all()
        assert run.log_norm[-1] > 2.0  # real growth, reconstructed


class TestMechanics:
    def test_bit_identical_determinism(self):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 100)
        a = run_sgd_exp(OBJ, tr, THETA0, 0.9, stabilize_every=50)
        b = run_sgd_exp(OBJ, tr, THETA0, 0.9, stabilize_every=50)
        assert np.array_equal(a.thetas, b.thetas)
        assert np.array_equal(a.log_norm, b.log_norm)
        c = run_sgd_wd(OBJ, [0.1] * 100, [5e-4] * 100, THETA0, 0.9)
        d = run_sgd_wd(OBJ, [0.1] * 100, [5e-4] * 100, THETA0, 0.9)
        assert np.array_equal(c.thetas, d.thetas)

    def test_initial_records(self):
        n = 50
        run = run_sgd_wd(OBJ, [0.1] * n, [5e-4] * n, THETA0, 0.9)
        assert run.num_iters == n
        assert run.d_minus1 == 0.0
        assert run.r_minus1 == pytest.approx(np.linalg.norm(THETA0) ** 2)
        assert run.eta_minus1 == 0.1
        assert run.log_norm[0] == pytest.approx(
            math.log(np.linalg.norm(THETA0)))
        assert run.dir_cos_ref()[0] == pytest.approx(1.0)

    def test_blowup_raises(self):
        tr = translate_constant(HyperParams(0.0, 0.9, 1.0), 400)
        with pytest.raises(NumericalBlowup):
            run_sgd_exp(OBJ, tr, THETA0, 0.0)

    def test_validation(self):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 10)
        with pytest.raises(ConfigError):
            run_sgd_exp(OBJ, tr, THETA0, 0.5)  # gamma mismatch
        with pytest.raises(LengthMismatch):
            run_sgd_wd(OBJ, [0.1] * 5, [5e-4] * 4, THETA0, 0.9)
        with pytest.raises(ConfigError):
            run_sgd_wd(OBJ, [0.1] * 5, [5e-4] * 5, np.zeros(12), 0.9)

    def test_verify_rejects_length_mismatch(self):
        tr = translate_constant(HyperParams(0.9, 5e-4, 0.1), 30)
        tr2 = translate_constant(HyperParams(0.9, 5e-4, 0.1), 20)
        wd, _ = paired_runs(tr, 0.9)
        _, ex2 = paired_runs(tr2, 0.9)
        with pytest.raises(LengthMismatch):
            verify_equivalence(wd, ex2, tr)
