"""Paired SGD runs demonstrating the weight-decay / growing-LR
equivalence on scale-invariant objectives.

``run_sgd_wd`` performs SGD with momentum and decoupled weight decay:

    theta_{t+1} = (1 - lam_t*eta_t)*theta_t
                  + eta_t*(gamma*(theta_t - theta_{t-1})/eta_{t-1} - g_t)

``run_sgd_exp`` performs the weight-decay-free run with the translated
exponentially growing LR sequence, applying the translator's momentum
corrections at phase starts.  Both runs draw batch t from the same seed
stream, so the equivalence can be checked trajectory-by-trajectory with
``verify_equivalence``: directions must coincide and log-norms must
differ by exactly logP_t.

Exponential LR growth overflows the norm quickly, so the loops support
periodic renormalization to a target log-norm ("stabilization").  The
rescaling is the function-space-preserving map (theta, lr, theta_prev,
lr_prev) -> (c theta, c^2 lr, c theta_prev, c^2 lr_prev), and the decay
factor is computed from the scale-free product lam_t*eta_t, so the
stabilized trajectory is the exact image of the unstabilized one.  All
recorded quantities are reported in the unstabilized scale, recovered
through the accumulated log multiplier.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LengthMismatch, NumericalBlowup
from .statealg import TrainState, apply, build_Ht

_DEF_TARGET = 0.0  # stabilize toward log-norm 0, i.e. unit norm
_LOG_MAX = math.log(np.finfo(np.float64).max)


def stabilize(theta, lr, theta_prev, lr_prev, target=_DEF_TARGET):
    """Rescale a state to log-norm ``target`` along the equivalence
    class; returns the new state tuple and log(c)."""
    log_c = target - math.log(np.linalg.norm(theta))
    c = math.exp(log_c)
    c2 = c * c
    return theta * c, lr * c2, theta_prev * c, lr_prev * c2, log_c


@dataclass
class Trajectory:
    """Recorded run.  Index t of ``thetas`` holds the state the step-t
    gradient saw (post-stabilization); ``accum[t]`` is the cumulative
    log multiplier baked into it, so the unstabilized iterate is
    thetas[t] * exp(-accum[t]) and ``log_norm`` is already corrected."""

    kind: str
    thetas: np.ndarray        # (n+1, dim)
    accum: np.ndarray         # (n+1,)
    log_norm: np.ndarray      # (n+1,) unstabilized
    loss: np.ndarray          # (n,)
    grad_norm: np.ndarray     # (n,) unstabilized
    update_norm: np.ndarray   # (n,) unstabilized
    lr_log: np.ndarray        # (n,) scheduled log LR
    lambda_seq: np.ndarray    # (n,) weight decay (zeros for exp runs)
    r_minus1: float           # |theta_-1|^2
    d_minus1: float           # |theta_0 - theta_-1|
    eta_minus1: float
    config: dict = field(default_factory=dict)

    @property
    def num_iters(self):
        return len(self.loss)

    def unit_dirs(self):
        norms = np.linalg.norm(self.thetas, axis=1, keepdims=True)
        return self.thetas / norms

    def dir_cos_ref(self):
        """Cosine of each iterate against the initial direction."""
        dirs = self.unit_dirs()
        return dirs @ dirs[0]


def _prepare_init(theta0, v0, eta_minus1, dim):
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (dim,):
        raise ConfigError(f"theta0 must have shape ({dim},)")
    if not np.linalg.norm(theta0) > 0:
        raise ConfigError("theta0 must be nonzero")
    if v0 is None:
        theta_prev = theta0.copy()
    else:
        v0 = np.asarray(v0, dtype=float)
        if v0.shape != (dim,):
            raise ConfigError(f"v0 must have shape ({dim},)")
        theta_prev = theta0 - eta_minus1 * v0
    return theta0.copy(), theta_prev


def _run_loop(obj, n, gamma, theta, theta_prev, lr_prev, eta_minus1,
              lr_log_seq, rho_seq, lambda_seq, corrections,
              stabilize_every, stabilize_target, kind, config):
    """Shared WD / exponential loop; sequences are in the log domain so
    the exponential schedules stay representable under stabilization."""
    dim = obj.dim
    thetas = np.empty((n + 1, dim))
    accum = np.zeros(n + 1)
    log_norm = np.empty(n + 1)
    loss = np.empty(n)
    grad_norm = np.empty(n)
    update_norm = np.empty(n)

    d_minus1 = float(np.linalg.norm(theta - theta_prev))
    r_minus1 = float(np.linalg.norm(theta_prev)) ** 2

    a = 0.0  # cumulative log multiplier
    for t in range(n):
        if stabilize_every and t > 0 and t % stabilize_every == 0:
            theta, _, theta_prev, lr_prev, log_c = stabilize(
                theta, 0.0, theta_prev, lr_prev, stabilize_target)
            a += log_c
        if corrections is not None:
            corr = corrections.get(t)
            if corr is not None:
                s = apply(build_Ht(corr),
                          TrainState(theta, lr_prev, theta_prev, lr_prev))
                theta, theta_prev, lr_prev = s.theta, s.theta_prev, s.lr_prev

        thetas[t] = theta
        accum[t] = a
        log_norm[t] = math.log(np.linalg.norm(theta)) - a

        log_lr = lr_log_seq[t] + 2.0 * a
        if log_lr >= _LOG_MAX:
            raise NumericalBlowup(t)
        lr = math.exp(log_lr)
        g = obj.grad(theta, t)
        loss[t] = obj.value(theta, t)
        grad_norm[t] = np.linalg.norm(g) * math.exp(a)

        step = -lr * g
        if gamma != 0.0:
            step = step + (lr * gamma / lr_prev) * (theta - theta_prev)
        theta_next = rho_seq[t] * theta + step
        if not np.isfinite(theta_next).all():
            raise NumericalBlowup(t)
        update_norm[t] = float(np.linalg.norm(theta_next - theta)
                               * math.exp(-a))
        theta_prev, theta = theta, theta_next
        lr_prev = lr

    thetas[n] = theta
    accum[n] = a
    log_norm[n] = math.log(np.linalg.norm(theta)) - a
    return Trajectory(
        kind=kind, thetas=thetas, accum=accum, log_norm=log_norm,
        loss=loss, grad_norm=grad_norm, update_norm=update_norm,
        lr_log=np.asarray(lr_log_seq, dtype=float),
        lambda_seq=np.asarray(lambda_seq, dtype=float),
        r_minus1=r_minus1, d_minus1=d_minus1, eta_minus1=eta_minus1,
        config=config)


def run_sgd_wd(obj, eta_seq, lambda_seq, theta0, gamma, v0=None,
               stabilize_every=None, stabilize_target=_DEF_TARGET):
    """SGD with momentum gamma and decoupled weight decay."""
    eta_seq = np.asarray(eta_seq, dtype=float)
    lambda_seq = np.asarray(lambda_seq, dtype=float)
    if eta_seq.shape != lambda_seq.shape:
        raise LengthMismatch("eta_seq and lambda_seq lengths differ")
    n = len(eta_seq)
    if n < 1:
        raise ConfigError("empty schedule")
    if not (0.0 <= gamma < 1.0):
        raise ConfigError(f"gamma must be in [0, 1), got {gamma}")
    eta_minus1 = float(eta_seq[0])
    theta, theta_prev = _prepare_init(theta0, v0, eta_minus1, obj.dim)
    rho_seq = 1.0 - lambda_seq * eta_seq
    return _run_loop(
        obj, n, gamma, theta, theta_prev, eta_minus1, eta_minus1,
        np.log(eta_seq), rho_seq, lambda_seq, None,
        stabilize_every, stabilize_target, "wd",
        {"objective": obj.config, "gamma": gamma, "run": "wd",
         "stabilize_every": stabilize_every})


def run_sgd_exp(obj, translated, theta0, gamma, v0=None,
                stabilize_every=None, stabilize_target=_DEF_TARGET):
    """Weight-decay-free SGD driven by a translated schedule.

    The start state absorbs the translator's initial transform: the
    momentum buffer is scaled by ``init_buffer_scale`` and the buffered
    LR set to ``exp(log_eta_tilde_minus1)``; with zero initial velocity
    this leaves theta_0 itself untouched.  Phase-start corrections from
    the translator are applied to the buffered pair right before the
    step that first uses the new phase's LR.
    """
    if translated.gamma != gamma:
        raise ConfigError("momentum gamma disagrees with the translation")
    n = translated.num_iters
    eta_minus1 = float(translated.eta_seq[0])
    theta, theta_prev = _prepare_init(theta0, v0, eta_minus1, obj.dim)
    theta_prev = translated.init_buffer_scale * theta_prev
    lr_prev = math.exp(translated.log_eta_tilde_minus1)
    corrections = {c.t: c for c in translated.corrections}
    return _run_loop(
        obj, n, gamma, theta, theta_prev, lr_prev, lr_prev,
        translated.log_eta_tilde, np.ones(n), np.zeros(n), corrections,
        stabilize_every, stabilize_target, "exp",
        {"objective": obj.config, "gamma": gamma, "run": "exp",
         "schedule_kind": translated.kind,
         "stabilize_every": stabilize_every})


def verify_equivalence(traj_wd, traj_exp, translated, dir_tol=1e-8,
                       norm_tol=1e-7, growth_per_iter=0.01):
    """Compare a WD run against its translated exponential twin.

    Checks, for every recorded t, that the direction cosine gap
    1 - <u_t, v_t> and the log-norm offset error
    |log|theta_exp| - log|theta_wd| - logP_t| stay below envelopes that
    widen linearly with t (tol * (1 + growth_per_iter * t)); pass
    growth_per_iter=0 for flat tolerances."""
    if traj_wd.num_iters != traj_exp.num_iters:
        raise LengthMismatch("trajectories have different lengths")
    n = traj_wd.num_iters
    t = np.arange(n + 1)
    dir_gap = 1.0 - np.sum(traj_wd.unit_dirs() * traj_exp.unit_dirs(),
                           axis=1)
    norm_err = np.abs(traj_exp.log_norm - traj_wd.log_norm
                      - translated.logP_seq[:n + 1])
    env_dir = dir_tol * (1.0 + growth_per_iter * t)
    env_norm = norm_tol * (1.0 + growth_per_iter * t)
    bad = (dir_gap > env_dir) | (norm_err > env_norm)
    first_violation = int(np.argmax(bad)) if bad.any() else None
    return {
        "num_iters": n,
        "dir_gap": dir_gap,
        "norm_err": norm_err,
        "dir_envelope": env_dir,
        "norm_envelope": env_norm,
        "max_dir_gap": float(dir_gap.max()),
        "max_norm_err": float(norm_err.max()),
        "dir_tol": dir_tol,
        "norm_tol": norm_tol,
        "growth_per_iter": growth_per_iter,
        "first_violation": first_violation,
        "passed": not bad.any(),
    }
