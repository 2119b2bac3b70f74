"""Norm dynamics of SGD with weight decay on scale-invariant objectives.

Works on the scalar series extracted from a recorded run:

    R_t = |theta_t|^2,  D_t = |theta_{t+1} - theta_t|^2,
    C_t = <theta_t, theta_{t+1} - theta_t>,

indexed from t = -1 so the per-step recursion

    (R_{t+1}-R_t)/eta_t - gamma*(R_t-R_{t-1})/eta_{t-1}
        = D_t/eta_t + gamma*D_{t-1}/eta_{t-1} - 2*lambda_t*R_t

is checkable at t = 0.  Also provides: the almost-monotone growth bound
and the cumulative constant-LR formula for decay-free runs, the
time-averaged equilibrium ratio D/R -> 2*eta*lambda/(1+gamma), the
momentum-free Pythagorean identity, and the sufficient-decrease audit
behind the norm-collapse criterion (tested through its contrapositive,
since the literal statement is a t -> infinity limit).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientLength
from .scaleinv import by_name


@dataclass
class NormSeries:
    """Scalar series with t = -1 at array position 0 where applicable:
    ``r[k]`` is R_{k-1} (length n+2), ``d[k]`` is D_{k-1} (length n+1),
    ``c[t]`` is C_t for t = 0..n-1, ``eta[k]`` is eta_{k-1} (length
    n+1), ``lam[t]`` is lambda_t for t = 0..n-1.  ``grad_norm[t]`` is
    |grad L_t(theta_t)| in the unstabilized scale."""

    r: np.ndarray
    d: np.ndarray
    c: np.ndarray
    eta: np.ndarray
    lam: np.ndarray
    gamma: float
    grad_norm: np.ndarray = None
    config: dict = field(default_factory=dict)

    @property
    def num_iters(self):
        return len(self.lam)

    def R(self, t):
        return self.r[t + 1]

    def D(self, t):
        return self.d[t + 1]

    def eta_at(self, t):
        return self.eta[t + 1]


def from_trajectory(traj):
    """Extract the norm series of a recorded run, undoing any
    stabilization rescaling."""
    n = traj.num_iters
    r = np.empty(n + 2)
    r[0] = traj.r_minus1
    r[1:] = np.exp(2.0 * traj.log_norm)
    d = np.empty(n + 1)
    d[0] = traj.d_minus1 ** 2
    d[1:] = traj.update_norm ** 2
    # C_t from the raw states: both factors carry exp(accum) scalings
    scale = np.exp(-(traj.accum[:-1] + traj.accum[1:]))
    dots = np.sum(traj.thetas[:-1] * traj.thetas[1:], axis=1) * scale
    c = dots - r[1:-1]
    eta = np.empty(n + 1)
    eta[0] = traj.eta_minus1
    eta[1:] = np.exp(traj.lr_log)
    return NormSeries(r=r, d=d, c=c, eta=eta, lam=traj.lambda_seq.copy(),
                      gamma=traj.config.get("gamma", 0.0),
                      grad_norm=traj.grad_norm.copy(),
                      config=dict(traj.config))


def check_norm_recursion(series, tol_scale=1e-9):
    """Residual of the per-step norm recursion; pass iff
    max |residual| <= tol_scale * max(R)."""
    n = series.num_iters
    r, d, eta, lam = series.r, series.d, series.eta, series.lam
    gamma = series.gamma
    lhs = ((r[2:] - r[1:-1]) / eta[1:]
           - gamma * (r[1:-1] - r[:-2]) / eta[:-1])
    rhs = (d[1:] / eta[1:] + gamma * d[:-1] / eta[:-1]
           - 2.0 * lam * r[1:-1])
    residual = lhs - rhs
    bound = tol_scale * r.max()
    worst = int(np.argmax(np.abs(residual)))
    return {
        "num_iters": n,
        "max_abs_residual": float(np.abs(residual).max()),
        "bound": float(bound),
        "worst_t": worst,
        "residual": residual,
        "passed": bool(np.abs(residual).max() <= bound),
    }


def check_monotone_growth(series, cumulative_tol=1e-9):
    """Decay-free growth bound plus the constant-LR cumulative formula.

    Requires lambda = 0.  The certified inequality is

        R_{t+1} - R_t >= gamma^(t+1) * (eta_t/eta_0) * (R_0 - R_{-1})

    whose right side vanishes for zero initial velocity (pure
    monotonicity).  The sign-flipped variant (with -gamma^(t+1)) is also
    evaluated and reported informationally; it fails whenever the run
    starts with R_0 < R_{-1}, so it is not part of the pass verdict.

    For constant eta the cumulative identity

        R_{t+1} = R_0
                  + sum_i [(1-gamma^(t-i+1))/(1-gamma)]*(D_i + gamma*D_{i-1})
                  + gamma*[(1-gamma^(t+1))/(1-gamma)]*(R_0 - R_{-1})

    is checked against every R_{t+1} at ``cumulative_tol`` relative.
    """
    if np.any(series.lam != 0.0):
        raise ConfigError("growth bound requires a decay-free run")
    n = series.num_iters
    r, d, eta = series.r, series.d, series.eta
    gamma = series.gamma
    t = np.arange(n)
    bound = gamma ** (t + 1) * (eta[1:] / eta[1]) * (r[1] - r[0])
    diffs = r[2:] - r[1:-1]
    violations = np.nonzero(diffs < bound - 1e-12 * r.max())[0]
    flipped_violations = np.nonzero(diffs < -bound - 1e-12 * r.max())[0]

    cumulative_max_rel = None
    if np.ptp(eta[1:]) == 0.0:
        one_minus = 1.0 - gamma
        e = d[1:] + gamma * d[:-1]          # E_t = D_t + gamma*D_{t-1}
        cum_e = 0.0                          # sum of E_i
        geo_e = 0.0                          # sum of gamma^(t-i) E_i
        worst = 0.0
        for k in range(n):
            cum_e += e[k]
            geo_e = gamma * geo_e + e[k]
            predicted = (r[1] + (cum_e - gamma * geo_e) / one_minus
                         + gamma * (1.0 - gamma ** (k + 1)) / one_minus
                         * (r[1] - r[0]))
            worst = max(worst, abs(predicted - r[k + 2]) / r[k + 2])
        cumulative_max_rel = worst

    return {
        "num_iters": n,
        "violations": violations.tolist(),
        "min_slack": float((diffs - bound).min()),
        "flipped_form_violations": flipped_violations.tolist(),
        "cumulative_max_rel_err": cumulative_max_rel,
        "cumulative_tol": cumulative_tol,
        "passed": bool(len(violations) == 0
                       and (cumulative_max_rel is None
                            or cumulative_max_rel <= cumulative_tol)),
    }


def estimate_equilibrium(series, burn_in=0.2, band=0.25):
    """Time-averaged D/R after burn-in against 2*eta*lambda/(1+gamma).

    ``burn_in`` is the fraction of the run discarded before averaging.
    The underlying limits are assumed rather than proven to exist, so a
    ratio outside the band reports ``converged=False`` instead of
    raising.  With lambda = 0 the theoretical ratio is 0 and only the
    decay of the averaged D is meaningful; ``passed`` is then None.
    """
    if not (0.0 <= burn_in < 1.0):
        raise ConfigError(f"burn_in must be a fraction in [0, 1)")
    if np.ptp(series.eta[1:]) != 0.0 or np.ptp(series.lam) != 0.0:
        raise ConfigError("equilibrium estimate needs constant eta, lambda")
    n = series.num_iters
    start = int(burn_in * n)
    if n - start < 10:
        raise InsufficientLength(
            f"{n - start} post-burn-in steps, need at least 10")
    d_bar = float(series.d[1 + start:].mean())
    r_bar = float(series.r[1 + start:-1].mean())
    ratio = d_bar / r_bar
    eta, lam, gamma = series.eta[1], series.lam[0], series.gamma
    theory = 2.0 * eta * lam / (1.0 + gamma)
    if theory == 0.0:
        return {"ratio": ratio, "theory": 0.0, "rel_gap": None,
                "band": band, "burn_in": burn_in, "converged": None,
                "passed": None}
    rel_gap = abs(ratio - theory) / theory
    return {"ratio": ratio, "theory": theory, "rel_gap": rel_gap,
            "band": band, "burn_in": burn_in,
            "converged": bool(rel_gap <= band),
            "passed": bool(rel_gap <= band)}


def check_pythagorean(series, tol=1e-10):
    """Momentum-free constant-LR identity
    R_t = (1 - lambda*eta)^2 R_{t-1} + eta^2 |grad L_{t-1}|^2,
    exact because the gradient is orthogonal to the iterate."""
    if series.gamma != 0.0:
        raise ConfigError("Pythagorean identity requires gamma = 0")
    if np.ptp(series.eta[1:]) != 0.0 or np.ptp(series.lam) != 0.0:
        raise ConfigError("Pythagorean identity needs constant eta, lambda")
    if series.grad_norm is None:
        raise ConfigError("series lacks gradient norms")
    eta, lam = series.eta[1], series.lam[0]
    rho = 1.0 - lam * eta
    predicted = rho * rho * series.r[1:-1] + eta * eta * series.grad_norm ** 2
    rel = np.abs(predicted - series.r[2:]) / series.r[2:]
    worst = int(np.argmax(rel))
    return {"max_rel_err": float(rel.max()), "worst_t": worst, "tol": tol,
            "passed": bool(rel.max() <= tol)}


def sufficient_decrease_audit(traj, c, reference=None, late_window=0.25):
    """Audit the norm-collapse criterion on a momentum-free decayed run.

    The criterion says: if a fixed objective f satisfies
    f(theta_{t+1}) - f(theta_t) <= -c * eta_t * |grad L_t(theta_t)|^2
    at every step, the norm collapses to zero.  f must be one fixed
    function (the per-step batch losses each trivially decrease along
    their own gradient step); by default the run's objective frozen at
    batch 0 is used, or pass any deterministic ``reference`` handle.

    At a finite horizon the audit asserts the contrapositive
    co-occurrence: either the late log-norm keeps decaying at a rate
    comparable to pure decay (the collapse is in progress), or the
    condition fails on a nonzero fraction of late steps.
    """
    if c <= 0.0:
        raise ConfigError("need c > 0")
    if traj.config.get("gamma", 0.0) != 0.0:
        raise ConfigError("audit requires a momentum-free run")
    lam = traj.lambda_seq
    eta = np.exp(traj.lr_log)
    if np.ptp(lam) != 0.0 or np.ptp(eta) != 0.0 or lam[0] <= 0.0:
        raise ConfigError("audit requires constant eta and lambda > 0")
    obj = reference if reference is not None else by_name(
        traj.config["objective"])
    n = traj.num_iters
    f = np.array([obj.value(traj.thetas[t], 0) for t in range(n + 1)])
    decrease = f[1:] - f[:-1]
    threshold = -c * eta * traj.grad_norm ** 2
    # slack absorbs float noise when both sides are ~0 (converged runs)
    satisfied = decrease <= threshold + 1e-12 * (1.0 + np.abs(f[:-1]))
    late_start = int((1.0 - late_window) * n)
    late_violation_fraction = float(np.mean(~satisfied[late_start:]))
    slope_late = float((traj.log_norm[-1] - traj.log_norm[late_start])
                       / (n - late_start))
    decay_rate = float(lam[0] * eta[0])
    bounded_below = slope_late > -0.5 * decay_rate
    return {
        "c": c,
        "fraction_satisfied": float(np.mean(satisfied)),
        "late_violation_fraction": late_violation_fraction,
        "late_log_norm_slope": slope_late,
        "pure_decay_rate": decay_rate,
        "bounded_below": bounded_below,
        "collapsing": not bounded_below,
        "passed": bool((not bounded_below)
                       or late_violation_fraction > 0.0),
    }
