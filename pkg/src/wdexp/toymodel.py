"""Last-layer fine-tuning toy problem: separable Gaussian inputs,
logistic loss, three training regimes.

Data model: x ~ N(0, I_m), label y = sgn(x_1), last-layer output
x^T w, loss ln(1 + exp(-y x^T w)).  The three regimes differ in how
the output is produced and regularized:

    wd_only   raw output, plus L2 decay (convex; converges for small LR)
    bn_only   output normalized to x^T w / |w| (norm grows, effective
              LR anneals itself, converges)
    bn_wd     normalized output plus decay (never converges: the norm
              equilibrates where single steps are large enough to kick
              the direction out of any small cone around the optimum)

Training error has the closed form arccos(w_1 / |w|) / pi, so the
escape detector needs no test sampling.  The escape budget

    T1 = ln(64 |w|^2 eps sqrt(B) / (eta sqrt(m-2))) / (2 (eta lam - 2 eps^2))
    T2 = 9 ln(1 / delta)

bounds how long bn_wd can keep the error below eps/pi: with
probability 1 - delta it exceeds eps/pi at least once in any window of
T1 + T2 consecutive iterations.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidBudget, NumericalBlowup
from .rng import trial_seed

REGIMES = ("wd_only", "bn_only", "bn_wd")


@dataclass(frozen=True)
class ToyConfig:
    m: int
    B: int
    eta: float
    lam: float
    eps: float
    delta: float
    T0: int = 0
    seeds: tuple = ()

    def __post_init__(self):
        if self.m < 3:
            raise ConfigError("need input dimension m >= 3")
        if self.B < 1:
            raise ConfigError("need batch size B >= 1")
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ConfigError("need eta > 0")
        if self.lam < 0.0 or self.lam * self.eta >= 1.0:
            raise ConfigError("need 0 <= lambda < 1/eta")
        if not (0.0 < self.eps < math.pi / 4):
            raise ConfigError("need 0 < eps < pi/4")
        if not (0.0 < self.delta <= 1.0):
            raise ConfigError("need 0 < delta <= 1")

    def as_dict(self):
        return {"m": self.m, "B": self.B, "eta": self.eta,
                "lam": self.lam, "eps": self.eps, "delta": self.delta,
                "T0": self.T0, "seeds": list(self.seeds)}


# desk-scale parameters: eta*lam - 2*eps^2 = 0.0032 > 0 and the escape
# budget is ~356 iterations, so 100 trials stay cheap
DESK = ToyConfig(m=20, B=32, eta=0.2, lam=0.02, eps=0.02, delta=0.1)


@dataclass
class ToyTrajectory:
    regime: str
    w_hist: np.ndarray      # (steps+1, m)
    angle: np.ndarray       # angle(e_1, w_t), radians
    norm: np.ndarray
    train_error: np.ndarray
    loss: np.ndarray        # batch loss at w_t, length steps
    step_angle: np.ndarray  # angle(w_t, w_{t+1}), length steps
    config: dict

    @property
    def num_iters(self):
        return len(self.loss)


def _sigmoid_neg(s):
    """sigma(-s) = 1/(1+e^s), stable for any s."""
    return np.exp(-np.logaddexp(0.0, s))


def _angle_to_e1(w):
    return math.acos(min(1.0, max(-1.0, w[0] / np.linalg.norm(w))))


def _angle_between(a, b):
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.acos(min(1.0, max(-1.0, c)))


def _population_pull(angle, nodes, weights):
    """Strength of the population update toward the optimum for the
    normalized loss, at the given angle from e_1.

    Writing u, v for the Gaussian components of a sample along w-hat
    and along the in-plane unit tangent toward e_1, the population
    gradient is -E[y sigma(-y u) v] / |w| times that tangent, with
    y = sgn(u cos(angle) + v sin(angle)).  Returns the expectation by
    Gauss-Hermite quadrature; it is >= 0, and exactly 0 at angle 0."""
    c, s = math.cos(angle), math.sin(angle)
    u = nodes[:, None]
    v = nodes[None, :]
    y = np.sign(c * u + s * v)
    y[y == 0.0] = 1.0
    w2 = weights[:, None] * weights[None, :]
    return float(np.sum(w2 * y * _sigmoid_neg(y * u) * v))


def run_case(regime, cfg, steps, w0=None, seed=0, population=False):
    """Run one seeded trajectory of the chosen regime.

    ``population=True`` replaces the per-batch gradient with the exact
    population gradient (normalized regimes only); useful as a
    noise-free control, e.g. bn_only started at e_1 stays at e_1.
    """
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}")
    if steps < 1:
        raise ConfigError("need steps >= 1")
    if population and regime == "wd_only":
        raise ConfigError("population mode covers normalized regimes only")
    rng = np.random.default_rng(trial_seed(seed, 0))
    m = cfg.m
    if w0 is None:
        w = rng.standard_normal(m)
    else:
        w = np.asarray(w0, dtype=float).copy()
        if w.shape != (m,):
            raise ConfigError(f"w0 must have shape ({m},)")
    lam = cfg.lam if regime != "bn_only" else 0.0
    decay = 1.0 - lam * cfg.eta
    if population:
        nodes, weights = np.polynomial.hermite_e.hermegauss(80)
        weights = weights / math.sqrt(2.0 * math.pi)

    w_hist = np.empty((steps + 1, m))
    loss = np.empty(steps)
    w_hist[0] = w
    for t in range(steps):
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw < 1e-150:
            raise NumericalBlowup(t)
        if population:
            ang = _angle_to_e1(w)
            pull = _population_pull(ang, nodes, weights)
            tangent = np.zeros(m)
            tangent[0] = 1.0
            tangent -= (w[0] / nw ** 2) * w
            tnorm = np.linalg.norm(tangent)
            if tnorm < 1e-14 or pull == 0.0:
                g = np.zeros(m)   # aligned with the axis: stationary
            else:
                g = -(pull / nw) * (tangent / tnorm)
            c, s = math.cos(ang), math.sin(ang)
            uu = nodes[:, None]
            vv = nodes[None, :]
            yy = np.sign(c * uu + s * vv)
            yy[yy == 0.0] = 1.0
            w2 = weights[:, None] * weights[None, :]
            loss[t] = float(np.sum(w2 * np.logaddexp(0.0, -yy * uu)))
        else:
            x = rng.standard_normal((cfg.B, m))
            y = np.sign(x[:, 0])
            y[y == 0.0] = 1.0
            if regime == "wd_only":
                z = x @ w
                loss[t] = float(np.mean(np.logaddexp(0.0, -y * z)))
                g = -(x.T @ (y * _sigmoid_neg(y * z))) / cfg.B
            else:
                z = (x @ w) / nw
                loss[t] = float(np.mean(np.logaddexp(0.0, -y * z)))
                coef = y * _sigmoid_neg(y * z)
                xp = x - np.outer(z, w / nw)   # projection away from w
                g = -(xp.T @ coef) / (cfg.B * nw)
        w = decay * w - cfg.eta * g
        w_hist[t + 1] = w

    norm = np.linalg.norm(w_hist, axis=1)
    cosines = np.clip(w_hist[:, 0] / norm, -1.0, 1.0)
    angle = np.arccos(cosines)
    dots = np.sum(w_hist[:-1] * w_hist[1:], axis=1)
    step_cos = np.clip(dots / (norm[:-1] * norm[1:]), -1.0, 1.0)
    return ToyTrajectory(
        regime=regime, w_hist=w_hist, angle=angle, norm=norm,
        train_error=angle / math.pi, loss=loss,
        step_angle=np.arccos(step_cos),
        config={**cfg.as_dict(), "regime": regime, "steps": steps,
                "seed": seed, "population": population})


@dataclass(frozen=True)
class EscapeBudget:
    t1: float
    t2: float

    @property
    def total(self):
        return self.t1 + self.t2


def escape_budget(cfg, norm_at_T0):
    """Iteration budget within which bn_wd must leave the eps-cone."""
    if norm_at_T0 <= 0.0:
        raise ConfigError("need a positive starting norm")
    gap = cfg.eta * cfg.lam - 2.0 * cfg.eps ** 2
    if gap <= 0.0:
        raise InvalidBudget(
            f"eta*lambda = {cfg.eta * cfg.lam:.6g} must exceed "
            f"2*eps^2 = {2.0 * cfg.eps ** 2:.6g}")
    arg = (64.0 * norm_at_T0 ** 2 * cfg.eps * math.sqrt(cfg.B)
           / (cfg.eta * math.sqrt(cfg.m - 2)))
    t1 = max(0.0, math.log(arg) / (2.0 * gap)) if arg > 0 else 0.0
    t2 = 9.0 * math.log(1.0 / cfg.delta)
    return EscapeBudget(t1=t1, t2=t2)


def escape_experiment(cfg, trials, steps=None, start_angle=None):
    """Fraction of seeded bn_wd runs that leave the eps-cone in budget.

    Each trial starts at unit norm inside the cone (angle
    ``start_angle``, default eps/2, randomized tangent direction) and
    runs for ceil(T1+T2) iterations, or ``steps`` when given (required
    for lam = 0, where no budget exists and the report is informational
    with ``passed=None``).  Pass criterion: exit fraction at least
    1 - delta - margin with margin = 3*sqrt(delta*(1-delta)/trials).
    Also reported: the fraction of trials whose single-step direction
    change exceeds 2*eps at least once, the stronger form of the same
    phenomenon.
    """
    if trials < 1:
        raise ConfigError("need trials >= 1")
    if steps is None:
        budget = escape_budget(cfg, norm_at_T0=1.0)
        steps = math.ceil(budget.total)
    else:
        budget = None
    a0 = cfg.eps / 2.0 if start_angle is None else start_angle
    if not (0.0 <= a0 < cfg.eps):
        raise ConfigError("start angle must lie inside the cone")
    seed_list = (tuple(cfg.seeds) if cfg.seeds
                 else tuple(range(trials)))
    if len(seed_list) < trials:
        raise ConfigError(f"{trials} trials but {len(seed_list)} seeds")

    exits = np.zeros(trials, dtype=bool)
    big_steps = np.zeros(trials, dtype=bool)
    exit_iters = np.full(trials, -1)
    for i in range(trials):
        seed = seed_list[i]
        rng = np.random.default_rng(trial_seed(seed, 1))
        w0 = np.zeros(cfg.m)
        w0[0] = math.cos(a0)
        tangent = rng.standard_normal(cfg.m)
        tangent[0] = 0.0
        tangent /= np.linalg.norm(tangent)
        w0 += math.sin(a0) * tangent
        traj = run_case("bn_wd", cfg, steps, w0=w0, seed=seed)
        out = np.nonzero(traj.angle[1:] > cfg.eps)[0]
        exits[i] = out.size > 0
        if exits[i]:
            exit_iters[i] = int(out[0]) + 1
        big_steps[i] = bool(np.any(traj.step_angle > 2.0 * cfg.eps))

    fraction = float(exits.mean())
    margin = 3.0 * math.sqrt(cfg.delta * (1.0 - cfg.delta) / trials)
    threshold = 1.0 - cfg.delta - margin
    return {
        "trials": trials,
        "steps": steps,
        "budget": None if budget is None else
            {"T1": budget.t1, "T2": budget.t2, "total": budget.total},
        "start_angle": a0,
        "exit_fraction": fraction,
        "threshold": threshold,
        "margin": margin,
        "big_step_fraction": float(big_steps.mean()),
        "exit_iterations": exit_iters.tolist(),
        "passed": None if cfg.lam == 0.0 else bool(fraction >= threshold),
        "config": cfg.as_dict(),
    }


def chi_square_tail_check(k, beta, samples=100_000, seed=0):
    """Monte-Carlo check of P(chi2(k) < k*beta) <= (beta*e^(1-beta))^(k/2).

    Passes when the estimate minus a 3-sigma binomial allowance stays
    at or below the bound.
    """
    if k < 1:
        raise ConfigError("need k >= 1")
    if not (0.0 < beta < 1.0):
        raise ConfigError("need 0 < beta < 1")
    if samples < 100_000:
        raise ConfigError("need at least 1e5 samples")
    rng = np.random.default_rng(trial_seed(seed, 2))
    draws = rng.chisquare(k, size=samples)
    estimate = float(np.mean(draws < k * beta))
    sigma = math.sqrt(max(estimate * (1.0 - estimate), 1.0 / samples)
                      / samples)
    bound = (beta * math.exp(1.0 - beta)) ** (k / 2.0)
    return {
        "k": k,
        "beta": beta,
        "samples": samples,
        "estimate": estimate,
        "sigma": sigma,
        "bound": bound,
        "passed": bool(estimate - 3.0 * sigma <= bound),
    }
