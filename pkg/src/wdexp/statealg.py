"""Algebra of SGD training states and the maps used in equivalence proofs.

A training state is the 4-tuple (theta, lr, theta_prev, lr_prev): the
current parameters, the LR used by the upcoming step, the previous
parameters, and the LR that produced them.  The momentum buffer is
carried implicitly as (theta - theta_prev) / lr_prev.

Maps on states:

* ``pi1(c) .. pi4(c)``  -- scale one coordinate by c > 0.
* ``canon()``           -- N: renormalize the buffered pair so that
  lr_prev = lr while preserving the momentum ratio.
* ``gd(grad_fn, gamma, rho, t)`` -- one SGD step with decay factor rho
  (rho = 1 - lam*eta for decoupled weight decay, 1 for plain SGD).
* ``compose(f, g, ...)`` -- function composition, rightmost first.
* ``equivalent_scaling(c)`` -- the function-space-preserving scaling
  (theta, lr, theta_prev, lr_prev) -> (c theta, c^2 lr, c theta_prev,
  c^2 lr_prev) for scale-invariant objectives.

The ``verify_lemma_*`` harnesses replay the exchange rules these maps
obey on randomized states and report the worst relative error; they are
the executable form of the proofs behind the schedule translators.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveScale

_REL_FLOOR = 1e-300


@dataclass(frozen=True)
class TrainState:
    theta: np.ndarray
    lr: float
    theta_prev: np.ndarray
    lr_prev: float

    def coords(self):
        return (self.theta, self.lr, self.theta_prev, self.lr_prev)


def state(theta, lr, theta_prev, lr_prev):
    return TrainState(np.asarray(theta, dtype=float), float(lr),
                      np.asarray(theta_prev, dtype=float), float(lr_prev))


@dataclass(frozen=True)
class Scale:
    coord: int  # 1: theta, 2: lr, 3: theta_prev, 4: lr_prev
    c: float

    def __post_init__(self):
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise NonPositiveScale(self.c)
        if self.coord not in (1, 2, 3, 4):
            raise ValueError(f"bad coordinate {self.coord}")

    def apply(self, s):
        if self.coord == 1:
            return TrainState(self.c * s.theta, s.lr, s.theta_prev, s.lr_prev)
        if self.coord == 2:
            return TrainState(s.theta, self.c * s.lr, s.theta_prev, s.lr_prev)
        if self.coord == 3:
            return TrainState(s.theta, s.lr, self.c * s.theta_prev, s.lr_prev)
        return TrainState(s.theta, s.lr, s.theta_prev, self.c * s.lr_prev)


@dataclass(frozen=True)
class Canon:
    """N: move the buffered point so lr_prev matches lr, keeping the
    momentum contribution (theta - theta_prev)/lr_prev unchanged."""

    def apply(self, s):
        ratio = s.lr / s.lr_prev
        new_prev = s.theta - ratio * (s.theta - s.theta_prev)
        return TrainState(s.theta, s.lr, new_prev, s.lr)


@dataclass(frozen=True)
class GDStep:
    """One step of SGD with momentum and multiplicative decay rho:

    theta_next = rho*theta + lr*(gamma*(theta - theta_prev)/lr_prev
                                 - grad_fn(theta, t))
    and the buffered pair becomes (theta, lr).
    """

    grad_fn: object
    gamma: float
    rho: float = 1.0
    t: int = 0

    def apply(self, s):
        g = self.grad_fn(s.theta, self.t)
        step = -s.lr * g
        if self.gamma != 0.0:
            step = step + s.lr * self.gamma * (s.theta - s.theta_prev) / s.lr_prev
        theta_next = self.rho * s.theta + step
        return TrainState(theta_next, s.lr, s.theta, s.lr)


@dataclass(frozen=True)
class Compose:
    maps: tuple  # applied right to left

    def apply(self, s):
        for m in reversed(self.maps):
            s = m.apply(s)
        return s


def pi1(c):
    return Scale(1, c)


def pi2(c):
    return Scale(2, c)


def pi3(c):
    return Scale(3, c)


def pi4(c):
    return Scale(4, c)


def canon():
    return Canon()


def gd(grad_fn, gamma, rho=1.0, t=0):
    return GDStep(grad_fn, gamma, rho, t)


def compose(*maps):
    flat = []
    for m in maps:
        if isinstance(m, Compose):
            flat.extend(m.maps)
        else:
            flat.append(m)
    return Compose(tuple(flat))


def apply(m, s):
    return m.apply(s)


def equivalent_scaling(c):
    return compose(pi1(c), pi2(c * c), pi3(c), pi4(c * c))


def build_Ht(correction):
    """Momentum-correction map for a phase start, from the translator's
    CorrectionRecord.

    Applied to the post-step state right before the LR jump it rewrites
    the buffered pair to what the new phase's equivalence requires:
    theta untouched, lr untouched (the scheduled LR overwrite follows),
    theta_prev -> alpha_t1 * (theta - r*(theta - theta_prev/alpha_t)),
    lr_prev -> lr * r * alpha_t1/alpha_t, with r = eta_cur/eta_prev.
    The composition is identity when the phase parameters do not change.
    """
    a_t, a_t1 = correction.alpha_t, correction.alpha_t1
    r = correction.eta_cur / correction.eta_prev
    return compose(
        pi2(a_t / r),
        pi3(a_t1),
        pi4(a_t1),
        canon(),
        pi3(1.0 / a_t),
        pi4(1.0 / a_t),
        pi2(1.0 / a_t),
        pi2(r),
    )


# --- randomized lemma verification -----------------------------------------


def random_state(rng, dim, equal_lrs=False):
    """Random state: directions U[-1,1]^dim rescaled to norms in
    [0.5, 2], LRs log-uniform on [1e-3, 1]."""

    def vec():
        v = rng.uniform(-1.0, 1.0, dim)
        return v * (rng.uniform(0.5, 2.0) / np.linalg.norm(v))

    lr = 10.0 ** rng.uniform(-3.0, 0.0)
    lr_prev = lr if equal_lrs else 10.0 ** rng.uniform(-3.0, 0.0)
    return TrainState(vec(), lr, vec(), lr_prev)


def state_rel_err(a, b):
    """Worst normwise relative difference over the four coordinates."""
    errs = []
    for xa, xb in zip(a.coords(), b.coords()):
        xa, xb = np.atleast_1d(xa), np.atleast_1d(xb)
        num = np.abs(xa - xb).max()
        den = max(np.abs(xb).max(), _REL_FLOOR)
        errs.append(num / den)
    return max(errs)


def _theta_lr_rel_err(a, b):
    """Like state_rel_err but over (theta, lr) only."""
    num = np.abs(a.theta - b.theta).max()
    den = max(np.abs(b.theta).max(), _REL_FLOOR)
    e1 = num / den
    e2 = abs(a.lr - b.lr) / max(abs(b.lr), _REL_FLOOR)
    return max(e1, e2)


def _run_harness(name, trials, seed, tol, one_trial):
    rng = np.random.default_rng(seed)
    max_err = 0.0
    violations = []
    for k in range(trials):
        err, detail = one_trial(rng, k)
        max_err = max(max_err, err)
        if err > tol:
            violations.append({"trial": k, "rel_err": err, **detail})
    return {"lemma": name, "trials": trials, "max_rel_err": max_err,
            "tol": tol, "violations": violations,
            "passed": not violations}


def verify_lemma_gdw(grad_fn, trials=100, seed=0, dim=8, tol=1e-10):
    """Decay absorption without momentum, exact for any objective:

    GD^rho_t == Pi2^rho . Pi1^rho . GD_t . Pi2^(1/rho)
    compared on (theta, lr) only."""

    def one(rng, k):
        s = random_state(rng, dim)
        rho = rng.uniform(0.5, 1.0)
        lhs = gd(grad_fn, 0.0, rho, t=k).apply(s)
        rhs = compose(pi2(rho), pi1(rho), gd(grad_fn, 0.0, 1.0, t=k),
                      pi2(1.0 / rho)).apply(s)
        return _theta_lr_rel_err(lhs, rhs), {"rho": rho}

    return _run_harness("gdw", trials, seed, tol, one)


def verify_lemma_gdw_momentum(grad_fn, gamma=0.9, trials=100, seed=0,
                              dim=8, tol=1e-10):
    """Decay absorption with momentum, exact for any objective on
    states with lr == lr_prev:

    GD^rho_t == Pi4^a . Pi2^a . Pi1^a . GD_t . Pi2^(1/a) . Pi3^a . Pi4^a
    where a + gamma/a = rho + gamma (a is the larger quadratic root)."""
    from .lrsched import solve_quadratic

    def one(rng, k):
        s = random_state(rng, dim, equal_lrs=True)
        le = rng.uniform(0.0, 0.9) * (1.0 - math.sqrt(gamma)) ** 2
        rho = 1.0 - le
        a = solve_quadratic(gamma, le, 1.0).z1
        lhs = gd(grad_fn, gamma, rho, t=k).apply(s)
        rhs = compose(pi4(a), pi2(a), pi1(a), gd(grad_fn, gamma, 1.0, t=k),
                      pi2(1.0 / a), pi3(a), pi4(a)).apply(s)
        return state_rel_err(lhs, rhs), {"rho": rho, "alpha": a}

    return _run_harness("gdw_momentum", trials, seed, tol, one)


def verify_lemma_commute(grad_fn, trials=100, seed=0, dim=8, tol=1e-10):
    """GD commutes with the equivalent scaling Pi1^c . Pi2^(c^2); holds
    only for scale-invariant objectives (compared on theta, lr)."""

    def one(rng, k):
        s = random_state(rng, dim)
        c = 10.0 ** rng.uniform(-1.0, 1.0)
        sc = compose(pi1(c), pi2(c * c))
        lhs = gd(grad_fn, 0.0, 1.0, t=k).apply(sc.apply(s))
        rhs = sc.apply(gd(grad_fn, 0.0, 1.0, t=k).apply(s))
        return _theta_lr_rel_err(lhs, rhs), {"c": c}

    return _run_harness("commute", trials, seed, tol, one)


def verify_lemma_commute_momentum(grad_fn, gamma=0.9, trials=100, seed=0,
                                  dim=8, tol=1e-10):
    """GD with momentum commutes with the full equivalent scaling S_c;
    holds only for scale-invariant objectives (all four coordinates)."""

    def one(rng, k):
        s = random_state(rng, dim)
        c = 10.0 ** rng.uniform(-1.0, 1.0)
        rho = rng.uniform(0.9, 1.0)
        sc = equivalent_scaling(c)
        step = gd(grad_fn, gamma, rho, t=k)
        lhs = step.apply(sc.apply(s))
        rhs = sc.apply(step.apply(s))
        return state_rel_err(lhs, rhs), {"c": c, "rho": rho}

    return _run_harness("commute_momentum", trials, seed, tol, one)


def verify_canonicalization(grad_fn, gamma=0.9, trials=100, seed=0,
                            dim=8, tol=1e-10):
    """Exact bookkeeping identities: GD^rho_t . N == GD^rho_t and
    N . S_c == S_c . N."""

    def one(rng, k):
        s = random_state(rng, dim)
        rho = rng.uniform(0.5, 1.0)
        step = gd(grad_fn, gamma, rho, t=k)
        e1 = state_rel_err(step.apply(canon().apply(s)), step.apply(s))
        c = 10.0 ** rng.uniform(-1.0, 1.0)
        sc = equivalent_scaling(c)
        e2 = state_rel_err(canon().apply(sc.apply(s)),
                           sc.apply(canon().apply(s)))
        return max(e1, e2), {"rho": rho, "c": c}

    return _run_harness("canonicalization", trials, seed, tol, one)
