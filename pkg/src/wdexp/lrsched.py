"""Characteristic quadratic and LR-schedule translators.

Translates an LR + weight-decay (+ momentum) schedule into the weight-
decay-free exponentially growing schedule that produces the same
trajectory in function space on a scale-invariant objective.  Four
translators are provided:

* ``EXP_CONST`` -- constant LR, closed form ``eta0 * alpha**-(2t+1)``.
* ``TEXP``      -- step decay, per-phase growth factors plus one-time
  momentum-correction records at phase starts.
* ``TEXP_MINUS`` -- TEXP without the instant LR-decay factor at phase
  starts (equivalent to constant LR with phase-wise reduced WD).
* ``TEXPPP``    -- exact translation of arbitrary per-iteration
  ``(eta_t, lambda_t)`` sequences via the alpha recursion.

Conventions shared by every translator: ``alpha_seq[0]`` is the seed
value (1.0 unless overridden for TEXPPP), ``alpha_seq[t]`` for t >= 1
is the per-step equivalence factor, ``P_t`` is the cumulative product
of ``alpha_i**-1`` (so ``P_0 = 1`` under default seeds), the equivalent
run satisfies ``norm(theta_tilde_t) = P_t * norm(theta_t)``, and
``eta_tilde_t = P_t * P_{t+1} * eta_t``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundViolation,
    ConfigError,
    InfeasibleRoots,
    NonPositiveAlpha,
)

EXP_CONST = "EXP_CONST"
TEXP = "TEXP"
TEXP_MINUS = "TEXP_MINUS"
TEXPPP = "TEXPPP"

_LOG_MAX = math.log(np.finfo(np.float64).max)


@dataclass(frozen=True)
class HyperParams:
    """Momentum factor, weight decay, and initial LR of a constant run."""

    gamma: float
    lam: float
    eta0: float

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.eta0 <= 0.0:
            raise ConfigError(f"eta0 must be > 0, got {self.eta0}")

    @property
    def feasible(self):
        return self.lam * self.eta0 <= (1.0 - math.sqrt(self.gamma)) ** 2

    @property
    def feasibility_margin(self):
        """lambda*eta0 / (1-sqrt(gamma))**2; real roots require <= 1."""
        return self.lam * self.eta0 / (1.0 - math.sqrt(self.gamma)) ** 2


@dataclass(frozen=True)
class QuadRoots:
    z1: float
    z2: float
    discriminant: float


def solve_quadratic(gamma, lam, eta):
    """Roots of x**2 - (1 + gamma - lam*eta) x + gamma = 0.

    Returns ``QuadRoots`` with z1 >= z2.  The larger root is computed
    with the stable formula (b plus the square root, b >= 2*sqrt(gamma)
    >= 0 whenever feasible) and the smaller one recovered from the
    product z1*z2 = gamma.
    """
    if not np.isfinite([gamma, lam, eta]).all():
        raise ConfigError("gamma, lambda, eta must be finite")
    if not (0.0 <= gamma < 1.0):
        raise ConfigError(f"gamma must be in [0, 1), got {gamma}")
    le = lam * eta
    if le < 0.0:
        raise ConfigError(f"lambda*eta must be >= 0, got {le}")
    b = 1.0 + gamma - le
    # algebraically b^2 - 4*gamma, written to avoid the cancellation
    # (and so that lam*eta = 0 yields exactly (1, gamma))
    disc = (1.0 - gamma) ** 2 - le * (2.0 * (1.0 + gamma) - le)
    if disc < 0.0:
        limit = (1.0 - math.sqrt(gamma)) ** 2
        if le > limit * (1.0 + 1e-12):
            raise InfeasibleRoots(gamma, le)
        disc = 0.0  # boundary case rounded negative
    z1 = 0.5 * (b + math.sqrt(disc))
    # recover the smaller root from the product; at a double root the
    # division can land one ulp above z1, so keep the ordering exact
    z2 = min(gamma / z1, z1) if z1 > 0.0 else 0.0
    return QuadRoots(z1=z1, z2=z2, discriminant=disc)


@dataclass(frozen=True)
class Phase:
    start: int
    lr: float
    wd: float


@dataclass(frozen=True)
class ScheduleSpec:
    """An input LR + WD schedule.

    kind = "constant":   eta0, wd
    kind = "step_decay": phases (start strictly increasing, first at 0)
    kind = "cosine":     eta0, wd, total (eta_t = eta0*(1+cos(pi t/T))/2)
    kind = "explicit":   eta_seq, lambda_seq
    """

    kind: str
    gamma: float
    phases: tuple = ()
    eta0: float = None
    wd: float = None
    total: int = None
    eta_seq: tuple = ()
    lambda_seq: tuple = ()

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.kind == "constant":
            if self.eta0 is None or self.wd is None:
                raise ConfigError("constant schedule needs eta0 and wd")
            if self.eta0 <= 0 or self.wd < 0:
                raise ConfigError("need eta0 > 0 and wd >= 0")
        elif self.kind == "step_decay":
            if not self.phases:
                raise ConfigError("step_decay schedule needs phases")
            starts = [p.start for p in self.phases]
            if starts[0] != 0:
                raise ConfigError("first phase must start at iteration 0")
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ConfigError("phase starts must be strictly increasing")
            if any(p.lr <= 0 or p.wd < 0 for p in self.phases):
                raise ConfigError("phase LRs must be > 0 and WDs >= 0")
        elif self.kind == "cosine":
            if self.eta0 is None or self.wd is None or self.total is None:
                raise ConfigError("cosine schedule needs eta0, wd, total")
            if self.total < 2:
                raise ConfigError("cosine schedule needs total >= 2")
            if self.eta0 <= 0 or self.wd < 0:
                raise ConfigError("need eta0 > 0 and wd >= 0")
        elif self.kind == "explicit":
            if len(self.eta_seq) != len(self.lambda_seq):
                raise ConfigError("eta_seq and lambda_seq lengths differ")
            if len(self.eta_seq) == 0:
                raise ConfigError("explicit schedule is empty")
            if any(e <= 0 for e in self.eta_seq):
                raise ConfigError("explicit LRs must be > 0")
            if any(l < 0 for l in self.lambda_seq):
                raise ConfigError("explicit WDs must be >= 0")
        else:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")

    def num_iters(self, default=None):
        if self.kind == "explicit":
            return len(self.eta_seq)
        if self.kind == "cosine":
            return self.total  # translation stops at total-1, see cosine doc
        if self.total is not None:
            return self.total
        if default is not None:
            return default
        raise ConfigError(f"{self.kind} schedule needs an iteration count")

    def materialize(self, n):
        """Per-iteration (eta_t, lambda_t) arrays of length n."""
        if self.kind == "constant":
            return (np.full(n, float(self.eta0)), np.full(n, float(self.wd)))
        if self.kind == "step_decay":
            eta = np.empty(n)
            lam = np.empty(n)
            idx = self.phase_index(np.arange(n))
            for i, p in enumerate(self.phases):
                eta[idx == i] = p.lr
                lam[idx == i] = p.wd
            return eta, lam
        if self.kind == "cosine":
            if n > self.total:
                raise ConfigError("cosine schedule defined up to total-1")
            t = np.arange(n)
            eta = self.eta0 * (1.0 + np.cos(t * math.pi / self.total)) / 2.0
            return eta, np.full(n, float(self.wd))
        eta = np.asarray(self.eta_seq, dtype=float)[:n]
        lam = np.asarray(self.lambda_seq, dtype=float)[:n]
        if len(eta) < n:
            raise ConfigError("explicit schedule shorter than requested run")
        return eta.copy(), lam.copy()

    def phase_index(self, t):
        """Index of the phase containing iteration t (step_decay only)."""
        starts = np.array([p.start for p in self.phases])
        return np.searchsorted(starts, t, side="right") - 1

    @classmethod
    def from_json(cls, doc):
        try:
            kind = doc["kind"]
            gamma = float(doc["gamma"])
        except KeyError as e:
            raise ConfigError(f"schedule JSON missing key {e}") from None
        phases = tuple(
            Phase(start=int(p["start"]), lr=float(p["lr"]), wd=float(p["wd"]))
            for p in doc.get("phases", [])
        )
        return cls(
            kind=kind,
            gamma=gamma,
            phases=phases,
            eta0=doc.get("eta0"),
            wd=doc.get("wd"),
            total=doc.get("T"),
            eta_seq=tuple(doc.get("eta_seq", [])),
            lambda_seq=tuple(doc.get("lambda_seq", [])),
        )

    def to_json(self):
        doc = {"kind": self.kind, "gamma": self.gamma}
        if self.phases:
            doc["phases"] = [
                {"start": p.start, "lr": p.lr, "wd": p.wd} for p in self.phases
            ]
        if self.eta0 is not None:
            doc["eta0"] = self.eta0
        if self.wd is not None:
            doc["wd"] = self.wd
        if self.total is not None:
            doc["T"] = self.total
        if self.kind == "explicit":
            doc["eta_seq"] = list(self.eta_seq)
            doc["lambda_seq"] = list(self.lambda_seq)
        return doc


@dataclass(frozen=True)
class CorrectionRecord:
    """Data needed to build the buffered-coordinate correction map H_t
    applied at a phase start t (statealg.build_Ht consumes this)."""

    t: int
    alpha_t: float
    alpha_t1: float
    eta_prev: float
    eta_cur: float


@dataclass(frozen=True)
class TranslatedSchedule:
    """Output of a translator; all arrays are indexed by iteration.

    * ``log_eta_tilde[t]``, ``eta_tilde[t]``: translated LR for the step
      leaving theta_tilde_t, t = 0..n-1.  Linear values are +inf from
      ``overflowed_at`` onwards; the log values are always finite.
    * ``alpha_seq[t]``: t = 0..n.  Entry 0 is the seed.
    * ``logP_seq[t]``: t = 0..n; log of the norm amplification of the
      equivalent run at step t.
    * ``corrections``: momentum corrections by iteration (TEXP only).
    * ``init_buffer_scale`` / ``log_eta_tilde_minus1``: the initial-state
      transform -- the equivalent run starts from
      (theta_0, eta_tilde_0, s * theta_-1, exp(log_eta_tilde_minus1)).
    """

    kind: str
    gamma: float
    log_eta_tilde: np.ndarray
    eta_tilde: np.ndarray
    alpha_seq: np.ndarray
    logP_seq: np.ndarray
    corrections: tuple
    eta_seq: np.ndarray
    lambda_seq: np.ndarray
    init_buffer_scale: float
    log_eta_tilde_minus1: float
    overflowed_at: int = None
    note: str = ""

    @property
    def num_iters(self):
        return len(self.log_eta_tilde)

    def correction_at(self, t):
        for c in self.corrections:
            if c.t == t:
                return c
        return None


def _linearize(log_eta):
    """Linear LR values while representable, +inf with a marker after."""
    eta = np.full(len(log_eta), np.inf)
    ok = log_eta < _LOG_MAX
    eta[ok] = np.exp(log_eta[ok])
    overflowed_at = None if ok.all() else int(np.argmin(ok))
    return eta, overflowed_at


def translate_constant(hp, num_iters):
    """Constant-LR translation: eta_tilde_t = eta0 * alpha**-(2t+1).

    alpha is the larger quadratic root; the norm of the equivalent run
    grows as P_t = alpha**-t.
    """
    if num_iters < 1:
        raise ConfigError("num_iters must be >= 1")
    roots = solve_quadratic(hp.gamma, hp.lam, hp.eta0)
    alpha = roots.z1
    if alpha <= 0.0:
        raise NonPositiveAlpha(1, alpha)
    log_a = math.log(alpha)
    t = np.arange(num_iters)
    log_eta = math.log(hp.eta0) - (2 * t + 1) * log_a
    eta_tilde, overflowed_at = _linearize(log_eta)
    if log_a == 0.0:
        # zero decay: emit the input LR bit-identical rather than the
        # one-ulp-off exp(log(eta0))
        eta_tilde[:] = hp.eta0
    alpha_seq = np.full(num_iters + 1, alpha)
    alpha_seq[0] = 1.0
    logP = -log_a * np.arange(num_iters + 1, dtype=float)
    return TranslatedSchedule(
        kind=EXP_CONST,
        gamma=hp.gamma,
        log_eta_tilde=log_eta,
        eta_tilde=eta_tilde,
        alpha_seq=alpha_seq,
        logP_seq=logP,
        corrections=(),
        eta_seq=np.full(num_iters, hp.eta0),
        lambda_seq=np.full(num_iters, hp.lam),
        init_buffer_scale=alpha,
        log_eta_tilde_minus1=math.log(hp.eta0) + log_a,
        overflowed_at=overflowed_at,
    )


def _phase_roots(spec):
    roots = []
    for i, p in enumerate(spec.phases):
        try:
            roots.append(solve_quadratic(spec.gamma, p.wd, p.lr).z1)
        except InfeasibleRoots as e:
            raise InfeasibleRoots(spec.gamma, p.wd * p.lr, phase=i) from None
    if any(r <= 0.0 for r in roots):
        raise NonPositiveAlpha(0, min(roots))
    return roots


def _step_decay_translate(spec, num_iters, instant_decay):
    """Shared body of the TEXP and TEXP-- translators."""
    if spec.kind != "step_decay":
        raise ConfigError(f"expected step_decay schedule, got {spec.kind}")
    n = spec.num_iters(default=num_iters) if num_iters is None else num_iters
    if n < 1:
        raise ConfigError("num_iters must be >= 1")
    eta_seq, lambda_seq = spec.materialize(n)
    roots = _phase_roots(spec)
    # alpha_t for t >= 1 is the root of the phase containing iteration t-1
    pidx = spec.phase_index(np.arange(n))
    alpha_seq = np.ones(n + 1)
    alpha_seq[1:] = np.array(roots)[pidx]
    logP = np.concatenate(([0.0], np.cumsum(-np.log(alpha_seq[1:]))))

    log_eta = np.empty(n)
    eta_lin = np.empty(n)
    log_eta[0] = math.log(eta_seq[0]) - math.log(roots[0])
    eta_lin[0] = eta_seq[0] / roots[0]
    corrections = []
    for t in range(1, n):
        growth = 1.0 / (alpha_seq[t] * alpha_seq[t + 1])
        log_growth = -math.log(alpha_seq[t]) - math.log(alpha_seq[t + 1])
        if pidx[t] != pidx[t - 1]:
            if instant_decay:
                growth *= eta_seq[t] / eta_seq[t - 1]
                log_growth += math.log(eta_seq[t]) - math.log(eta_seq[t - 1])
            if not (eta_seq[t] == eta_seq[t - 1]
                    and alpha_seq[t + 1] == alpha_seq[t]):
                corrections.append(CorrectionRecord(
                    t=t,
                    alpha_t=alpha_seq[t],
                    alpha_t1=alpha_seq[t + 1],
                    eta_prev=eta_seq[t - 1],
                    eta_cur=eta_seq[t],
                ))
        eta_lin[t] = eta_lin[t - 1] * growth
        log_eta[t] = log_eta[t - 1] + log_growth
    eta_tilde, overflowed_at = _linearize(log_eta)
    finite = np.isfinite(eta_lin)
    eta_tilde[finite] = eta_lin[finite]  # keep the literal recursion values
    note = ""
    if not instant_decay:
        drops = [f"x{spec.phases[i + 1].lr / spec.phases[i].lr:.6g} at "
                 f"t={spec.phases[i + 1].start}"
                 for i in range(len(spec.phases) - 1)]
        note = ("equivalent to constant LR with WD reduced by the phase "
                "LR ratio at each start: " + ", ".join(drops))
    return TranslatedSchedule(
        kind=TEXP if instant_decay else TEXP_MINUS,
        gamma=spec.gamma,
        log_eta_tilde=log_eta,
        eta_tilde=eta_tilde,
        alpha_seq=alpha_seq,
        logP_seq=logP,
        corrections=tuple(corrections) if instant_decay else (),
        eta_seq=eta_seq,
        lambda_seq=lambda_seq,
        init_buffer_scale=roots[0],
        log_eta_tilde_minus1=math.log(eta_seq[0]) + math.log(roots[0]),
        overflowed_at=overflowed_at,
        note=note,
    )


def translate_step_decay_texp(spec, num_iters=None):
    """Tapered-exponential translation of a step-decay schedule.

    Within a phase the LR grows by the squared inverse phase root; at a
    phase start it additionally jumps by the phase LR ratio times the
    product of the adjacent roots, and a momentum-correction record is
    emitted for the trainer.
    """
    return _step_decay_translate(spec, num_iters, instant_decay=True)


def translate_texp_minus(spec, num_iters=None):
    """TEXP without the instant LR-decay factor at phase starts."""
    return _step_decay_translate(spec, num_iters, instant_decay=False)


def translate_texppp(eta_seq, lambda_seq, gamma, alpha0=1.0, alpha_minus1=1.0):
    """Exact translation of arbitrary per-iteration (eta_t, lambda_t).

    alpha_t = -eta_{t-1} lambda_{t-1} + 1
              + (eta_{t-1}/eta_{t-2}) * gamma * (1 - 1/alpha_{t-1})
    with the eta_{-1} = eta_0 convention, then
    eta_tilde_t = P_t P_{t+1} eta_t accumulated in the log domain.
    """
    eta_seq = np.asarray(eta_seq, dtype=float)
    lambda_seq = np.asarray(lambda_seq, dtype=float)
    if eta_seq.shape != lambda_seq.shape:
        raise ConfigError("eta_seq and lambda_seq lengths differ")
    n = len(eta_seq)
    if n < 2:
        raise ConfigError("need at least 2 iterations to translate")
    if (eta_seq <= 0).any():
        raise ConfigError("LR sequence must be strictly positive")
    if (lambda_seq < 0).any():
        raise ConfigError("WD sequence must be non-negative")
    if not (0.0 <= gamma < 1.0):
        raise ConfigError(f"gamma must be in [0, 1), got {gamma}")
    if alpha0 <= 0 or alpha_minus1 <= 0:
        raise ConfigError("alpha seeds must be positive")

    alpha_seq = np.empty(n + 1)
    alpha_seq[0] = alpha0
    for t in range(1, n + 1):
        eta_prev = eta_seq[t - 1]
        eta_prev2 = eta_seq[t - 2] if t >= 2 else eta_seq[0]
        a = (-eta_prev * lambda_seq[t - 1] + 1.0
             + (eta_prev / eta_prev2) * gamma * (1.0 - 1.0 / alpha_seq[t - 1]))
        if a <= 0.0:
            raise NonPositiveAlpha(t, a)
        alpha_seq[t] = a

    logP = -(math.log(alpha_minus1) + np.cumsum(np.log(alpha_seq)))
    log_eta = logP[:-1] + logP[1:] + np.log(eta_seq)
    eta_tilde, overflowed_at = _linearize(log_eta)
    logP_minus1 = -math.log(alpha_minus1)
    return TranslatedSchedule(
        kind=TEXPPP,
        gamma=gamma,
        log_eta_tilde=log_eta,
        eta_tilde=eta_tilde,
        alpha_seq=alpha_seq,
        logP_seq=logP,
        corrections=(),
        eta_seq=eta_seq.copy(),
        lambda_seq=lambda_seq.copy(),
        init_buffer_scale=1.0 / alpha_minus1,
        log_eta_tilde_minus1=logP_minus1 + logP[0] + math.log(eta_seq[0]),
        overflowed_at=overflowed_at,
    )


def translate_cosine(eta0, T, lam, gamma):
    """Translate a half-cosine decay eta_t = eta0*(1+cos(pi t/T))/2.

    The recursion divides by eta values, so translation stops at T-1
    (eta_T = 0 is excluded).
    """
    if T < 2:
        raise ConfigError("cosine schedule needs T >= 2")
    spec = ScheduleSpec(kind="cosine", gamma=gamma, eta0=eta0, wd=lam, total=T)
    eta_seq, lambda_seq = spec.materialize(T)  # t = 0..T-1, all positive
    return translate_texppp(eta_seq, lambda_seq, gamma)


def alpha_bounds_check(schedule, lambda_max, eta_max, gamma, slack=1e-12):
    """Certify z_min <= alpha_t <= 1 plus the closed-form root identity.

    z_min is the larger root at (lambda_max, eta_max).  Also verifies,
    for every distinct (lambda, eta) pair in the source schedule:
      1 - z1 == 2*tau / (1 + tau + sqrt(1 - 2*((1+g)/(1-g))*tau + tau^2))
    with tau = lambda*eta/(1-gamma), and the safe bound 1 - z1 <= 2*tau.
    Raises BoundViolation on failure, otherwise returns the report.
    """
    if abs(schedule.alpha_seq[0] - 1.0) > slack:
        raise BoundViolation(0, "bounds are proven for the seed alpha_0 = 1")
    z_min = solve_quadratic(gamma, lambda_max, eta_max).z1
    alphas = schedule.alpha_seq
    low = alphas < z_min - slack
    high = alphas > 1.0 + slack
    if low.any() or high.any():
        t = int(np.argmax(low | high))
        raise BoundViolation(
            t, f"alpha_t = {alphas[t]:.17g} outside [{z_min:.17g}, 1]")

    identity_rows = []
    pairs = {(float(l), float(e))
             for l, e in zip(schedule.lambda_seq, schedule.eta_seq)}
    pairs.add((float(lambda_max), float(eta_max)))
    for lam, eta in sorted(pairs):
        z1 = solve_quadratic(gamma, lam, eta).z1
        tau = lam * eta / (1.0 - gamma)
        inner = 1.0 - 2.0 * ((1.0 + gamma) / (1.0 - gamma)) * tau + tau * tau
        closed = 2.0 * tau / (1.0 + tau + math.sqrt(max(inner, 0.0)))
        # 1 - z1 carries ~1 ulp of absolute cancellation error, which
        # for tiny tau exceeds 1e-12 relative; allow abs 1e-12 too
        err = abs((1.0 - z1) - closed) / (1.0 + closed)
        if tau > 0 and err > 1e-12:
            raise BoundViolation(
                0, f"closed-form identity off by {err:.3e} at "
                   f"(lambda={lam}, eta={eta})")
        if (1.0 - z1) > 2.0 * tau + slack:
            raise BoundViolation(
                0, f"safe bound 1-z1 <= 2*tau failed at (lambda={lam}, "
                   f"eta={eta})")
        identity_rows.append({"lambda": lam, "eta": eta, "z1": z1,
                              "tau": tau, "one_minus_z1": 1.0 - z1,
                              "closed_form": closed, "rel_err": err})
    return {
        "z_min": z_min,
        "alpha_min": float(alphas.min()),
        "alpha_max": float(alphas.max()),
        "num_alphas": len(alphas),
        "identity": identity_rows,
        "passed": True,
    }


def texp_texppp_deviation(spec, num_iters=None):
    """Per-iteration ratio deviation between TEXP and exact TEXP++.

    For each t the deviation is
    |(etahat_{t-1}/etahat_t) / (etatilde_{t-1}/etatilde_t) - 1|
    (hat = TEXP++, tilde = TEXP); the theoretical in-phase envelope is
    3*(lambda_max*eta_max/(1-gamma)) * (gamma/z_min**2)**(t - T_I - 1).
    """
    texp = translate_step_decay_texp(spec, num_iters)
    n = texp.num_iters
    eta_seq, lambda_seq = texp.eta_seq, texp.lambda_seq
    texppp = translate_texppp(eta_seq, lambda_seq, spec.gamma)

    lam_max = float(lambda_seq.max())
    eta_max = float(eta_seq.max())
    gamma = spec.gamma
    z_min = solve_quadratic(gamma, lam_max, eta_max).z1
    if gamma > 0 and z_min > 0:
        rate = gamma / (z_min * z_min)
        coeff = 3.0 * lam_max * eta_max / (1.0 - gamma)
    else:
        rate, coeff = 0.0, 0.0

    starts = np.array([p.start for p in spec.phases])
    t = np.arange(1, n)
    log_ratio_texp = texp.log_eta_tilde[:-1] - texp.log_eta_tilde[1:]
    log_ratio_texppp = texppp.log_eta_tilde[:-1] - texppp.log_eta_tilde[1:]
    deviation = np.abs(np.expm1(log_ratio_texppp - log_ratio_texp))

    # the envelope applies to in-phase ratios only: both steps t-1 and t
    # must lie in the same phase I, giving exponent t - T_I - 1 >= 0
    phase_of = spec.phase_index(t - 1)          # phase of iteration t-1
    t_start = starts[phase_of]                  # its T_I
    in_phase = spec.phase_index(t) == phase_of
    envelope = np.where(in_phase,
                        coeff * np.power(rate, t - t_start - 1), np.inf)
    exceed = deviation > envelope
    return {
        "t": t,
        "deviation": deviation,
        "envelope": envelope,
        "in_phase": in_phase,
        "exceedances": int(exceed.sum()),
        "max_in_phase_deviation": float(deviation[in_phase].max())
        if in_phase.any() else 0.0,
        "passed": not exceed.any(),
        "texp": texp,
        "texppp": texppp,
    }
