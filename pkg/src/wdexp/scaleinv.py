"""Scale-invariant objectives and their invariance checks.

Each objective is packaged as an ``ObjectiveHandle`` with ``value(theta,
t)`` and ``grad(theta, t)``; the iteration index selects the minibatch
through the package RNG convention (see rng.py), so two runs built from
the same seed consume identical batches.  All objectives satisfy
L(c*theta) = L(theta) for c > 0, hence grad(theta) is orthogonal to
theta and grad(c*theta) = grad(theta)/c; ``check_scale_invariance`` and
``check_gradient_properties`` verify both numerically.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NumericalBlowup
from .rng import iteration_rng, trial_seed

_BN_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class ObjectiveHandle:
    name: str
    dim: int
    value: object  # callable (theta, t) -> float
    grad: object   # callable (theta, t) -> ndarray
    config: dict = field(default_factory=dict)


def _check_dim(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise DimensionMismatch(
            f"expected theta of shape ({dim},), got {theta.shape}")
    return theta


def _sigmoid_neg(z):
    """sigmoid(-z) computed stably for large |z|."""
    return np.exp(-np.logaddexp(0.0, z))


def norm_quadratic(dim, seed=0):
    """L(theta) = u^T A u / 2 with u = theta/|theta| and a fixed random
    symmetric A; deterministic (the iteration index is ignored)."""
    if dim < 2:
        raise ConfigError("norm_quadratic needs dim >= 2")
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((dim, dim))
    a = 0.5 * (m + m.T)

    def value(theta, t=0):
        theta = _check_dim(theta, dim)
        u = theta / np.linalg.norm(theta)
        return 0.5 * float(u @ a @ u)

    def grad(theta, t=0):
        theta = _check_dim(theta, dim)
        r = np.linalg.norm(theta)
        u = theta / r
        au = a @ u
        return (au - (u @ au) * u) / r

    return ObjectiveHandle(
        name="norm_quadratic", dim=dim, value=value, grad=grad,
        config={"objective": "norm_quadratic", "dim": dim, "seed": seed})


def norm_logistic(m, batch, seed=0, fixed_batch=False):
    """Logistic regression on the normalized parameter u = theta/|theta|.

    Batch t: x ~ N(0, I_m), y = sign(x_1), loss mean log(1+exp(-y x^T u)).
    With ``fixed_batch`` the t = 0 batch is reused every iteration,
    which makes the objective deterministic for gradient-flow style
    experiments.
    """
    if m < 2:
        raise ConfigError("norm_logistic needs m >= 2")
    if batch < 1:
        raise ConfigError("norm_logistic needs batch >= 1")

    def draw(t):
        rng = iteration_rng(seed, 0 if fixed_batch else t)
        x = rng.standard_normal((batch, m))
        y = np.where(x[:, 0] >= 0.0, 1.0, -1.0)
        return x, y

    def value(theta, t=0):
        theta = _check_dim(theta, m)
        x, y = draw(t)
        u = theta / np.linalg.norm(theta)
        z = (x @ u) * y
        return float(np.logaddexp(0.0, -z).mean())

    def grad(theta, t=0):
        theta = _check_dim(theta, m)
        x, y = draw(t)
        r = np.linalg.norm(theta)
        u = theta / r
        z = (x @ u) * y
        du = -(x.T @ (y * _sigmoid_neg(z))) / len(y)
        return (du - (u @ du) * u) / r

    return ObjectiveHandle(
        name="norm_logistic", dim=m, value=value, grad=grad,
        config={"objective": "norm_logistic", "m": m, "batch": batch,
                "seed": seed, "fixed_batch": fixed_batch})


def tiny_norm_mlp(m, hidden, batch, seed=0):
    """One-hidden-layer net whose trainable weights sit below a
    batch-normalization, making the loss invariant to their scale.

    theta is the flattened (hidden, m) input layer W.  Forward pass:
    H = X W^T, normalize each hidden unit to zero mean and unit variance
    over the batch (no eps, no affine), project with a fixed random
    readout v, logistic loss against y = sign(x_1).  The readout stays
    fixed; training it would break exact scale invariance.  Batches with
    a hidden-unit variance at or below 1e-12 are rejected.
    """
    if m < 2 or hidden < 1:
        raise ConfigError("tiny_norm_mlp needs m >= 2 and hidden >= 1")
    if batch < 2:
        raise ConfigError("tiny_norm_mlp needs batch >= 2 for batch stats")
    dim = hidden * m
    v = np.random.default_rng(trial_seed(seed, 1)).standard_normal(hidden)

    def draw(t):
        rng = iteration_rng(seed, t)
        x = rng.standard_normal((batch, m))
        y = np.where(x[:, 0] >= 0.0, 1.0, -1.0)
        return x, y

    def forward(theta, t):
        theta = _check_dim(theta, dim)
        w = theta.reshape(hidden, m)
        x, y = draw(t)
        h = x @ w.T
        mu = h.mean(axis=0)
        var = h.var(axis=0)
        if (var <= _BN_VAR_FLOOR).any():
            raise NumericalBlowup(t)
        sd = np.sqrt(var)
        hhat = (h - mu) / sd
        z = hhat @ v
        return x, y, hhat, sd, z

    def value(theta, t=0):
        _, y, _, _, z = forward(theta, t)
        return float(np.logaddexp(0.0, -y * z).mean())

    def grad(theta, t=0):
        x, y, hhat, sd, z = forward(theta, t)
        b = len(y)
        dz = -(y * _sigmoid_neg(y * z)) / b
        dhhat = np.outer(dz, v)
        dh = (dhhat - dhhat.mean(axis=0)
              - hhat * (dhhat * hhat).mean(axis=0)) / sd
        return (dh.T @ x).ravel()

    return ObjectiveHandle(
        name="tiny_norm_mlp", dim=dim, value=value, grad=grad,
        config={"objective": "tiny_norm_mlp", "m": m, "hidden": hidden,
                "batch": batch, "seed": seed})


def by_name(config):
    """Build an objective from its JSON config dict."""
    kind = config.get("objective")
    seed = int(config.get("seed", 0))
    if kind == "norm_quadratic":
        return norm_quadratic(int(config["dim"]), seed)
    if kind == "norm_logistic":
        return norm_logistic(int(config["m"]), int(config.get("batch", 64)),
                             seed, bool(config.get("fixed_batch", False)))
    if kind == "tiny_norm_mlp":
        return tiny_norm_mlp(int(config["m"]), int(config.get("hidden", 4)),
                             int(config.get("batch", 64)), seed)
    raise ConfigError(f"unknown objective {kind!r}")


def finite_diff_grad(f, theta, h=1e-6):
    """Central-difference gradient of f at theta."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return g


def _random_theta(rng, dim):
    v = rng.uniform(-1.0, 1.0, dim)
    return v * (rng.uniform(0.5, 2.0) / np.linalg.norm(v))


def check_scale_invariance(obj, trials=10, seed=0, scales=(0.5, 2.0, 10.0),
                           tol=1e-9):
    """Verify L(c*theta) = L(theta) and c*grad(c*theta) = grad(theta)."""
    rng = np.random.default_rng(seed)
    max_value_err = 0.0
    max_grad_err = 0.0
    violations = []
    for k in range(trials):
        theta = _random_theta(rng, obj.dim)
        t = int(rng.integers(0, 1000))
        val = obj.value(theta, t)
        g = obj.grad(theta, t)
        gnorm = np.linalg.norm(g)
        for c in scales:
            verr = abs(obj.value(c * theta, t) - val) / (1.0 + abs(val))
            gerr = (np.linalg.norm(c * obj.grad(c * theta, t) - g)
                    / (1.0 + gnorm))
            max_value_err = max(max_value_err, verr)
            max_grad_err = max(max_grad_err, gerr)
            if verr > tol or gerr > tol:
                violations.append({"trial": k, "scale": c,
                                   "value_err": verr, "grad_err": gerr})
    return {"objective": obj.name, "trials": trials, "scales": list(scales),
            "max_value_err": max_value_err, "max_grad_err": max_grad_err,
            "tol": tol, "violations": violations, "passed": not violations}


def check_gradient_properties(obj, trials=10, seed=0, fd_h=1e-6,
                              fd_tol=1e-4, ortho_tol=1e-10):
    """Verify grad(theta) is orthogonal to theta and matches central
    finite differences of the value."""
    rng = np.random.default_rng(seed)
    max_ortho = 0.0
    max_fd = 0.0
    violations = []
    for k in range(trials):
        theta = _random_theta(rng, obj.dim)
        t = int(rng.integers(0, 1000))
        g = obj.grad(theta, t)
        ortho = abs(g @ theta) / (np.linalg.norm(g)
                                  * np.linalg.norm(theta) + 1e-300)
        fd = finite_diff_grad(lambda th: obj.value(th, t), theta, fd_h)
        fderr = np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(fd))
        max_ortho = max(max_ortho, ortho)
        max_fd = max(max_fd, fderr)
        if ortho > ortho_tol or fderr > fd_tol:
            violations.append({"trial": k, "ortho": ortho, "fd_err": fderr})
    return {"objective": obj.name, "trials": trials,
            "max_ortho_err": max_ortho, "max_fd_err": max_fd,
            "ortho_tol": ortho_tol, "fd_tol": fd_tol,
            "violations": violations, "passed": not violations}
