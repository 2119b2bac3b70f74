"""Exception types shared across the package."""


class WdexpError(Exception):
    """Base class for all package errors."""


class ConfigError(WdexpError):
    """Malformed or inconsistent configuration input."""


class InfeasibleRoots(WdexpError):
    """lambda*eta exceeds (1-sqrt(gamma))^2, so the characteristic quadratic
    has no real roots and no equivalent exponential schedule exists."""

    def __init__(self, gamma, lam_eta, phase=None):
        self.gamma = gamma
        self.lam_eta = lam_eta
        self.phase = phase
        where = "" if phase is None else f" (phase {phase})"
        limit = (1.0 - gamma ** 0.5) ** 2
        super().__init__(
            f"infeasible: lambda*eta = {lam_eta:.6g} > (1-sqrt(gamma))^2 = "
            f"{limit:.6g}{where}"
        )


class NonPositiveAlpha(WdexpError):
    """The exact alpha recursion produced a non-positive value, so the input
    schedule admits no equivalent exponential schedule."""

    def __init__(self, t, value):
        self.t = t
        self.value = value
        super().__init__(f"alpha_{t} = {value:.6g} <= 0")


class BoundViolation(WdexpError):
    """A certified bound on the alpha sequence failed."""

    def __init__(self, t, message):
        self.t = t
        super().__init__(f"at t={t}: {message}")


class NonPositiveScale(WdexpError):
    """Scaling maps are only defined for positive constants."""


class DimensionMismatch(WdexpError):
    """Vector dimensions disagree."""


class LemmaViolation(WdexpError):
    """A numerical lemma check failed; carries the counterexample."""

    def __init__(self, lemma, rel_err, state=None):
        self.lemma = lemma
        self.rel_err = rel_err
        self.state = state
        super().__init__(f"{lemma}: relative error {rel_err:.3e}")


class NumericalBlowup(WdexpError):
    """A trajectory produced a non-finite value."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"non-finite value at iteration {t}")


class LengthMismatch(WdexpError):
    """Paired sequences have different lengths."""


class InsufficientLength(WdexpError):
    """A series is too short for the requested statistic."""


class InvalidBudget(WdexpError):
    """Escape-budget preconditions failed (eta*lambda <= 2*eps^2 or a
    non-positive logarithm argument)."""


class CycleDetected(WdexpError):
    """The computation graph is not acyclic."""


class InvalidArity(WdexpError):
    """A graph node has the wrong in-degree for its kind."""


class RealizationMismatch(WdexpError):
    """Symbolic graph verdict disagrees with its numeric realization."""
