"""Exception hierarchy shared by every module of the package."""


class AlmError(Exception):
    """Base class for all package errors."""


class InvalidParams(AlmError, ValueError):
    """One or more model parameters violate their constraints.

    Attributes:
        violations: list of ``(field, message)`` pairs, one per offending field.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{name}: {msg}" for name, msg in self.violations)
        super().__init__(f"invalid parameters ({text})")

    @property
    def fields(self):
        return [name for name, _ in self.violations]


class DomainError(AlmError, ValueError):
    """Argument outside the mathematical domain (typically kappa * c >= 1)."""


class UnsupportedForPointMass(AlmError):
    """A density was requested for a distribution without one."""


class UnsupportedMode(AlmError):
    """The truncation mode does not define the requested operation."""


class NumericalFailure(AlmError):
    """A numerical routine could not reach a trustworthy answer."""


class QuadratureFailure(NumericalFailure):
    """Adaptive quadrature exhausted its subdivision budget."""


class NoRootInRange(AlmError):
    """h(0) <= 0, so no optimal underwriting ratio exists in [0, 1/c)."""

    def __init__(self, h_at_zero: float):
        self.h_at_zero = h_at_zero
        super().__init__(
            f"no root of h in [0, 1/c): existence margin h(0) = {h_at_zero:.9g} <= 0"
        )


class PositivityBreach(NumericalFailure):
    """A simulated wealth or deflator value became non-positive."""


class UtilityOverflow(NumericalFailure):
    """Realized utility is not finite (wealth or consumption underflowed to 0)."""
