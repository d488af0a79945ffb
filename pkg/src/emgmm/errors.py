"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid argument or configuration."""


class ShapeError(ValidationError):
    """Array shapes are inconsistent with the model."""


class DomainError(ValidationError):
    """Argument lies outside the domain where a formula is defined."""


class DegenerateModelError(ValidationError):
    """Quantity is undefined for a single-component model."""


class GeometryError(ValidationError):
    """Requested center layout cannot be realised in the given dimension."""


class WeightCollapseError(ArithmeticError):
    """Total responsibility of a component underflowed.

    Attributes:
        component: index of the collapsed component.
        mass: the offending total weight.
        iteration: EM iteration at which it happened (None outside a run).
        trial: experiment trial index (None outside a trial run).
    """

    def __init__(self, component, mass, iteration=None, trial=None):
        self.component = int(component)
        self.mass = float(mass)
        self.iteration = iteration
        self.trial = trial
        super().__init__(self._message())

    def _message(self):
        msg = f"weight collapse in component {self.component} (total weight {self.mass:.3e})"
        if self.iteration is not None:
            msg += f" at iteration {self.iteration}"
        if self.trial is not None:
            msg += f" in trial {self.trial}"
        return msg

    def tagged(self, iteration=None, trial=None):
        """Return a copy carrying extra location info."""
        return WeightCollapseError(
            self.component,
            self.mass,
            self.iteration if iteration is None else iteration,
            self.trial if trial is None else trial,
        )
