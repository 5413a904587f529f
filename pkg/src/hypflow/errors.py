"""Exception hierarchy shared by all hypflow modules."""


class HypflowError(Exception):
    """Base class for every error raised by hypflow."""


class ConfigurationError(HypflowError, ValueError):
    """Invalid parameters or configuration.

    ``violations`` holds every problem found, not only the first one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(HypflowError, ValueError):
    """A radius or graph value lies outside the model's range."""


class AdmissibilityError(HypflowError):
    """Principal curvatures left the cone of the curvature function.

    Parameters
    ----------
    message : str
    nodes : array_like of int, optional
        Flat indices of the offending nodes.
    values : array_like, optional
        Curvature vectors at those nodes.
    t : float, optional
        Flow time at which the violation was detected.
    stage : int, optional
        Runge-Kutta stage index (1-4) when raised inside a step.
    """

    def __init__(self, message, nodes=None, values=None, t=None, stage=None):
        self.nodes = [] if nodes is None else list(nodes)
        self.values = values
        self.t = t
        self.stage = stage
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        extra = []
        if self.t is not None:
            extra.append(f"t={self.t:.6g}")
        if self.stage is not None:
            extra.append(f"stage={self.stage}")
        if self.nodes:
            shown = ", ".join(str(i) for i in self.nodes[:8])
            more = "" if len(self.nodes) <= 8 else f", ... ({len(self.nodes)} total)"
            extra.append(f"nodes=[{shown}{more}]")
        return msg + (" (" + "; ".join(extra) + ")" if extra else "")


class StencilError(HypflowError):
    """A finite-difference stencil would leave the admissible cone."""


class NumericsError(HypflowError):
    """Non-finite values appeared in a computed field."""

    def __init__(self, message, nodes=None, t=None):
        self.nodes = [] if nodes is None else list(nodes)
        self.t = t
        super().__init__(message)


class FitError(HypflowError, ValueError):
    """A rate fit could not be performed on the requested data."""
