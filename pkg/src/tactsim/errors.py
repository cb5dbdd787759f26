"""Exception hierarchy shared by all tactsim modules."""


class TactsimError(Exception):
    """Base class for all tactsim errors."""


class DimensionOverflow(TactsimError):
    """Requested Hilbert-space or density-matrix dimension exceeds the configured cap."""


class BadFactor(TactsimError):
    """A tensor factor cannot host the requested operator."""


class DimensionMismatch(TactsimError):
    """Operands live on different spaces or have incompatible shapes."""


class InconsistentParams(TactsimError):
    """Physical parameters violate a required consistency relation."""


class BasisMismatch(TactsimError):
    """Requested channels are incompatible with the chosen basis."""


class NoConvergence(TactsimError):
    """Iterative solver failed to reach the residual tolerance."""


class StepSizeTooLarge(TactsimError):
    """Integrator step produced more norm drift than allowed."""


class TraceDrift(TactsimError):
    """Density-matrix trace drifted beyond tolerance during evolution."""


class RateNegative(TactsimError):
    """A dissipation rate is negative."""


class DegenerateMeanSpin(TactsimError):
    """Mean spin too small to define a squeezing direction."""


class ChannelMissing(TactsimError):
    """A requested observable channel is absent from the time series."""


class ParseError(TactsimError):
    """Scenario file is not syntactically valid."""


class ValidationError(TactsimError):
    """Scenario file is syntactically valid but semantically inconsistent."""
