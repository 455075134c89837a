# relaytherm/core/errors.py
"""Exception hierarchy. `exit_code` is what the CLI returns when the error escapes a command."""


class RelayThermError(Exception):
    exit_code = 1


class ConfigurationError(RelayThermError):
    """Invalid descriptor, thresholds or run configuration."""
    exit_code = 2


class UsageError(RelayThermError):
    """API misuse, e.g. feeding the relay non-monotone times."""
    exit_code = 2


class NumericalError(RelayThermError):
    exit_code = 1


class DetectionFailure(NumericalError):
    """Bracketing of a threshold crossing could not be completed."""


class ZenoSuspected(NumericalError):
    """Two consecutive inter-switch gaps fell below the dwell floor."""


class DegenerateLinearization(NumericalError):
    """Q(s) vanishes, so the half-period map has no linearization."""


class HypothesisViolated(NumericalError):
    """A precondition of the stability theory (Q > 0, valid solution) fails."""


class InternalConsistencyError(NumericalError):
    pass


class NonDifferentiablePoint(NumericalError):
    """A perturbation changed the switching structure of the Poincare map."""


class EigenvalueFailure(NumericalError):
    pass
