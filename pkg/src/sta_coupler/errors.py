"""Exception hierarchy shared by all modules."""


class CouplerError(Exception):
    """Base class for every error raised by sta_coupler."""


class DegenerateField(CouplerError):
    """An angle was requested where both of its defining components vanish."""


class NonUnitary(CouplerError):
    """A basis transform failed its unitarity check."""


class NormDrift(CouplerError):
    """Amplitude norm wandered away from one; the step is too coarse."""


class TraceDrift(CouplerError):
    """Density-matrix trace wandered away from one."""


class PurityDrift(CouplerError):
    """Density-matrix purity wandered away from one."""


class Indeterminate(CouplerError):
    """Convergence order cannot be estimated because the error is already at round-off."""


class NotReached(CouplerError):
    """No coupler length up to the search limit meets the transfer threshold."""
