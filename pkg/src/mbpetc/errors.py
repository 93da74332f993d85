"""Exception hierarchy for the mbpetc package."""


class MbpetcError(Exception):
    """Base class for all package-specific errors."""


class CertificationError(MbpetcError):
    """A required certificate assumption failed on the sampled set.

    Carries the offending state when one is known.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PredictionDomainError(MbpetcError):
    """A lookup-table prediction was queried outside its tabulated box.

    The trigger treats this like the level-set guard and forces a
    transmission instead of extrapolating.
    """


class SimulationAbort(MbpetcError):
    """The closed-loop simulation left the certified operating region."""


class ConfigError(MbpetcError):
    """Invalid experiment or simulation configuration."""
