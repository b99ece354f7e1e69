"""Exception hierarchy. The CLI prints the class name as the machine-readable error tag."""


class MglstmError(Exception):
    pass


class IntegrationDivergenceError(MglstmError):
    """Non-finite state while integrating the delay equation (dt_int too large)."""


class DegenerateScaleError(MglstmError):
    """Min-max scaling requested for a constant series."""


class ParameterShapeError(MglstmError):
    pass


class DivergenceError(MglstmError):
    """Training produced a non-finite loss.

    ``checkpoint`` holds the last parameters that gave a finite loss.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class UndefinedAlphaError(MglstmError):
    pass


class DegenerateRelaxationError(MglstmError):
    """The impulse did not raise the error above the unperturbed level."""


class StaleArtifactError(MglstmError):
    pass


class MissingArtifactError(MglstmError):
    pass


class ConfigError(MglstmError):
    pass
