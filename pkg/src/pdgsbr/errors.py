"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A distribution parameter is outside its admissible domain."""


class DegenerateWeightsError(ValueError):
    """Categorical weights are all zero, negative, or non-finite."""


class InvalidStateError(RuntimeError):
    """A sampler was handed a state with non-finite log-density."""


class DivergenceError(RuntimeError):
    """A simulated trajectory left the finite-value guard region.

    Carries the series index (when known) and the time index at which the
    trajectory first became unusable, together with the finite prefix.
    """

    def __init__(self, index, series=None, prefix=None):
        self.index = index
        self.series = series
        self.prefix = prefix
        where = f"series {series}, " if series is not None else ""
        super().__init__(f"trajectory diverged ({where}step {index})")


class SingularDesignError(RuntimeError):
    """The precision matrix of a control-parameter draw is numerically singular."""

    def __init__(self, series, cond=None):
        self.series = series
        self.cond = cond
        super().__init__(
            f"singular design for series {series}"
            + (f" (condition estimate {cond:.3g})" if cond is not None else "")
        )


class TruthUnavailableError(ValueError):
    """A diagnostic needs ground truth that the data set does not carry."""


class InsufficientSamplesError(ValueError):
    """Too few posterior samples for the requested summary."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or internally inconsistent."""
