"""Exception types shared across the toolkit."""


class InvalidStateError(ValueError):
    """A state, control, or timestep contained a non-finite value."""


class SteeringSingularityError(ValueError):
    """Bicycle steering angle at or beyond +/- pi/2."""


class MissingObstacleError(KeyError):
    """A detection referenced an obstacle id with no known position."""


class ScenarioGenerationError(RuntimeError):
    """Random scenario generation could not satisfy placement constraints."""


class SchemaVersionError(ValueError):
    """Dataset or report file declares an unsupported schema version."""


class DatasetParseError(ValueError):
    """Dataset file is structurally malformed; message names the offending line."""


class DegenerateNormalizationError(ValueError):
    """Start and goal coincide, so the trajectory-distance normalizer is zero."""
