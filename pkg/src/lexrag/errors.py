"""Exception hierarchy with machine-readable error codes.

Every error the service surfaces over HTTP maps to one code from the
closed set below; the API layer relies on ``code`` being stable.
"""


class LexragError(Exception):
    """Base class for all engine errors."""

    code = "internal"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


class DimensionMismatchError(LexragError):
    code = "dimension_mismatch"


class NormalizationError(LexragError):
    code = "normalization_error"


class NumericError(LexragError):
    code = "numeric_error"


class ValidationError(LexragError):
    code = "validation_error"


class ParseError(LexragError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ConflictError(LexragError):
    code = "conflict"


class NotFoundError(LexragError):
    code = "not_found"


class EmbeddingLookupError(LexragError):
    code = "embedding_lookup"


class IndexEmptyError(LexragError):
    code = "index_empty"


class DegenerateInputError(LexragError):
    code = "degenerate_input"


class RoutingError(LexragError):
    code = "routing_error"


class AggregationError(LexragError):
    code = "aggregation_error"


class GroundingError(LexragError):
    code = "grounding_required"


class BackendError(LexragError):
    code = "backend_unreachable"


class IllegalTransitionError(LexragError):
    code = "illegal_transition"


class AuthorizationError(LexragError):
    code = "role_forbidden"


class TemplateError(LexragError):
    code = "template_error"


class MappingError(LexragError):
    code = "mapping_error"


class ConfigurationError(LexragError):
    code = "configuration_error"


class UndefinedMetricError(LexragError):
    code = "undefined_metric"


class SnapshotVersionError(LexragError):
    code = "snapshot_version"


class SnapshotCorruptError(LexragError):
    code = "snapshot_corrupt"


#: Closed enumeration of every machine-readable code a 4xx/5xx response may carry.
ERROR_CODES = frozenset(
    cls.code
    for cls in [LexragError, *LexragError.__subclasses__()]
) | {"auth_missing", "auth_invalid"}
