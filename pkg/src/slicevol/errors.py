"""Exception hierarchy.

Every error carries a stable ``code`` string so the CLI can map failures to
exit codes and so callers can match on the condition without parsing text.
"""


class SlicevolError(ValueError):
    code = "ERROR"


class ParseError(SlicevolError):
    code = "PARSE_ERROR"


class SchemaError(SlicevolError):
    code = "SCHEMA_ERROR"


class InteriorZeroError(SlicevolError):
    code = "INTERIOR_ZERO"


class TooFewSlicesError(SlicevolError):
    code = "TOO_FEW_SLICES"


class DomainError(SlicevolError):
    code = "DOMAIN_ERROR"


class DegenerateParamsError(SlicevolError):
    code = "DEGENERATE_PARAMS"


class InadmissibleConfigError(SlicevolError):
    code = "INADMISSIBLE_CONFIG"


class InadmissibleEdgeError(SlicevolError):
    code = "INADMISSIBLE_EDGE"


class DegenerateVarianceError(SlicevolError):
    code = "DEGENERATE_VARIANCE"


class NonPositiveMeanError(SlicevolError):
    code = "NONPOSITIVE_MEAN"


class EmptyCaseError(SlicevolError):
    code = "EMPTY_CASE"


class VersionMismatchError(SlicevolError):
    code = "VERSION_MISMATCH"
