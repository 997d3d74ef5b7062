"""Exception types raised across the package."""


class ProbeError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ProbeError, ValueError):
    pass


class MalformedFileError(ProbeError):
    pass


class PoseParseError(ProbeError):
    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class EmptyCloudError(ProbeError):
    pass


class EmptyDescriptorError(ProbeError):
    """No point fell inside the polar grid."""


class DegenerateDescriptorError(ProbeError):
    """Descriptor whose height grid has zero Frobenius norm."""


class ShapeMismatchError(ProbeError, ValueError):
    pass


class EmptyUnionError(ProbeError):
    """Soft union of two occupancy maps is empty."""


class NoCandidateError(ProbeError):
    """Every retrieval candidate was excluded."""
