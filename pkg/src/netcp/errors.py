"""Exception hierarchy used across the package."""


class NetcpError(Exception):
    """Base class for all package errors."""


class ParameterError(NetcpError):
    """Invalid parameter or contract violation at a call site."""


class DataError(NetcpError):
    """Malformed or degenerate input data."""


class NumericError(NetcpError):
    """Numerical breakdown (overflow/underflow made a quantity meaningless)."""


class ResourceError(NetcpError):
    """Requested computation exceeds the configured feasibility budget."""
