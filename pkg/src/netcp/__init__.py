"""netcp: asynchronous multivariate change-point detection with a latent
directed lead-lag graph, fitted by blocked particle Gibbs."""

from ._kernels import BACKEND_NAME
from .errors import DataError, NetcpError, NumericError, ParameterError, ResourceError

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "NetcpError",
    "ParameterError",
    "DataError",
    "NumericError",
    "ResourceError",
    "__version__",
]
