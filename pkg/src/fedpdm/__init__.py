"""Differentially private primal-dual federated learning simulator."""

from .errors import ConfigError, CorruptDataError
from .simulation import RunConfig, RunResult, run
from .workload import Dataset, Sample, WorkloadParams

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorruptDataError",
    "Dataset",
    "RunConfig",
    "RunResult",
    "Sample",
    "WorkloadParams",
    "run",
    "__version__",
]
