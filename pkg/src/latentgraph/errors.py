"""Exception hierarchy shared across the package."""


class LatentGraphError(Exception):
    """Base class for all package errors."""


class ConfigError(LatentGraphError):
    """Invalid configuration: shapes, hyperparameters, topology specs."""


class DataError(LatentGraphError):
    """Invalid data: out-of-range labels, zero vectors, empty inputs."""


class FormatError(LatentGraphError):
    """Malformed feature file or manifest on disk."""


class GraphError(LatentGraphError):
    """Structurally invalid graph (should be unreachable via public constructors)."""


class MetricError(LatentGraphError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""


class TrainingError(LatentGraphError):
    """Training aborted: non-finite loss or gradients."""
