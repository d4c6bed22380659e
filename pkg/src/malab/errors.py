"""Exception types shared across the package."""


class MalabError(Exception):
    """Base class for all package errors."""


class GeometryError(MalabError):
    """Invalid polygon or node-set geometry."""


class DegenerateGeometryError(GeometryError):
    """Input too degenerate to carry a hull (e.g. all points collinear)."""


class NonConvergenceError(MalabError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularJacobianError(MalabError):
    """Jacobian factorization failed beyond the regularization retry."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class EmptyCellError(MalabError):
    """A Laguerre cell vanished and damping retries were exhausted."""


class SectionError(MalabError):
    """Sublevel-set section is empty or not compactly contained."""


class ConfigError(MalabError):
    """Invalid experiment configuration or CLI input."""
