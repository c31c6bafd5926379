class MCPTError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(MCPTError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedConfigurationError(MCPTError, ValueError):
    """The laser configuration has no consistent rotating frame."""


class ConfigError(MCPTError, ValueError):
    """Malformed or schema-violating configuration input."""


class SolverError(MCPTError, RuntimeError):
    """A numerical routine failed or the model is ill-conditioned.

    ``diagnostics`` carries whatever the failing routine could report
    (residuals, ranks, eigenvalue gaps).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateExpansionError(SolverError):
    """The perturbative expansion is not fixed by the constraint set."""

    def __init__(self, message, rank_deficiency, diagnostics=None):
        super().__init__(message, diagnostics)
        self.rank_deficiency = rank_deficiency


class SearchFailure(MCPTError, RuntimeError):
    """The field-nulling search could not bracket the dip."""

    def __init__(self, message, scan_log=None):
        super().__init__(message)
        self.scan_log = list(scan_log or [])
