"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid arguments or configuration (CLI exit code 2)."""


class OracleError(RuntimeError):
    """The reference solver could not certify an optimum (CLI exit code 3)."""


class DivergenceError(RuntimeError):
    """A PIAG run blew up; the step size is unstable for the instance."""


class StalenessError(RuntimeError):
    """A stored gradient became older than the declared bound K."""
