"""Exception types shared across the library.

Every error carries a short machine-readable ``code`` plus a human message;
the CLI maps codes onto exit status.
"""


class UrnlabError(Exception):
    """Base class for all library errors."""

    code = "error"


class InvalidArgumentError(UrnlabError):
    """Input violates a documented precondition."""

    code = "invalid-argument"


class SpectrumError(UrnlabError):
    """An eigenvalue violates a stability/positivity requirement.

    The offending eigenvalue is recorded on ``eigenvalue``.
    """

    code = "spectrum-error"

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NonConvergenceError(UrnlabError):
    """An iterative kernel failed to reach its tolerance."""

    code = "non-convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RegimeError(UrnlabError):
    """Operation called outside the spectral regime it is defined for."""

    code = "regime-error"


class ChainBasisRequiredError(UrnlabError):
    """A defective eigenvalue needs a caller-supplied chain basis."""

    code = "needs-chain-basis"


class InvalidBasisError(UrnlabError):
    """Supplied chain basis does not bring the matrix to block-canonical form."""

    code = "invalid-basis"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AssumptionViolationError(UrnlabError):
    """Model violates a structural assumption (eigenstructure, positivity)."""

    code = "assumption-violation"


class DivergenceError(UrnlabError):
    """A trajectory produced a non-finite state.

    ``first_bad_index`` is the earliest step at which it happened.
    """

    code = "divergence"

    def __init__(self, message, first_bad_index=None):
        super().__init__(message)
        self.first_bad_index = first_bad_index


class SingularityError(UrnlabError):
    """Vector field evaluated at a singular point."""

    code = "singularity"


class IntegrationAbortError(UrnlabError):
    """ODE integration left its admissible region; diagnostic attached."""

    code = "integration-abort"

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class RefinementError(UrnlabError):
    """Quadrature tolerance unreachable on the given interval."""

    code = "refinement"


class ConfigError(UrnlabError):
    """Config document failed validation; ``path`` is a JSON pointer."""

    code = "config-error"

    def __init__(self, message, path="", expected=None, got=None):
        super().__init__(message)
        self.path = path
        self.expected = expected
        self.got = got
