"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model configuration or numerical set-up.

    ``path`` names the offending configuration field when known.
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ContractError(ValueError):
    """An input violates a documented precondition (e.g. non-Hermitian data)."""


class DomainError(ValueError):
    """Argument outside the domain of a map (e.g. ``w = 0`` for psi maps)."""


class SingularSystem(ArithmeticError):
    """Linear system is singular to working tolerance."""

    def __init__(self, message, rcond=0.0):
        super().__init__(message)
        self.rcond = rcond


class NearDirichletSpectrum(SingularSystem):
    """Spectral parameter lies within the exclusion radius of the Dirichlet spectrum."""

    def __init__(self, z, distance=0.0):
        super().__init__(f"z = {z} lies within the exclusion radius of the Dirichlet spectrum "
                         f"(distance {distance:.3e})")
        self.z = z
        self.distance = distance


class EigenvalueAt(SingularSystem):
    """``z`` is (numerically) an eigenvalue of the Robin Laplacian."""

    def __init__(self, z, rcond=0.0):
        super().__init__(f"z = {z} is an eigenvalue of the Robin Laplacian (rcond {rcond:.3e})",
                         rcond)
        self.z = z
