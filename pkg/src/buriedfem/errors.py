"""Exception hierarchy shared by all modules."""


class BuriedFemError(Exception):
    """Base class for every error raised by the package."""


class CatalogError(BuriedFemError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParameterError(BuriedFemError, ValueError):
    pass


class RefinementError(BuriedFemError, ValueError):
    """The mesh resolution does not resolve a slit or a boundary patch."""


class ClassificationError(BuriedFemError, ValueError):
    pass


class MeshError(BuriedFemError, ValueError):
    pass


class InputError(BuriedFemError, ValueError):
    pass


class SingularityError(BuriedFemError, ValueError):
    """A linear map (or a piece of a piecewise map) is not invertible."""


class AlignmentError(BuriedFemError, ValueError):
    """Mesh cells straddle the pieces of a piecewise map."""


class DefinitenessError(BuriedFemError, ValueError):
    pass


class CoercivityError(BuriedFemError, ValueError):
    pass


class SolverError(BuriedFemError, RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class ResolutionError(BuriedFemError, ValueError):
    pass


class DomainError(BuriedFemError, ValueError):
    pass


class SchemaError(BuriedFemError, ValueError):
    pass


class PreconditionError(BuriedFemError, ValueError):
    pass


class GeometryError(BuriedFemError, ValueError):
    """Degenerate geometric input, such as parallel slit legs."""
