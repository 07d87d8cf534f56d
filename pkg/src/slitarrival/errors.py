"""Exception hierarchy. The CLI maps ConfigError to exit code 2 and
NumericalDiagnostic to exit code 3."""


class SlitArrivalError(Exception):
    """Base class."""

    code = "error"

    def record(self):
        """Machine-readable description."""
        return {"error": type(self).__name__, "code": self.code, "message": str(self)}


class ConfigError(SlitArrivalError, ValueError):
    code = "config"

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = (", ".join(where) + ": ") if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line

    def record(self):
        rec = super().record()
        rec["field"] = self.field
        rec["line"] = self.line
        return rec


class NumericalDiagnostic(SlitArrivalError, RuntimeError):
    code = "numerical"


class WindowTooSmall(NumericalDiagnostic):
    code = "window_too_small"


class EmptySupport(NumericalDiagnostic):
    code = "empty_support"


class QuadratureWindow(NumericalDiagnostic):
    code = "quadrature_window"


class ZeroMass(NumericalDiagnostic):
    code = "zero_mass"


class UnderSampled(NumericalDiagnostic):
    code = "under_sampled"


class StabilityError(NumericalDiagnostic):
    code = "stability"


class LeakageError(NumericalDiagnostic):
    code = "leakage"


class ResourceGuard(NumericalDiagnostic):
    code = "resource_guard"
