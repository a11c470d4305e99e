"""Exception types raised across the package."""


class ExcitranError(Exception):
    """Base class for all errors raised by this package."""


class GraphFormatError(ExcitranError):
    """A Hamiltonian file failed to parse or violates an invariant."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        ctx = []
        if field is not None:
            ctx.append(f"field {field!r}")
        if line is not None:
            ctx.append(f"line {line}")
        super().__init__(message + (f" ({', '.join(ctx)})" if ctx else ""))


class ConfigError(ExcitranError):
    """A run configuration is invalid; `path` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class GeneratorNotInvertibleError(ExcitranError):
    """The vectorized generator is singular or numerically ill-conditioned."""


class StiffnessError(ExcitranError):
    """Adaptive integration underflowed the minimum step size."""

    def __init__(self, message, min_step):
        self.min_step = min_step
        super().__init__(f"{message} (smallest step reached: {min_step:.3e} ps)")


class HorizonError(ExcitranError):
    """Quadrature horizon cap reached before the trace tolerance was met."""

    def __init__(self, message, residual_trace):
        self.residual_trace = residual_trace
        super().__init__(f"{message} (residual trace: {residual_trace:.3e})")


class FitConvergenceError(ExcitranError):
    """Nonlinear fit failed to converge; `best` carries the best-so-far fit."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)
