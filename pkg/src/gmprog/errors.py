"""Exception hierarchy shared by every stage of the pipeline."""


class GmProgError(Exception):
    """Base class for all errors raised by this package."""


# -- mixtures ---------------------------------------------------------------

class DimensionMismatch(GmProgError, ValueError):
    pass


class NegativeWeight(GmProgError, ValueError):
    pass


class WeightSumError(GmProgError, ValueError):
    pass


class NotPositiveSemidefinite(GmProgError, ValueError):
    pass


class EmptyKeepSet(GmProgError, ValueError):
    pass


class IndexOutOfRange(GmProgError, IndexError):
    pass


class NameCollision(GmProgError, ValueError):
    pass


# -- moment kernels ---------------------------------------------------------

class UnsupportedBox(GmProgError, ValueError):
    pass


class DegenerateTruncationAxis(GmProgError, ValueError):
    pass


class ZeroCoefficients(GmProgError, ValueError):
    pass


# -- frontend ---------------------------------------------------------------

class SourceError(GmProgError):
    """An error tied to a location in program source text."""

    def __init__(self, message, line=None, col=None, filename=None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename

    def format(self, filename=None):
        name = filename or self.filename or "<input>"
        if self.line is None:
            return f"{name}: {self.message}"
        return f"{name}:{self.line}:{self.col}: {self.message}"

    def __str__(self):
        return self.format()


class ProgramSyntaxError(SourceError):
    pass


class UnknownIdentifier(SourceError):
    pass


class UnsupportedDistribution(SourceError):
    pass


class UnsupportedExpression(SourceError):
    pass


class NonConstantBound(SourceError):
    pass


class MalformedBranch(SourceError):
    pass


class InvalidCfg(GmProgError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


# -- engine -----------------------------------------------------------------

class AllMassZero(GmProgError):
    pass


class InfeasibleProgram(GmProgError):
    pass


class ComponentBudgetExceeded(GmProgError):
    pass


# -- oracles ----------------------------------------------------------------

class NotDiscrete(GmProgError):
    pass


class ZeroEvidence(GmProgError):
    pass
