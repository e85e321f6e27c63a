"""Exception hierarchy shared by all modules."""


class HFError(Exception):
    """Base class for every error raised by hfconv."""


class DimensionError(HFError, ValueError):
    """Operands have incompatible shapes."""


class NotConvergedError(HFError, RuntimeError):
    """An inner iteration (eigensolver, purification, line search) ran out of budget."""


class ManifoldError(HFError, ValueError):
    """A matrix violates the density-matrix constraints beyond tolerance."""


class WellPosednessError(HFError, ValueError):
    """The aufbau frontier is degenerate: eigenvalues ``n_occ`` and ``n_occ + 1`` tie."""

    def __init__(self, lower, upper, n_occ):
        self.lower = float(lower)
        self.upper = float(upper)
        self.n_occ = n_occ
        super().__init__(
            f"degenerate frontier at n_occ={n_occ}: "
            f"eigenvalues {self.lower!r} and {self.upper!r} differ by {self.upper - self.lower:.3e}"
        )


class InsufficientDataError(HFError, ValueError):
    """Not enough usable points for a regression."""


class ParseError(HFError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
