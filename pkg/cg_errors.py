"""
Exception hierarchy for the coarse-graining toolkit.

Everything raised by the library derives from CoarseGrainingError so the CLI
can map failures onto exit codes without catching unrelated exceptions.
"""


class CoarseGrainingError(Exception):
    pass


class EigenSolverError(CoarseGrainingError):
    """Symmetric eigensolver failed to converge"""

    def __init__(self, dim, reason=""):
        self.dim = dim
        msg = f"eigensolver did not converge for a {dim}x{dim} matrix"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class AsymmetryError(CoarseGrainingError, ValueError):
    pass


class SingularityError(CoarseGrainingError, ValueError):
    pass


class OrderViolationError(CoarseGrainingError, ValueError):
    """A matrix required to be SPD (or ordered) is not"""
    pass


class DimensionMismatchError(CoarseGrainingError, ValueError):
    pass


class RankDeficiencyError(CoarseGrainingError, ValueError):
    """Coarse-graining rows are linearly dependent"""

    def __init__(self, rank, expected):
        self.rank = rank
        self.expected = expected
        super().__init__(
            f"coarse-graining map has rank {rank} but {expected} rows; "
            f"remove redundant coarse-grained variables"
        )


class UnsupportedCaseError(CoarseGrainingError, ValueError):
    pass


class StabilityError(CoarseGrainingError, ValueError):
    """Explicit Euler-Maruyama step would be unstable"""

    def __init__(self, dt, max_stable_dt):
        self.dt = dt
        self.max_stable_dt = max_stable_dt
        super().__init__(
            f"dt={dt:g} violates the explicit-scheme stability limit; "
            f"use dt < {max_stable_dt:.6g}"
        )


class LagGridError(CoarseGrainingError, ValueError):
    pass


class ConfigError(CoarseGrainingError, ValueError):
    """Invalid experiment configuration, optionally tied to a source line"""

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class LinearAlgebraError(CoarseGrainingError):
    """A numpy or scipy linear algebra routine failed inside an experiment"""
    pass
