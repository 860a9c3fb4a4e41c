from typing import Any, Optional


class ExsparseError(Exception):
    pass


class MalformedSpec(ExsparseError):
    """`key` names the offending problem field when one is to blame."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.key = key


class ProblemFileError(MalformedSpec):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}", key=key)
        self.message = message


class QuadratureFailure(ExsparseError):
    pass


class OutOfDomain(ExsparseError):
    pass


class DuplicateAtoms(ExsparseError):
    pass


class JumpPointQuery(ExsparseError):
    pass


class MaxItersExceeded(ExsparseError):
    """Raised when an iterative method hits its cap; `best` holds the best iterate."""

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class NonSaturatedAtoms(ExsparseError):
    pass


class NumericalRankAmbiguity(ExsparseError):
    pass


class Infeasible(ExsparseError):
    pass


class ScaleGuard(ExsparseError):
    pass


class UnknownDemo(ExsparseError):
    pass
