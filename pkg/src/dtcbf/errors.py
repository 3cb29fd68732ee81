"""Exception types shared across the toolkit."""


class DTCBFError(Exception):
    """Base class for all toolkit errors."""


class DomainViolation(DTCBFError):
    """An operation was evaluated outside its mathematical domain
    (division by zero or by an interval containing zero, log of a
    non-positive value, sqrt of a negative value, tan across a pole)."""


class NonSmooth(DTCBFError):
    """A derivative was requested through a non-smooth operation
    (abs at or across its kink)."""


class DegenerateBox(DTCBFError):
    """A box with all zero widths cannot be bisected."""


class DegenerateEllipse(DTCBFError):
    """Quadratic-form coefficients do not describe a real ellipse."""


class ParseError(DTCBFError):
    """Formula text violates the grammar.  Carries 1-based position."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(DTCBFError):
    """A problem file violates the file schema."""

    def __init__(self, message: str, path: str = "<string>", line: int | None = None):
        where = path if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class DimensionMismatch(DTCBFError):
    """Vector/box dimensions disagree."""


class IterationLimit(DTCBFError):
    """A convex subproblem solver failed to reach its tolerance within
    its iteration allowance.  Callers treat the subdomain as
    inconclusive and split; no approval is ever issued from this."""


class BudgetExceeded(DTCBFError):
    """A branch-and-bound run hit its iteration or wall-clock budget.
    Carries partial statistics; no verdict is implied."""

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        self.stats = stats


class FilterInfeasible(DTCBFError):
    """The online safety filter found no admissible input satisfying the
    barrier constraint at some step."""

    def __init__(self, step: int, state):
        super().__init__(f"safety filter infeasible at step {step}, state {tuple(state)}")
        self.step = step
        self.state = tuple(state)
