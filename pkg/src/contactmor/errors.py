"""Exception types raised across the package."""


class ContactMorError(Exception):
    """Base class for all errors raised by contactmor."""


class NotPositiveDefinite(ContactMorError):
    """A matrix expected to be SPD failed the factorization check.

    Usually a modeling error, e.g. a mesh without Dirichlet constraints
    leaves rigid-body modes in the stiffness matrix.
    """


class DimensionMismatch(ContactMorError):
    pass


class InvalidTear(ContactMorError):
    pass


class DegenerateElement(ContactMorError):
    pass


class EmptyDirichlet(ContactMorError):
    pass


class ZeroSeed(ContactMorError):
    pass


class SingularSlaveBlock(ContactMorError):
    pass


class InfeasibleLcp(ContactMorError):
    pass


class SolverFailure(ContactMorError):
    """LCP failure during time stepping, tagged with the step where it happened."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time

    def __str__(self):
        base = super().__str__()
        if self.step is None:
            return base
        return f"{base} (step {self.step}, t={self.time:.6g})"


class ConfigError(ContactMorError):
    """Scenario file problem; carries the offending section/key when known."""

    def __init__(self, message, section=None, key=None, line=None):
        super().__init__(message)
        self.section = section
        self.key = key
        self.line = line

    def __str__(self):
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.section is not None:
            where.append(f"[{self.section}]" + (f" {self.key}" if self.key else ""))
        prefix = ", ".join(where)
        return f"{prefix}: {super().__str__()}" if prefix else super().__str__()
