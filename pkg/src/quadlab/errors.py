"""Exception hierarchy.

``SingularityError`` marks numerical singularities (poles, vanishing
denominators, chart breakdown); the CLI maps it to its own exit code.
"""


class QuadlabError(Exception):
    pass


class DomainError(QuadlabError, ValueError):
    pass


class SingularityError(QuadlabError, ArithmeticError):
    pass


class GenerationError(QuadlabError):
    pass


class DivergenceError(QuadlabError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InconsistencyError(QuadlabError):
    pass


class BranchError(QuadlabError):
    pass


class ConfigError(QuadlabError):
    pass


class DegeneracyError(SingularityError):
    pass


class CommutationError(BranchError):
    pass
