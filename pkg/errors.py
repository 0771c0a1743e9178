"""Exception types shared by the simulation modules."""


class D2ocError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(D2ocError, ValueError):
    """Scenario file could not be parsed or failed validation."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line


class InvalidFieldError(D2ocError, ValueError):
    """Density field is malformed or cannot be sampled/normalized."""


class InfeasibleError(D2ocError):
    """A transport or selection problem has no feasible solution."""


class ConditioningError(D2ocError):
    """Linear system too ill-conditioned (or singular) to solve reliably."""


class RunError(D2ocError):
    """Module error raised inside the step loop, with step/agent context."""

    def __init__(self, message, step=None, agent=None):
        super().__init__(f"step {step}, agent {agent}: {message}")
        self.step = step
        self.agent = agent
