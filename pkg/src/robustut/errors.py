"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A problem description violates its documented invariants."""


class SolverFailure(RuntimeError):
    """An SDP or relaxation solve did not reach an Optimal status."""


class SamplingError(RuntimeError):
    """Rejection sampling could not produce the requested points."""
