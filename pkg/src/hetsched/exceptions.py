"""Shared exception types."""


class InfeasibleError(Exception):
    """No assignment satisfies the constraint set.

    Carries the name of the most-violated constraint family when known.
    """

    def __init__(self, message: str, family: str | None = None):
        super().__init__(message)
        self.family = family


class SizeLimitError(Exception):
    """Problem too large for exhaustive enumeration."""


class InfeasibleScenarioError(Exception):
    """Scenario rejected before the run starts (no workable assignment at step 0)."""
