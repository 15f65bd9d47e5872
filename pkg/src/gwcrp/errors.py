"""Exception hierarchy.

``DataError`` and its subclasses signal problems with the user's input
(the CLI maps them to exit code 2); everything else is an internal failure.
"""


class DataError(ValueError):
    """Input data or configuration cannot be used as given."""


class EmptyPieceError(DataError):
    """A region has no observed events in some hazard piece."""

    def __init__(self, region, piece):
        self.region = region
        self.piece = piece
        super().__init__(
            f"region {region!r} has no events in hazard piece {piece}; "
            "the log-hazard MLE for that piece diverges"
        )


class RankDeficiencyError(DataError):
    """Observed information is singular at the optimum."""

    def __init__(self, region, detail=""):
        self.region = region
        msg = f"region {region!r}: observed information matrix is singular"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConvergenceError(DataError):
    """Newton iterations did not reach the gradient tolerance."""

    def __init__(self, region, detail=""):
        self.region = region
        msg = f"region {region!r}: Newton iterations did not converge"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
