"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array arguments have incompatible or unexpected shapes."""


class DegenerateDistributionError(ValueError):
    """A softmax was requested over logits that are all minus infinity."""


class DegenerateAttentionError(DegenerateDistributionError):
    """Every grid prior of some proposal is zero, so no attention row exists."""

    def __init__(self, proposal_index: int):
        self.proposal_index = proposal_index
        super().__init__(
            f"proposal {proposal_index} has zero spatial prior on every grid; "
            "attention weights are undefined"
        )


class FixtureRejectedError(RuntimeError):
    """A random gradient-check fixture landed too close to a ReLU kink."""


class GradientProbeError(ArithmeticError):
    """A finite-difference probe produced a non-finite function value."""

    def __init__(self, coordinate: int, value: float):
        self.coordinate = coordinate
        super().__init__(
            f"non-finite value {value!r} while probing coordinate {coordinate}"
        )


class AnnotationError(ValueError):
    """An annotation file violates the schema or its integrity rules."""
