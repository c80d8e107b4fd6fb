"""Exception types raised across the package."""


class GridBudgetExceeded(ValueError):
    """A requested grid would hold more points than the configured budget."""

    def __init__(self, n_points, budget):
        self.n_points = n_points
        self.budget = budget
        super().__init__(f"grid budget exceeded: {n_points} points > budget {budget}")


class ProjectionDidNotConverge(RuntimeError):
    def __init__(self, residual, cycles):
        self.residual = residual
        self.cycles = cycles
        super().__init__(
            f"projection did not converge after {cycles} cycles (residual {residual:.3e})"
        )


class NotNonnegative(ValueError):
    """Matrix passed to the invariant-probability solver has a negative entry."""


class OutcomeOutOfRange(ValueError):
    pass


class EmptyHistory(ValueError):
    pass


class PendingObservation(RuntimeError):
    """forecast() and observe() were not called alternately."""


class SeparationFailed(RuntimeError):
    """No mixed action keeps expected payoffs behind the supporting hyperplane."""

    def __init__(self, z, witness_y, value):
        self.z = z
        self.witness_y = witness_y
        self.value = value
        super().__init__(
            f"separation failed at z={z}: best achievable value {value:.3e} > 0 "
            f"against y={witness_y}"
        )


class NotApproachable(RuntimeError):
    """Raised with an excludability witness when the best-response search fails."""

    def __init__(self, witness):
        self.witness = witness
        super().__init__(
            f"target not approachable: y={witness.y} keeps every response at distance "
            f"{witness.distance:.6g} > threshold {witness.threshold:.6g}"
        )


class PreimageEmpty(RuntimeError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"preimage empty: flag residual {residual:.3e}")


class EstimatorUndefined(ValueError):
    pass


class AssumptionCheckFailed(RuntimeError):
    """The sampled best-response check of a BRGrid found a violation."""

    def __init__(self, message, sample):
        self.sample = sample
        super().__init__(f"grid constants too loose: {message}")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
