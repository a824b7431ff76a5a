"""Exception hierarchy shared across gridtwin modules."""


class GridTwinError(Exception):
    """Base class for all errors raised by gridtwin."""


# grid_model
class ParseError(GridTwinError):
    pass


class ValidationError(GridTwinError):
    pass


class SingularNetwork(GridTwinError):
    pass


# opt_core
class NumericalFailure(GridTwinError):
    pass


class NoIncumbentWithinLimit(GridTwinError):
    pass


# market_clearing
class InconsistentCommitment(GridTwinError):
    pass


class InfeasibleFixing(GridTwinError):
    pass


# scenario_engine
class DegenerateColumn(GridTwinError):
    pass


class LengthError(GridTwinError):
    pass


class InfeasibleSpatial(GridTwinError):
    pass


class DimensionMismatch(GridTwinError):
    pass


# stochastic
class IterationLimit(GridTwinError):
    """Benders hit ``max_iters``; ``solution`` carries the incumbent and bound."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InternalError(GridTwinError):
    pass


class OrderingViolation(GridTwinError):
    pass


class EmptyInput(GridTwinError):
    pass


# risk_pipeline
class EmptyEnsemble(GridTwinError):
    pass


class SimulationError(GridTwinError):
    """A solver failure inside a day simulation, tagged with the interval."""

    def __init__(self, message, interval=None, stage=None):
        super().__init__(message)
        self.interval = interval
        self.stage = stage
