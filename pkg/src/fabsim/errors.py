"""Exception hierarchy shared by all fabsim modules."""


class FabsimError(Exception):
    """Base class for every error raised by fabsim."""


class ConfigurationError(FabsimError, ValueError):
    """Invalid problem, model or scenario configuration."""


class JointLimitError(FabsimError, ValueError):
    def __init__(self, joint, value, lower, upper):
        self.joint = joint
        self.value = value
        super().__init__(
            f"joint {joint} = {value:.6g} rad outside limits [{lower:.6g}, {upper:.6g}]"
        )


class Unreachable(FabsimError):
    """Inverse kinematics did not converge; ``residual`` holds (position, rotation) error."""

    def __init__(self, message, residual=(float("inf"), float("inf")), q=None):
        self.residual = residual
        self.q = q
        super().__init__(message)


class SolverError(FabsimError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class PlanningFailure(FabsimError):
    """Sampling planner exhausted its budget without a valid path."""

    def __init__(self, message, best_cost=float("inf"), max_penetration=float("inf"), path=None):
        self.best_cost = best_cost
        self.max_penetration = max_penetration
        self.path = path
        super().__init__(f"{message} (best cost {best_cost:.4g}, max penetration {max_penetration:.4g} m)")


class PlanningError(FabsimError):
    pass


class NoFixError(FabsimError):
    pass


class DegenerateGeometryError(FabsimError):
    pass


class InfeasibleAdaptationError(FabsimError):
    pass


class WeldReachError(FabsimError):
    pass


class MeasurementUnavailable(FabsimError):
    pass


class CompilationError(FabsimError):
    pass
