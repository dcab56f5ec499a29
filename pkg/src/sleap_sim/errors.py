"""Error types raised across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ParseError(SimError):
    """Malformed or unreadable description file."""


class MorphologyError(SimError):
    """Hand description violates structural requirements."""


class JointLimitError(SimError):
    """Joint value outside its declared limits."""


class NonFiniteInput(SimError):
    """NaN or infinity where a finite number is required."""


class NonFiniteCommand(NonFiniteInput):
    """Joint or valve command containing NaN or infinity."""


class IkNoConvergence(SimError):
    """Inverse kinematics failed to reach the target within tolerance."""

    def __init__(self, msg, best_q=None, pos_err=None, rot_err=None):
        super().__init__(msg)
        self.best_q = best_q
        self.pos_err = pos_err
        self.rot_err = rot_err


class NotSealed(SimError):
    """Seal-dependent operation on an unsealed unit."""


class DegenerateNormal(SimError):
    """Zero-length normal where a direction is required."""


class SolverFailure(SimError):
    """Numerical solver failed; distinct from a well-posed infeasible answer."""


class Unplannable(SimError):
    """No regrasp plan exists for the requested reorientation."""


class PlanAborted(SimError):
    """Regrasp plan halted mid-execution."""

    def __init__(self, reason: str, trace=None):
        super().__init__(f"plan aborted: {reason}")
        self.reason = reason
        self.trace = trace if trace is not None else []


class MalformedFrame(SimError):
    """Wire line that does not decode to a known message."""


class ProtocolViolation(SimError):
    """Message breaking session rules (role, ordering, handshake)."""


class EmptyTrialSet(SimError):
    """Metric requested over zero trials."""


class MixedTasks(SimError):
    """Metric requested over trials from different tasks."""


class NoSuccessfulTrials(SimError):
    """Average-time metric requested with no successful trial."""


class SceneError(SimError):
    """Scene description invalid."""


class BindError(SimError):
    """Server could not bind its listen address."""


class DivergenceDetected(SimError):
    """Replay produced a state that differs from the logged one."""

    def __init__(self, tick: int, detail: str = ""):
        super().__init__(f"replay diverged at tick {tick}" + (f": {detail}" if detail else ""))
        self.tick = tick
        self.detail = detail


class Unexecutable(SimError):
    """Task defined only by metadata; it cannot be run, only scored."""
