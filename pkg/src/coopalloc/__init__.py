"""Cooperative time allocation for D2D-connected devices: window solver,
receding-horizon controllers, baselines, channel models, and a simulation
engine."""

from .channel import ChannelConfig, constant_trace, load_trace, realize_trace, sample_bernoulli_trace
from .controller import (
    AVERAGE,
    HOLD_LAST,
    ORACLE,
    ControllerConfig,
    TraceBundle,
    aact_distributed_step,
    aact_step,
    estimate,
)
from .baselines import initial_copies, no_cooperation_step, sequential_cooperation_step
from .engine import (
    MetricsSummary,
    SimulationResult,
    make_policy,
    metrics,
    run_simulation,
    update_completion,
)
from .model import (
    AllocationDecision,
    AppSpec,
    DeviceSpec,
    EnergyModel,
    SlotState,
    SystemSpec,
    Trace,
    Violation,
    battery_step,
    resource_demand,
    validate_allocation,
)
from .solver import Solution, brute_force_oracle, project_feasible, solve, waterfill
from .window import (
    UtilitySpec,
    WindowProblem,
    build_window_problem,
    gradient,
    is_feasible,
    objective,
    zero_point,
)

__version__ = "0.1.0"
