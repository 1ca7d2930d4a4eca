"""Uplink scheduling between a wired FIFO-buffered channel and a lossy,
budget-limited wireless channel, with a receding-horizon optimizer and
greedy / single-channel baselines."""

from .bnb import BnbConfig, BnbResult, branch_and_bound, exhaustive_search
from .exceptions import InfeasibleError, InfeasibleScenarioError, SizeLimitError
from .horizon import (
    DecisionMatrix,
    HorizonProblem,
    KktMultipliers,
    TerminalCost,
    gradient,
    in_terminal_set,
    is_feasible,
    objective,
    stage_reward,
    terminal_cost,
)
from .linkmodel import (
    BufferState,
    LinkParams,
    RadioParams,
    SensorSpec,
    TrafficTrace,
    avg_snr_db,
    bit_error_rate,
    buffer_step,
    calibrate_gain,
    queue_delay_s,
    success_prob,
)
from .policies import (
    PolicyKind,
    SchedulerParams,
    SchedulerState,
    StepRecord,
    greedy_step,
    mpc_step,
    recursive_feasibility_check,
    single_lte_step,
    single_plc_step,
)
from .relaxation import RelaxConfig, RelaxSolution, kkt_residual, solve_relaxation
from .simulate import (
    RunMetrics,
    Scenario,
    TrafficSpec,
    generate_traffic,
    loss_realization,
    run_simulation,
)

__version__ = "0.1.0"
