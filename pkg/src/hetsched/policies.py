"""Scheduling policies: receding-horizon optimizer and the three baselines.

Each policy maps the current platform state and arrivals to one 0/1 decision
column (1 = wired, 0 = wireless).  The receding-horizon policy solves a
lookahead instance each step, applies only the first column, and re-solves
at the next step.  On joint infeasibility (neither mode admissible for a
sensor) every policy falls back to the wired channel, which never loses
data, and logs the knowingly breached delay bound; mid-run infeasibility is
therefore observable but never fatal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import horizon as hz
from .bnb import BnbConfig, branch_and_bound
from .exceptions import InfeasibleError
from .horizon import HorizonProblem, TerminalCost
from .linkmodel import (
    BufferState,
    BufferStepResult,
    LinkParams,
    SensorSpec,
    TrafficTrace,
    buffer_step,
    success_prob,
)
from .relaxation import RelaxConfig


class PolicyKind(str, Enum):
    MPC = "mpc"
    GREEDY = "greedy"
    SINGLE_PLC = "single_plc"
    SINGLE_LTE = "single_lte"


@dataclass(frozen=True)
class SchedulerParams:
    """Everything a policy needs besides the evolving state."""

    link: LinkParams
    sensors: tuple[SensorSpec, ...]
    terminal: TerminalCost
    horizon_T: int
    dt_s: float
    capacity_bits: float
    p_b: float
    relax_cfg: RelaxConfig = field(default_factory=RelaxConfig)
    bnb_cfg: BnbConfig = field(default_factory=BnbConfig)
    feas_tol: float = 1e-9

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)


@dataclass(frozen=True)
class SchedulerState:
    buffer: BufferState
    rb_consumed: float = 0.0
    step_k: int = 0
    violation_log: tuple[tuple[int, int, str], ...] = ()


@dataclass(frozen=True)
class StepRecord:
    """Per-step solver artifacts kept for the feasibility-recursion check."""

    problem: HorizonProblem
    decision: np.ndarray | None
    fallback: bool


class PolicyStep:
    """Decision column plus the state transition it induced."""

    def __init__(self, column, state, outcome, record=None, violations=()):
        self.column = column
        self.state = state
        self.outcome = outcome
        self.record = record
        self.violations = tuple(violations)


def _advance(
    state: SchedulerState,
    arrivals_row: np.ndarray,
    column: np.ndarray,
    params: SchedulerParams,
    violations,
) -> tuple[SchedulerState, BufferStepResult]:
    outcome = buffer_step(
        state.buffer, arrivals_row, column, params.link.plc_rate_bps, params.dt_s
    )
    rb_used = float(
        np.dot(arrivals_row.astype(float), 1.0 - column) / params.link.rb_rate_bps
    )
    new_state = SchedulerState(
        buffer=outcome.state,
        rb_consumed=state.rb_consumed + rb_used,
        step_k=state.step_k + 1,
        violation_log=state.violation_log + tuple(violations),
    )
    return new_state, outcome


def _plc_feasible(D: float, depth: float, sensor: SensorSpec, params) -> bool:
    return (D + depth) / params.link.plc_rate_bps <= sensor.delay_bound_s + params.feas_tol


def _wireless_feasible(
    D: float, sensor: SensorSpec, params, rb_available: float
) -> bool:
    if sensor.min_success_prob - success_prob(D, params.p_b) > params.feas_tol:
        return False
    return D / params.link.rb_rate_bps <= rb_available + params.feas_tol


def _greedy_column(state, arrivals_row, params):
    """Per-sensor immediate-reward choice; wired wins ties, wired fallback on
    joint infeasibility (logged)."""
    n = params.n_sensors
    column = np.ones(n)
    violations = []
    depth = state.buffer.depth_bits
    rb_available = params.link.rb_budget - state.rb_consumed
    for idx, sensor in enumerate(params.sensors):
        D = float(arrivals_row[idx])
        plc_ok = _plc_feasible(D, depth, sensor, params)
        lte_ok = _wireless_feasible(D, sensor, params, rb_available)
        reward_plc = D
        reward_lte = D * success_prob(D, params.p_b)
        if plc_ok and (reward_plc >= reward_lte or not lte_ok):
            column[idx] = 1.0
        elif lte_ok:
            column[idx] = 0.0
            rb_available -= D / params.link.rb_rate_bps
        else:
            column[idx] = 1.0
            violations.append((state.step_k, idx, "delay"))
    return column, violations


def greedy_step(
    state: SchedulerState, arrivals_row, params: SchedulerParams
) -> PolicyStep:
    arrivals_row = np.asarray(arrivals_row, dtype=np.int64)
    column, violations = _greedy_column(state, arrivals_row, params)
    new_state, outcome = _advance(state, arrivals_row, column, params, violations)
    return PolicyStep(column, new_state, outcome, violations=violations)


def build_horizon_problem(
    state: SchedulerState, lookahead: TrafficTrace, params: SchedulerParams
) -> HorizonProblem:
    return HorizonProblem(
        initial_depth_bits=state.buffer.depth_bits,
        window=lookahead,
        horizon_T=params.horizon_T,
        link=params.link,
        sensors=params.sensors,
        rb_remaining=max(0.0, params.link.rb_budget - state.rb_consumed),
        p_b=params.p_b,
        terminal=params.terminal,
        dt_s=params.dt_s,
        capacity_bits=params.capacity_bits,
    )


def mpc_step(
    state: SchedulerState, lookahead: TrafficTrace, params: SchedulerParams
) -> PolicyStep:
    """Solve the lookahead instance and apply its first decision column.

    The lookahead must have exactly the horizon length (trailing steps are
    zero-padded by the caller).  Infeasibility falls back to the greedy
    instantaneous rule and is logged, never raised.
    """
    if lookahead.n_steps != params.horizon_T:
        raise ValueError(
            f"lookahead has {lookahead.n_steps} columns, expected {params.horizon_T}"
        )
    arrivals_row = lookahead.arrivals_bits[:, 0]
    problem = build_horizon_problem(state, lookahead, params)
    try:
        result = branch_and_bound(problem, params.bnb_cfg, params.relax_cfg)
    except InfeasibleError:
        column, violations = _greedy_column(state, arrivals_row, params)
        new_state, outcome = _advance(state, arrivals_row, column, params, violations)
        record = StepRecord(problem=problem, decision=None, fallback=True)
        return PolicyStep(column, new_state, outcome, record, violations)
    column = result.x01.values[:, 0].copy()
    new_state, outcome = _advance(state, arrivals_row, column, params, ())
    record = StepRecord(problem=problem, decision=result.x01.values.copy(), fallback=False)
    return PolicyStep(column, new_state, outcome, record)


def single_plc_step(
    state: SchedulerState, arrivals_row, params: SchedulerParams
) -> PolicyStep:
    """Unconditional wired assignment; delay breaches are logged, not prevented."""
    arrivals_row = np.asarray(arrivals_row, dtype=np.int64)
    column = np.ones(params.n_sensors)
    violations = [
        (state.step_k, idx, "delay")
        for idx, sensor in enumerate(params.sensors)
        if not _plc_feasible(float(arrivals_row[idx]), state.buffer.depth_bits, sensor, params)
    ]
    new_state, outcome = _advance(state, arrivals_row, column, params, violations)
    return PolicyStep(column, new_state, outcome, violations=violations)


def single_lte_step(
    state: SchedulerState, arrivals_row, params: SchedulerParams
) -> PolicyStep:
    """Unconditional wireless assignment; reliability and budget breaches are
    logged, not prevented."""
    arrivals_row = np.asarray(arrivals_row, dtype=np.int64)
    column = np.zeros(params.n_sensors)
    violations = []
    rb_running = state.rb_consumed
    for idx, sensor in enumerate(params.sensors):
        D = float(arrivals_row[idx])
        if sensor.min_success_prob - success_prob(D, params.p_b) > params.feas_tol:
            violations.append((state.step_k, idx, "reliability"))
        rb_running += D / params.link.rb_rate_bps
        if rb_running > params.link.rb_budget + params.feas_tol:
            violations.append((state.step_k, idx, "rb_budget"))
    new_state, outcome = _advance(state, arrivals_row, column, params, violations)
    return PolicyStep(column, new_state, outcome, violations=violations)


def recursive_feasibility_check(
    trace: list[StepRecord], tol: float = 1e-9
) -> tuple[bool, int | None]:
    """Verify that each step's solution shifts into a feasible candidate for
    the next step.

    The candidate drops the applied first column, keeps the remaining ones,
    and appends an all-wired column (the terminal rule, which drains the
    buffer toward the terminal set).  Returns ``(True, None)`` when every
    consecutive pair passes, else ``(False, first_failing_index)``.  A
    fallback step breaks the premise and fails at its own index.
    """
    for k, rec in enumerate(trace):
        if rec.fallback or rec.decision is None:
            return False, k
    for k in range(len(trace) - 1):
        shifted = trace[k].decision[:, 1:]
        appended = np.ones((shifted.shape[0], 1))
        candidate = np.hstack([shifted, appended])
        report = hz.is_feasible(trace[k + 1].problem, candidate, tol)
        if not report.feasible:
            return False, k + 1
    return True, None
