"""Scenario construction, seeded traffic, loss realization and full runs.

A run drives one policy over the whole trace and collects per-step metric
series.  Bits are conserved exactly: everything offered is either delivered
(wired drain past the initial backlog, or wireless survival), lost on the
wireless channel, dropped as buffer overflow, or still buffered at the end.
Bits present in the buffer before the run starts drain first (FIFO) and are
excluded from throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbConfig
from .exceptions import InfeasibleScenarioError
from .horizon import TerminalCost
from .linkmodel import (
    BufferState,
    LinkParams,
    SensorSpec,
    TrafficTrace,
    bit_error_rate,
    success_prob,
)
from .policies import (
    PolicyKind,
    SchedulerParams,
    SchedulerState,
    StepRecord,
    greedy_step,
    mpc_step,
    single_lte_step,
    single_plc_step,
)
from .relaxation import RelaxConfig

LOSS_MODES = ("expected", "monte_carlo")
DISTRIBUTIONS = ("constant", "uniform")


@dataclass(frozen=True)
class TrafficSpec:
    """Shape of the arrival process: mean rate per sensor plus spread."""

    mean_rate_bytes_per_s: float
    distribution: str = "constant"
    spread: float = 0.5
    n_sensors: int = 3
    duration_steps: int = 100
    dt_s: float = 1.0

    def __post_init__(self):
        if self.mean_rate_bytes_per_s < 0:
            raise ValueError("mean rate must be >= 0")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if not 0.0 <= self.spread <= 1.0:
            raise ValueError("spread must lie in [0, 1]")
        if self.duration_steps < 1 or self.n_sensors < 1:
            raise ValueError("need at least one sensor and one step")


@dataclass(frozen=True)
class Scenario:
    sensors: tuple[SensorSpec, ...]
    link: LinkParams
    traffic: TrafficSpec
    duration_steps: int
    dt_s: float
    seed: int
    loss_mode: str
    initial_depth_bits: float
    capacity_bits: float
    horizon_T: int
    terminal: TerminalCost
    relax_cfg: RelaxConfig = field(default_factory=RelaxConfig)
    bnb_cfg: BnbConfig = field(default_factory=BnbConfig)

    def __post_init__(self):
        if self.duration_steps < 1:
            raise ValueError("duration_steps must be >= 1")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if not 0 <= self.initial_depth_bits <= self.capacity_bits:
            raise ValueError("initial depth must lie in [0, capacity]")
        object.__setattr__(self, "sensors", tuple(self.sensors))


def generate_traffic(spec: TrafficSpec, seed: int) -> TrafficTrace:
    """Seeded arrival matrix in bits; constant mode is exact, uniform mode
    draws rates from mean*(1 +/- spread)."""
    bits_mean = spec.mean_rate_bytes_per_s * 8.0 * spec.dt_s
    shape = (spec.n_sensors, spec.duration_steps)
    if spec.distribution == "constant":
        arrivals = np.full(shape, int(round(bits_mean)), dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        lo = bits_mean * (1.0 - spec.spread)
        hi = bits_mean * (1.0 + spec.spread)
        arrivals = np.rint(rng.uniform(lo, hi, size=shape)).astype(np.int64)
        arrivals = np.maximum(arrivals, 0)
    return TrafficTrace(arrivals)


def loss_realization(size_bits: float, p_b: float, mode: str, rng) -> float:
    """Bits delivered by one wireless transmission.

    Expected mode applies the whole-packet survival probability as an
    expected value; monte_carlo draws a single all-or-nothing Bernoulli.
    """
    if mode not in LOSS_MODES:
        raise ValueError(f"mode must be one of {LOSS_MODES}")
    if size_bits == 0:
        return 0.0
    p_ok = success_prob(size_bits, p_b)
    if mode == "expected":
        return size_bits * p_ok
    return float(size_bits) if rng.random() < p_ok else 0.0


@dataclass
class RunMetrics:
    """Per-step series and end-of-run accounting for one (scenario, policy)."""

    policy: str
    seed: int
    mean_rate_bytes_per_s: float
    throughput_cum_bits: np.ndarray
    buffer_depth_bits: np.ndarray
    packet_loss_rate: np.ndarray
    rb_consumed: np.ndarray
    decisions: np.ndarray
    violations_per_step: np.ndarray
    violations: list[tuple[int, int, str]]
    offered_bits: int
    wireless_offered_bits: int
    wireless_delivered_bits: float
    drained_bits_total: float
    overflow_bits: float
    initial_depth_bits: float
    final_depth_bits: float
    mpc_trace: list[StepRecord] | None = None

    @property
    def duration_steps(self) -> int:
        return len(self.throughput_cum_bits)

    @property
    def final_throughput_bits(self) -> float:
        return float(self.throughput_cum_bits[-1])

    @property
    def final_loss_rate(self) -> float:
        return float(self.packet_loss_rate[-1])

    @property
    def buffer_std(self) -> float:
        return float(np.std(self.buffer_depth_bits))

    @property
    def wireless_lost_bits(self) -> float:
        return self.wireless_offered_bits - self.wireless_delivered_bits

    @property
    def plc_delivered_offered_bits(self) -> float:
        """Offered bits drained over the wire (initial backlog drains first)."""
        return max(0.0, self.drained_bits_total - self.initial_depth_bits)

    @property
    def buffered_offered_bits(self) -> float:
        remaining_initial = max(
            0.0, self.initial_depth_bits - self.drained_bits_total
        )
        return self.final_depth_bits - remaining_initial

    def conservation_residual(self) -> float:
        """offered - (delivered + lost + buffered + overflow); exactly 0."""
        delivered = self.wireless_delivered_bits + self.plc_delivered_offered_bits
        lost = self.wireless_lost_bits + self.overflow_bits
        return self.offered_bits - (delivered + lost + self.buffered_offered_bits)


def scheduler_params(scenario: Scenario) -> SchedulerParams:
    return SchedulerParams(
        link=scenario.link,
        sensors=scenario.sensors,
        terminal=scenario.terminal,
        horizon_T=scenario.horizon_T,
        dt_s=scenario.dt_s,
        capacity_bits=scenario.capacity_bits,
        p_b=bit_error_rate(scenario.link.radio),
        relax_cfg=scenario.relax_cfg,
        bnb_cfg=scenario.bnb_cfg,
    )


def validate_scenario(scenario: Scenario) -> None:
    """Reject scenarios with no workable first-step assignment.

    Every sensor must admit at least one mode at step 0, and the sensors
    that cannot use the wire must jointly fit the wireless budget.
    """
    params = scheduler_params(scenario)
    traffic = generate_traffic(scenario.traffic, scenario.seed)
    depth = scenario.initial_depth_bits
    r = scenario.link.plc_rate_bps
    forced_wireless_rbs = 0.0
    for idx, sensor in enumerate(scenario.sensors):
        D = float(traffic.arrivals_bits[idx, 0])
        plc_ok = (D + depth) / r <= sensor.delay_bound_s
        lte_ok = (
            success_prob(D, params.p_b) >= sensor.min_success_prob
            and D / scenario.link.rb_rate_bps <= scenario.link.rb_budget
        )
        if not plc_ok and not lte_ok:
            raise InfeasibleScenarioError(
                f"sensor {idx}: neither channel satisfies its requirements at step 0"
            )
        if not plc_ok:
            forced_wireless_rbs += D / scenario.link.rb_rate_bps
    if forced_wireless_rbs > scenario.link.rb_budget:
        raise InfeasibleScenarioError(
            "sensors excluded from the wire exceed the wireless budget at step 0"
        )


def run_simulation(
    scenario: Scenario, policy: PolicyKind | str, keep_trace: bool = False
) -> RunMetrics:
    """Run one policy to completion and collect the metric series.

    Deterministic for a fixed (scenario, policy) in expected loss mode and
    for a fixed seed in monte_carlo mode.
    """
    policy = PolicyKind(policy)
    validate_scenario(scenario)
    params = scheduler_params(scenario)
    traffic = generate_traffic(scenario.traffic, scenario.seed)
    n, steps = traffic.n_sensors, scenario.duration_steps
    loss_rng = np.random.default_rng([scenario.seed, 0xACCE55])

    state = SchedulerState(
        buffer=BufferState(scenario.initial_depth_bits, scenario.capacity_bits)
    )
    throughput = np.zeros(steps)
    depth_series = np.zeros(steps)
    loss_series = np.zeros(steps)
    rb_series = np.zeros(steps)
    decisions = np.zeros((steps, n), dtype=np.int64)
    violations_per_step = np.zeros(steps, dtype=np.int64)
    all_violations: list[tuple[int, int, str]] = []
    trace: list[StepRecord] = []

    wl_offered = 0
    wl_delivered = 0.0
    drained_total = 0.0
    overflow_total = 0.0

    for i in range(steps):
        arrivals = traffic.arrivals_bits[:, i]
        if policy is PolicyKind.MPC:
            window = traffic.window(i, scenario.horizon_T)
            step = mpc_step(state, window, params)
            if step.record is not None:
                trace.append(step.record)
        elif policy is PolicyKind.GREEDY:
            step = greedy_step(state, arrivals, params)
        elif policy is PolicyKind.SINGLE_PLC:
            step = single_plc_step(state, arrivals, params)
        else:
            step = single_lte_step(state, arrivals, params)

        state = step.state
        drained_total += step.outcome.drained_bits
        overflow_total += step.outcome.overflow_bits
        for idx in range(n):
            if step.column[idx] == 0.0 and arrivals[idx] > 0:
                wl_offered += int(arrivals[idx])
                wl_delivered += loss_realization(
                    float(arrivals[idx]), params.p_b, scenario.loss_mode, loss_rng
                )

        plc_delivered = max(0.0, drained_total - scenario.initial_depth_bits)
        throughput[i] = wl_delivered + plc_delivered
        depth_series[i] = state.buffer.depth_bits
        loss_series[i] = (
            (wl_offered - wl_delivered) / wl_offered if wl_offered > 0 else 0.0
        )
        rb_series[i] = state.rb_consumed
        decisions[i] = np.rint(step.column).astype(np.int64)
        violations_per_step[i] = len(step.violations)
        all_violations.extend(step.violations)

    return RunMetrics(
        policy=policy.value,
        seed=scenario.seed,
        mean_rate_bytes_per_s=scenario.traffic.mean_rate_bytes_per_s,
        throughput_cum_bits=throughput,
        buffer_depth_bits=depth_series,
        packet_loss_rate=loss_series,
        rb_consumed=rb_series,
        decisions=decisions,
        violations_per_step=violations_per_step,
        violations=all_violations,
        offered_bits=int(traffic.arrivals_bits.sum()),
        wireless_offered_bits=wl_offered,
        wireless_delivered_bits=wl_delivered,
        drained_bits_total=drained_total,
        overflow_bits=overflow_total,
        initial_depth_bits=scenario.initial_depth_bits,
        final_depth_bits=state.buffer.depth_bits,
        mpc_trace=trace if (keep_trace and policy is PolicyKind.MPC) else None,
    )
