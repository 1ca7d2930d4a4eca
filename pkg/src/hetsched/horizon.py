"""One finite-horizon scheduling instance.

The decision matrix ``x`` has one entry per (sensor, step): 1 routes that
sample over the wired channel, 0 over the wireless channel, and the
continuous relaxation admits any value in between.  The objective is the
summed per-step reward (wired bits count in full, wireless bits at their
expected delivery) plus a terminal credit for bits left in the buffer at the
horizon end, which proxies the deliverable tail.

Constraint families, all written as ``value <= 0``:

* delay       -- wired queueing plus transmission time within the bound
* reliability -- wireless delivery probability above the sensor's floor
* rb_budget   -- wireless bits within the remaining resource-block budget
* box         -- ``x <= 1`` (the lower bound ``x >= 0`` is the box domain)
* terminal    -- terminal buffer state inside the terminal set

Buffer predictions follow the step recursion clamped to ``[0, capacity]``;
gradients account for the clamp through per-step interior indicators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linkmodel import LinkParams, SensorSpec, TrafficTrace


@dataclass(frozen=True)
class TerminalCost:
    """Linear terminal credit E(m) = weight * m and terminal set {E(m) <= alpha}."""

    weight: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    def cost(self, depth_bits: float) -> float:
        return self.weight * depth_bits

    def in_set(self, depth_bits: float) -> bool:
        return self.cost(depth_bits) <= self.alpha


def terminal_cost(terminal: TerminalCost, depth_bits: float) -> float:
    return terminal.cost(depth_bits)


def in_terminal_set(terminal: TerminalCost, depth_bits: float) -> bool:
    return terminal.in_set(depth_bits)


@dataclass(frozen=True)
class HorizonProblem:
    """State, window and budgets of one lookahead optimization."""

    initial_depth_bits: float
    window: TrafficTrace
    horizon_T: int
    link: LinkParams
    sensors: tuple[SensorSpec, ...]
    rb_remaining: float
    p_b: float
    terminal: TerminalCost
    dt_s: float = 1.0
    capacity_bits: float = float("inf")

    def __post_init__(self):
        if self.horizon_T < 1:
            raise ValueError(f"horizon_T must be >= 1, got {self.horizon_T}")
        if self.window.n_steps != self.horizon_T:
            raise ValueError(
                f"window has {self.window.n_steps} columns, expected {self.horizon_T}"
            )
        if self.window.n_sensors != len(self.sensors):
            raise ValueError(
                f"window has {self.window.n_sensors} sensor rows for "
                f"{len(self.sensors)} sensors"
            )
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_sensors, self.horizon_T)


@dataclass(frozen=True)
class DecisionMatrix:
    """Assignment matrix with entries in [0, 1]; integral when all are 0/1."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("decision entries must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    @property
    def integrality_flag(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


@dataclass(frozen=True)
class KktMultipliers:
    """Nonnegative multipliers, one per instantiated constraint.

    ``terminal`` covers the terminal-set constraint when it is active; it is
    zero whenever the terminal set is slack.
    """

    delay: np.ndarray
    reliability: np.ndarray
    budget: float
    box: np.ndarray
    terminal: float = 0.0

    def __post_init__(self):
        for name in ("delay", "reliability", "box"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size and arr.min() < 0:
                raise ValueError(f"{name} multipliers must be >= 0")
            object.__setattr__(self, name, arr)
        if self.budget < 0 or self.terminal < 0:
            raise ValueError("budget/terminal multipliers must be >= 0")

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "KktMultipliers":
        return cls(
            delay=np.zeros(shape),
            reliability=np.zeros(shape),
            budget=0.0,
            box=np.zeros(shape),
            terminal=0.0,
        )


class FeasibilityReport(NamedTuple):
    feasible: bool
    violations: list[tuple[str, int | None, int | None, float]]


def as_matrix(x, problem: HorizonProblem | None = None) -> np.ndarray:
    """Accept a DecisionMatrix or array-like and return a float matrix."""
    vals = x.values if isinstance(x, DecisionMatrix) else np.asarray(x, dtype=float)
    if problem is not None and vals.shape != problem.shape:
        raise ValueError(f"decision shape {vals.shape} != problem shape {problem.shape}")
    return vals


def stage_reward(D_bits: float, x: float, p_b: float) -> float:
    """Expected delivered bits of one sample split between the two channels."""
    if D_bits == 0:
        return 0.0
    u = D_bits * (1.0 - x)
    surv = math.exp(u * math.log1p(-p_b)) if p_b < 1.0 else (1.0 if u == 0 else 0.0)
    return D_bits * x + D_bits * (1.0 - x) * surv


def _stage_rewards(problem: HorizonProblem, xm: np.ndarray) -> np.ndarray:
    D = problem.window.arrivals_bits.astype(float)
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else -math.inf
    u = D * (1.0 - xm)
    surv = np.exp(u * log_s)
    return D * xm + D * (1.0 - xm) * surv


def propagate_depths(problem: HorizonProblem, xm: np.ndarray):
    """Predicted buffer depths over the horizon.

    Returns ``(depths, interior)`` where ``depths`` has T+1 entries starting
    at the initial depth and ``interior[j]`` flags whether step j's raw
    update stayed strictly inside ``(0, capacity)`` (the clamp was inactive).
    """
    D = problem.window.arrivals_bits
    r_dt = problem.link.plc_rate_bps * problem.dt_s
    depths = np.empty(problem.horizon_T + 1)
    interior = np.empty(problem.horizon_T, dtype=bool)
    depths[0] = problem.initial_depth_bits
    for j in range(problem.horizon_T):
        raw = depths[j] + float(np.dot(D[:, j], xm[:, j])) - r_dt * float(
            np.sum(xm[:, j])
        )
        interior[j] = 0.0 < raw < problem.capacity_bits
        depths[j + 1] = min(max(raw, 0.0), problem.capacity_bits)
    return depths, interior


def depth_sensitivities(problem: HorizonProblem, xm: np.ndarray) -> np.ndarray:
    """d depths[j] / d x[n,i] for every horizon step, clamp-aware.

    Returns an array S of shape (T+1, N, T); S[j] is zero for columns
    i >= j.  Where a clamp was active the chain through that step is cut.
    """
    n, t = problem.shape
    D = problem.window.arrivals_bits.astype(float)
    r_dt = problem.link.plc_rate_bps * problem.dt_s
    _, interior = propagate_depths(problem, xm)
    S = np.zeros((t + 1, n, t))
    for j in range(t):
        if interior[j]:
            S[j + 1] = S[j]
            S[j + 1, :, j] += D[:, j] - r_dt
        # clamped step: depth pinned at a bound, dependence on x cut
    return S


def objective(problem: HorizonProblem, x) -> float:
    """Summed stage rewards plus the terminal credit on the predicted depth."""
    xm = as_matrix(x, problem)
    depths, _ = propagate_depths(problem, xm)
    return float(np.sum(_stage_rewards(problem, xm))) + problem.terminal.cost(
        depths[-1]
    )


def gradient(problem: HorizonProblem, x) -> np.ndarray:
    """Analytic d objective / d x, matching central finite differences away
    from clamp boundaries."""
    xm = as_matrix(x, problem)
    D = problem.window.arrivals_bits.astype(float)
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else -math.inf
    u = D * (1.0 - xm)
    surv = np.exp(u * log_s)
    grad = D - D * surv * (1.0 + u * log_s)
    if problem.p_b == 0.0:
        grad = np.zeros_like(D)
    S = depth_sensitivities(problem, xm)
    grad = grad + problem.terminal.weight * S[-1]
    return grad


def delay_values(problem: HorizonProblem, x) -> np.ndarray:
    """Delay-constraint values, one per (sensor, step).

    The wired path time (queueing at entry plus own transmission) applies in
    proportion to the wired share of the sample, so a fully wireless sample
    is unconstrained by delay.
    """
    xm = as_matrix(x, problem)
    D = problem.window.arrivals_bits.astype(float)
    depths, _ = propagate_depths(problem, xm)
    r = problem.link.plc_rate_bps
    bounds = np.array([s.delay_bound_s for s in problem.sensors])
    return xm * (D + depths[:-1][None, :]) / r - bounds[:, None]


def reliability_values(problem: HorizonProblem, x) -> np.ndarray:
    """Reliability-constraint values: required success rate minus achieved."""
    xm = as_matrix(x, problem)
    D = problem.window.arrivals_bits.astype(float)
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else -math.inf
    surv = np.exp(D * (1.0 - xm) * log_s)
    floors = np.array([s.min_success_prob for s in problem.sensors])
    return floors[:, None] - surv


def budget_value(problem: HorizonProblem, x) -> float:
    """Resource-block consumption of the horizon minus the remaining budget."""
    xm = as_matrix(x, problem)
    D = problem.window.arrivals_bits.astype(float)
    return float(np.sum(D * (1.0 - xm)) / problem.link.rb_rate_bps) - problem.rb_remaining


def box_values(x) -> np.ndarray:
    """Upper-bound constraint values x - 1."""
    return as_matrix(x) - 1.0


def terminal_set_value(problem: HorizonProblem, x) -> float:
    """Terminal-set constraint value E(terminal depth) - alpha."""
    xm = as_matrix(x, problem)
    depths, _ = propagate_depths(problem, xm)
    return problem.terminal.cost(depths[-1]) - problem.terminal.alpha


def constraint_delay(problem: HorizonProblem, x, n: int, i: int) -> float:
    return float(delay_values(problem, x)[n, i])


def constraint_reliability(problem: HorizonProblem, x, n: int, i: int) -> float:
    return float(reliability_values(problem, x)[n, i])


def constraint_rb_budget(problem: HorizonProblem, x) -> float:
    return budget_value(problem, x)


def constraint_box(x, n: int, i: int) -> float:
    return float(box_values(x)[n, i])


def reliability_grad_diag(problem: HorizonProblem, xm: np.ndarray) -> np.ndarray:
    """d reliability_values[n,i] / d x[n,i] (the only nonzero partials)."""
    D = problem.window.arrivals_bits.astype(float)
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else -math.inf
    surv = np.exp(D * (1.0 - xm) * log_s)
    return D * log_s * surv


def delay_weighted_gradient(
    problem: HorizonProblem, xm: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Gradient of sum_{n,i} weights[n,i] * delay_values[n,i]."""
    D = problem.window.arrivals_bits.astype(float)
    depths, _ = propagate_depths(problem, xm)
    r = problem.link.plc_rate_bps
    grad = weights * (D + depths[:-1][None, :]) / r
    S = depth_sensitivities(problem, xm)
    for i in range(problem.horizon_T):
        coeff = float(np.dot(weights[:, i], xm[:, i])) / r
        if coeff != 0.0:
            grad = grad + coeff * S[i]
    return grad


def is_feasible(problem: HorizonProblem, x, tol: float = 1e-9) -> FeasibilityReport:
    """Check every instantiated constraint; values <= tol are feasible."""
    xm = as_matrix(x, problem)
    violations: list[tuple[str, int | None, int | None, float]] = []
    for family, values in (
        ("delay", delay_values(problem, xm)),
        ("reliability", reliability_values(problem, xm)),
        ("box", box_values(xm)),
    ):
        for n, i in zip(*np.nonzero(values > tol)):
            violations.append((family, int(n), int(i), float(values[n, i])))
    h3 = budget_value(problem, xm)
    if h3 > tol:
        violations.append(("rb_budget", None, None, h3))
    h5 = terminal_set_value(problem, xm)
    if h5 > tol:
        violations.append(("terminal", None, None, h5))
    return FeasibilityReport(not violations, violations)
