"""Randomized verification suites arbitrated by independent oracles.

The instance generator draws small horizon problems whose buffer trajectory
stays strictly inside (0, capacity) for every assignment in the box, so the
objective is smooth everywhere, the per-entry reward is concave (small
error-probability-times-size products), and the all-wired assignment is
feasible by construction.  On this family the relaxation bound is valid and
the branching search must reproduce the exhaustive enumeration exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import horizon as hz
from .bnb import BnbConfig, branch_and_bound, exhaustive_search
from .exceptions import InfeasibleError
from .horizon import HorizonProblem, TerminalCost
from .linkmodel import LinkParams, RadioParams, SensorSpec, TrafficTrace
from .relaxation import RelaxConfig, solve_relaxation

_SUITE_RADIO = RadioParams(
    tx_power_db=20.0, gain_db=40.0, noise_db=1.0, ref_distance_m=1.0,
    distance_m=100.0, pathloss_exp=2.0, snr_threshold_db=11.5, sigma_db=2.0,
)


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)

    def record(self, index: int, ok: bool, detail: str = ""):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append((index, detail))

    @property
    def all_passed(self) -> bool:
        return self.failed == 0

    def summary(self) -> str:
        line = f"{self.name}: {self.passed} passed, {self.failed} failed"
        if self.failures:
            idx, detail = self.failures[0]
            line += f" (first failure: seed {idx}: {detail})"
        return line


def make_problem(rng: np.random.Generator, n_sensors: int = 3, horizon: int = 4) -> HorizonProblem:
    """One random, feasible, smooth-regime horizon instance."""
    D = rng.integers(200, 1500, size=(n_sensors, horizon))
    p_b = float(rng.uniform(1e-4, 6e-4))
    r_plc = float(rng.uniform(500.0, 4000.0))
    rb_rate = float(rng.uniform(50.0, 400.0))
    m0 = float(rng.uniform(2e4, 5e4))
    capacity = 4e5  # depth excursions stay far from both clamps
    weight = float(rng.uniform(0.2, 1.0))
    terminal = TerminalCost(weight=weight, alpha=weight * capacity)

    # remaining budget: a random fraction of the all-wireless consumption,
    # so the budget constraint often binds but never blocks the all-wired point
    total_rb = float(D.sum()) / rb_rate
    rb_remaining = total_rb * float(rng.uniform(0.1, 0.9))

    # delay bounds from the all-wired trajectory, with margin: the all-wired
    # assignment is always feasible, other assignments may bind
    depth = m0
    max_depth = m0
    for j in range(horizon):
        depth = depth + float(D[:, j].sum()) - r_plc * n_sensors
        depth = min(max(depth, 0.0), capacity)
        max_depth = max(max_depth, depth)
    bounds = (max_depth + D.max(axis=1)) / r_plc * rng.uniform(1.05, 1.6, size=n_sensors)

    # a subset of sensors carries a reliability floor that blocks wireless
    # for their larger samples
    blocked = rng.random(n_sensors) < 0.4
    ref = np.exp(np.log1p(-p_b) * rng.uniform(0.4, 1.2, size=n_sensors) * D.mean())
    floors = np.where(blocked, ref, 0.0)

    sensors = tuple(
        SensorSpec(id=i, delay_bound_s=float(bounds[i]), min_success_prob=float(floors[i]))
        for i in range(n_sensors)
    )
    link = LinkParams(
        plc_rate_bps=r_plc, rb_rate_bps=rb_rate, rb_budget=rb_remaining,
        radio=_SUITE_RADIO,
    )
    return HorizonProblem(
        initial_depth_bits=m0,
        window=TrafficTrace(D),
        horizon_T=horizon,
        link=link,
        sensors=sensors,
        rb_remaining=rb_remaining,
        p_b=p_b,
        terminal=terminal,
        dt_s=1.0,
        capacity_bits=capacity,
    )


def run_bnb_oracle_suite(
    instances: int = 200,
    n_sensors: int = 3,
    horizon: int = 4,
    base_seed: int = 7,
    rel_tol: float = 1e-9,
    objective_fn=None,
) -> SuiteResult:
    """Branch-and-bound versus exhaustive enumeration on seeded instances.

    ``objective_fn`` re-evaluates the search's answer (defaults to the real
    objective); passing a perturbed double makes the suite fail, which is the
    negative control.
    """
    objective_fn = objective_fn or hz.objective
    result = SuiteResult("bnb-vs-exhaustive")
    bnb_cfg = BnbConfig()
    relax_cfg = RelaxConfig()
    for k in range(instances):
        rng = np.random.default_rng([base_seed, k])
        problem = make_problem(rng, n_sensors, horizon)
        try:
            _, z_true = exhaustive_search(problem)
        except InfeasibleError:
            try:
                branch_and_bound(problem, bnb_cfg, relax_cfg)
            except InfeasibleError:
                result.record(k, True)
            else:
                result.record(k, False, "search found a solution on an infeasible instance")
            continue
        try:
            res = branch_and_bound(problem, bnb_cfg, relax_cfg)
        except InfeasibleError:
            result.record(k, False, "search reported infeasible on a feasible instance")
            continue
        z_claimed = objective_fn(problem, res.x01.values)
        scale = max(1.0, abs(z_true))
        ok = (
            res.proven_optimal
            and abs(z_claimed - z_true) <= rel_tol * scale
            and abs(res.z01 - z_true) <= rel_tol * scale
        )
        detail = (
            f"z01={res.z01!r} vs exhaustive {z_true!r}, "
            f"proven_optimal={res.proven_optimal}"
        )
        result.record(k, ok, detail)
    return result


def run_relaxation_bound_suite(
    instances: int = 200,
    n_sensors: int = 3,
    horizon: int = 4,
    base_seed: int = 7,
    slack: float = 1e-6,
) -> SuiteResult:
    """Relaxation value upper-bounds the best integral value."""
    result = SuiteResult("relaxation-bound")
    for k in range(instances):
        rng = np.random.default_rng([base_seed, k])
        problem = make_problem(rng, n_sensors, horizon)
        try:
            _, z_true = exhaustive_search(problem)
        except InfeasibleError:
            result.record(k, True)
            continue
        sol = solve_relaxation(problem)
        ok = sol.z_relax + slack >= z_true
        result.record(k, ok, f"z_relax={sol.z_relax!r} < z01={z_true!r}")
    return result


def run_kkt_suite(
    instances: int = 100,
    n_sensors: int = 3,
    horizon: int = 4,
    base_seed: int = 11,
    tol: float = 1e-6,
) -> SuiteResult:
    """Relaxation solves converge with a certified first-order residual."""
    result = SuiteResult("kkt-certification")
    for k in range(instances):
        rng = np.random.default_rng([base_seed, k])
        problem = make_problem(rng, n_sensors, horizon)
        sol = solve_relaxation(problem)
        ok = sol.converged and sol.kkt_residual <= tol
        result.record(
            k, ok, f"converged={sol.converged}, residual={sol.kkt_residual!r}"
        )
    return result


def fd_gradient(problem: HorizonProblem, xm: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the objective, entry by entry."""
    out = np.zeros_like(xm)
    for n in range(xm.shape[0]):
        for i in range(xm.shape[1]):
            hi = xm.copy()
            lo = xm.copy()
            hi[n, i] += step
            lo[n, i] -= step
            out[n, i] = (hz.objective(problem, hi) - hz.objective(problem, lo)) / (
                2.0 * step
            )
    return out


def run_gradient_suite(
    instances: int = 100,
    n_sensors: int = 3,
    horizon: int = 4,
    base_seed: int = 13,
    rel_tol: float = 1e-5,
    gradient_fn=None,
) -> SuiteResult:
    """Analytic gradient versus central finite differences at random interior
    points."""
    gradient_fn = gradient_fn or hz.gradient
    result = SuiteResult("gradient-vs-finite-difference")
    for k in range(instances):
        rng = np.random.default_rng([base_seed, k])
        problem = make_problem(rng, n_sensors, horizon)
        xm = rng.uniform(0.05, 0.95, size=problem.shape)
        analytic = gradient_fn(problem, xm)
        numeric = fd_gradient(problem, xm)
        err = float(np.max(np.abs(analytic - numeric)))
        scale = max(1.0, float(np.max(np.abs(analytic))))
        ok = err / scale < rel_tol
        result.record(k, ok, f"relative error {err / scale!r}")
    return result
