"""Continuous relaxation solver for one horizon instance.

The relaxed problem lets every assignment entry range over [0, 1] and is
solved by an augmented-Lagrangian outer loop (delay, reliability, budget
and terminal-set families) around a projected-gradient inner loop with
Armijo backtracking and Barzilai-Borwein step seeding.  The box constraint
is handled by projection; its multipliers are recovered afterwards so the
full first-order system can be certified.

The objective is not concave for every parameter combination, so a
converged result certifies a first-order (KKT) point, not global
optimality; the branch-and-bound layer treats the value as a heuristic
bound and exhaustive enumeration arbitrates at test scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import horizon as hz
from .exceptions import InfeasibleError
from .horizon import DecisionMatrix, HorizonProblem, KktMultipliers


@dataclass(frozen=True)
class RelaxConfig:
    kkt_tol: float = 1e-6
    max_outer: int = 100
    max_inner: int = 500
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_cap: float = 1e8
    start_value: float = 0.5
    feasibility_tol: float = 1e-6


@dataclass(frozen=True)
class RelaxSolution:
    x_relax: DecisionMatrix
    z_relax: float
    multipliers: KktMultipliers
    kkt_residual: float
    iterations: int
    converged: bool
    merit_history: list[list[float]] = field(default_factory=list, repr=False)


def _project(xm, fixed_mask, fixed_values):
    out = np.clip(xm, 0.0, 1.0)
    if fixed_mask is not None:
        out[fixed_mask] = fixed_values[fixed_mask]
    return out


def _constraint_values(problem, xm):
    return (
        hz.delay_values(problem, xm),
        hz.reliability_values(problem, xm),
        hz.budget_value(problem, xm),
        hz.terminal_set_value(problem, xm),
    )


def _weighted_constraint_gradient(problem, xm, w_delay, w_rel, w_budget, w_term):
    """Gradient of sum_j w_j * h_j over the non-box families."""
    D = problem.window.arrivals_bits.astype(float)
    grad = np.zeros_like(xm)
    if np.any(w_delay != 0.0):
        grad += hz.delay_weighted_gradient(problem, xm, w_delay)
    if np.any(w_rel != 0.0):
        grad += w_rel * hz.reliability_grad_diag(problem, xm)
    if w_budget != 0.0:
        grad += w_budget * (-D / problem.link.rb_rate_bps)
    if w_term != 0.0:
        S = hz.depth_sensitivities(problem, xm)
        grad += w_term * problem.terminal.weight * S[-1]
    return grad


def _constraint_scales(problem, x0):
    """Per-constraint normalizers so every family has O(1) gradients.

    Keeps the penalty curvature comparable across families; multipliers of
    the scaled constraints are mapped back before reporting.
    """
    D = problem.window.arrivals_bits.astype(float)
    r = problem.link.plc_rate_bps
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else 0.0
    depths, _ = hz.propagate_depths(problem, x0)
    return {
        "delay": np.maximum(1e-9, (D + depths[:-1][None, :]) / r),
        "reliability": np.maximum(1e-9, D * abs(log_s)),
        "budget": max(1e-9, float(D.max(initial=0.0)) / problem.link.rb_rate_bps),
        "terminal": max(
            1e-9,
            problem.terminal.weight
            * float(np.abs(D - r * problem.dt_s).max(initial=0.0)),
        ),
    }


def _scaled_constraints(problem, xm, scales):
    h_del, h_rel, h_bud, h_term = _constraint_values(problem, xm)
    return (
        h_del / scales["delay"],
        h_rel / scales["reliability"],
        h_bud / scales["budget"],
        h_term / scales["terminal"],
    )


def _al_merit(problem, xm, lams, rho, scales, f_scale):
    """Augmented-Lagrangian value (to be maximized), in scaled units."""
    val = hz.objective(problem, xm) / f_scale
    for h, lam in zip(
        _scaled_constraints(problem, xm, scales),
        (lams["delay"], lams["reliability"], np.asarray(lams["budget"]),
         np.asarray(lams["terminal"])),
    ):
        mu = np.maximum(0.0, lam + rho * np.asarray(h))
        val -= float(np.sum((mu * mu - lam * lam) / (2.0 * rho)))
    return val


def _al_gradient(problem, xm, lams, rho, scales, f_scale):
    h_del, h_rel, h_bud, h_term = _scaled_constraints(problem, xm, scales)
    mu_del = np.maximum(0.0, lams["delay"] + rho * h_del) / scales["delay"]
    mu_rel = np.maximum(0.0, lams["reliability"] + rho * h_rel) / scales["reliability"]
    mu_bud = max(0.0, lams["budget"] + rho * h_bud) / scales["budget"]
    mu_term = max(0.0, lams["terminal"] + rho * h_term) / scales["terminal"]
    return hz.gradient(problem, xm) / f_scale - _weighted_constraint_gradient(
        problem, xm, mu_del, mu_rel, mu_bud, mu_term
    )


def _recover_box_multipliers(problem, xm, lams, fixed_mask):
    """Multipliers of the x <= 1 bound, from gradient balance at the bound."""
    s = hz.gradient(problem, xm) - _weighted_constraint_gradient(
        problem, xm, lams["delay"], lams["reliability"], lams["budget"],
        lams["terminal"],
    )
    at_upper = xm >= 1.0 - 1e-9
    lam_box = np.where(at_upper, np.maximum(s, 0.0), 0.0)
    if fixed_mask is not None:
        lam_box[fixed_mask] = 0.0
    return lam_box


def kkt_residual(
    problem: HorizonProblem,
    x,
    multipliers: KktMultipliers,
    fixed_mask: np.ndarray | None = None,
) -> float:
    """First-order optimality residual at (x, multipliers).

    Maximum over: the box-projected stationarity norm, the largest positive
    constraint value, the most negative multiplier, and the largest
    complementarity product.  Zero exactly at an exact KKT point.
    """
    xm = hz.as_matrix(x, problem)
    lam_box = np.asarray(multipliers.box, dtype=float)
    s = (
        hz.gradient(problem, xm)
        - _weighted_constraint_gradient(
            problem,
            xm,
            np.asarray(multipliers.delay, dtype=float),
            np.asarray(multipliers.reliability, dtype=float),
            float(multipliers.budget),
            float(multipliers.terminal),
        )
        - lam_box
    )
    # lower bound x >= 0 is handled by projection: at the bound only an
    # outward-pointing gradient counts as a violation.
    stat = np.where(xm > 0.0, np.abs(s), np.maximum(s, 0.0))
    if fixed_mask is not None:
        stat = np.where(fixed_mask, 0.0, stat)
    stationarity = float(stat.max()) if stat.size else 0.0

    h_del, h_rel, h_bud, h_term = _constraint_values(problem, xm)
    h_box = hz.box_values(xm)
    primal = max(
        float(h_del.max(initial=-np.inf)),
        float(h_rel.max(initial=-np.inf)),
        h_bud,
        h_term,
        float(h_box.max(initial=-np.inf)),
        0.0,
    )
    dual = max(
        0.0,
        -float(np.min(multipliers.delay, initial=np.inf)),
        -float(np.min(multipliers.reliability, initial=np.inf)),
        -float(multipliers.budget),
        -float(multipliers.terminal),
        -float(np.min(lam_box, initial=np.inf)),
    )
    comp = max(
        float(np.max(np.abs(multipliers.delay * h_del), initial=0.0)),
        float(np.max(np.abs(multipliers.reliability * h_rel), initial=0.0)),
        abs(multipliers.budget * h_bud),
        abs(multipliers.terminal * h_term),
        float(np.max(np.abs(lam_box * h_box), initial=0.0)),
    )
    return max(stationarity, primal, dual, comp)


def _probe_feasible(problem, fixed_mask, fixed_values, tol):
    n, t = problem.shape
    for fill in (1.0, 0.0, 0.5):
        cand = _project(np.full((n, t), fill), fixed_mask, fixed_values)
        if hz.is_feasible(problem, cand, tol).feasible:
            return cand
    return None


def _most_violated_family(problem, xm):
    h_del, h_rel, h_bud, h_term = _constraint_values(problem, xm)
    worst = {
        "delay": float(h_del.max(initial=-np.inf)),
        "reliability": float(h_rel.max(initial=-np.inf)),
        "rb_budget": h_bud,
        "terminal": h_term,
    }
    return max(worst, key=worst.get)


def solve_relaxation(
    problem: HorizonProblem,
    cfg: RelaxConfig | None = None,
    fixed_mask: np.ndarray | None = None,
    fixed_values: np.ndarray | None = None,
) -> RelaxSolution:
    """Solve the box relaxation and certify the result against the KKT system.

    ``fixed_mask``/``fixed_values`` pin a subset of entries to 0/1 (used by
    the branching search).  Raises ``InfeasibleError`` when no point in the
    box satisfies the constraints; an iteration-limited solve returns its
    best iterate with ``converged=False``.
    """
    cfg = cfg or RelaxConfig()
    n, t = problem.shape
    if fixed_mask is not None:
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        fixed_values = np.asarray(fixed_values, dtype=float)

    xm = _project(np.full((n, t), cfg.start_value), fixed_mask, fixed_values)
    scales = _constraint_scales(problem, xm)
    f_scale = max(1.0, float(np.abs(hz.gradient(problem, xm)).max(initial=0.0)))
    lams = {
        "delay": np.zeros((n, t)),
        "reliability": np.zeros((n, t)),
        "budget": 0.0,
        "terminal": 0.0,
    }
    rho = cfg.penalty0
    total_inner = 0
    merit_history: list[list[float]] = []
    prev_violation = np.inf
    converged = False
    residual = np.inf

    def true_multipliers(xc):
        """Map scaled-system multipliers back to the stated constraints."""
        true = {
            "delay": lams["delay"] * (f_scale / scales["delay"]),
            "reliability": lams["reliability"] * (f_scale / scales["reliability"]),
            "budget": lams["budget"] * (f_scale / scales["budget"]),
            "terminal": lams["terminal"] * (f_scale / scales["terminal"]),
        }
        lam_box = _recover_box_multipliers(problem, xc, true, fixed_mask)
        return KktMultipliers(
            delay=true["delay"],
            reliability=true["reliability"],
            budget=true["budget"],
            box=lam_box,
            terminal=true["terminal"],
        )

    def violation(xc):
        h_del, h_rel, h_bud, h_term = _scaled_constraints(problem, xc, scales)
        return max(
            float(h_del.max(initial=0.0)),
            float(h_rel.max(initial=0.0)),
            h_bud,
            h_term,
            0.0,
        )

    inner_tol = max(0.1 * cfg.kkt_tol / f_scale, 1e-13)
    for _outer in range(cfg.max_outer):
        merit = _al_merit(problem, xm, lams, rho, scales, f_scale)
        grad = _al_gradient(problem, xm, lams, rho, scales, f_scale)
        if fixed_mask is not None:
            grad[fixed_mask] = 0.0
        history = [merit]
        alpha = 1.0 / max(1.0, float(np.abs(grad).max()))
        x_prev, g_prev = None, None

        for _inner in range(cfg.max_inner):
            pg = xm - _project(xm + grad, fixed_mask, fixed_values)
            if float(np.abs(pg).max(initial=0.0)) <= inner_tol:
                break
            # Barzilai-Borwein seed for the ascent step
            if x_prev is not None:
                dx = xm - x_prev
                dg = grad - g_prev
                denom = float(np.sum(dx * dg))
                if denom < -1e-300:
                    alpha = min(max(-float(np.sum(dx * dx)) / denom, 1e-12), 1e8)
                else:
                    alpha = min(alpha * 2.0, 1e8)
            step = alpha
            accepted = False
            # merit comparisons are meaningless below float resolution, so
            # the sufficient-increase test carries an absolute noise slack
            noise = 64.0 * np.finfo(float).eps * max(abs(merit), 1.0)
            for _bt in range(60):
                cand = _project(xm + step * grad, fixed_mask, fixed_values)
                delta = cand - xm
                gain = float(np.sum(grad * delta))
                if gain <= 0.0:
                    break
                cand_merit = _al_merit(problem, cand, lams, rho, scales, f_scale)
                if cand_merit >= merit + 1e-4 * gain - noise:
                    x_prev, g_prev = xm, grad
                    xm, merit = cand, max(cand_merit, merit - noise)
                    grad = _al_gradient(problem, xm, lams, rho, scales, f_scale)
                    if fixed_mask is not None:
                        grad[fixed_mask] = 0.0
                    history.append(cand_merit)
                    accepted = True
                    break
                step *= 0.5
            total_inner += 1
            if not accepted:
                break
        merit_history.append(history)

        h_del, h_rel, h_bud, h_term = _scaled_constraints(problem, xm, scales)
        lams["delay"] = np.maximum(0.0, lams["delay"] + rho * h_del)
        lams["reliability"] = np.maximum(0.0, lams["reliability"] + rho * h_rel)
        lams["budget"] = max(0.0, lams["budget"] + rho * h_bud)
        lams["terminal"] = max(0.0, lams["terminal"] + rho * h_term)

        mults = true_multipliers(xm)
        residual = kkt_residual(problem, xm, mults, fixed_mask)
        if residual <= cfg.kkt_tol:
            converged = True
            break

        viol = violation(xm)
        # grow the penalty only while the violation both matters and stalls
        if viol > 0.01 * cfg.kkt_tol / f_scale and viol > 0.25 * prev_violation:
            rho = min(rho * cfg.penalty_growth, cfg.penalty_cap)
        prev_violation = viol

    mults = true_multipliers(xm)
    h_del, h_rel, h_bud, h_term = _constraint_values(problem, xm)
    final_violation = max(
        float(h_del.max(initial=0.0)),
        float(h_rel.max(initial=0.0)),
        h_bud,
        h_term,
        0.0,
    )
    if final_violation > cfg.feasibility_tol:
        probe = _probe_feasible(problem, fixed_mask, fixed_values, cfg.feasibility_tol)
        if probe is None:
            raise InfeasibleError(
                "no point in the box satisfies the constraints "
                f"(most violated: {_most_violated_family(problem, xm)})",
                family=_most_violated_family(problem, xm),
            )
        xm = probe
        converged = False
        mults = KktMultipliers.zeros((n, t))
        residual = kkt_residual(problem, xm, mults, fixed_mask)

    return RelaxSolution(
        x_relax=DecisionMatrix(xm.copy()),
        z_relax=hz.objective(problem, xm),
        multipliers=mults,
        kkt_residual=residual,
        iterations=total_inner,
        converged=converged,
        merit_history=merit_history,
    )
