"""Search for the best 0/1 assignment of a horizon instance.

Two-child best-first branch and bound using the continuous relaxation as
the bounding oracle.  Restricting a subproblem cannot improve its bound, so
child bounds are clamped to the parent's; nodes whose relaxation fails to
converge inherit the parent bound rather than trusting a possibly
under-estimated local value.  The epsilon parameter steers which child is
explored first (an entry below epsilon explores its 0-child first), not
which assignments are reachable, so the proven optimum is insensitive to
it.  A literal single-dive variant fixing one variable per step is kept
behind a flag for fidelity experiments.

``exhaustive_search`` enumerates every 0/1 assignment and is the
ground-truth arbiter at test scale.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import horizon as hz
from .exceptions import InfeasibleError, SizeLimitError
from .horizon import DecisionMatrix, HorizonProblem
from .relaxation import RelaxConfig, solve_relaxation

EXHAUSTIVE_LIMIT = 20


@dataclass(frozen=True)
class BnbConfig:
    epsilon: float = 0.5
    node_limit: int = 100_000
    gap_tol: float = 1e-6
    snap_tol: float = 1e-6
    feas_tol: float = 1e-9
    literal_dive: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.node_limit < 1:
            raise ValueError("node_limit must be >= 1")
        if self.gap_tol < 0:
            raise ValueError("gap_tol must be >= 0")


@dataclass(frozen=True)
class BnbNode:
    """One subproblem: a partial 0/1 pinning and its relaxation bound."""

    fixed: tuple[tuple[int, int, int], ...]
    bound: float
    depth: int


@dataclass(frozen=True)
class BnbResult:
    x01: DecisionMatrix
    z01: float
    nodes_explored: int
    proven_optimal: bool
    gap: float


def _snap_integral(xm: np.ndarray, snap_tol: float) -> np.ndarray | None:
    """Snap entries within snap_tol of 0/1; None if any entry is fractional."""
    near0 = np.abs(xm) <= snap_tol
    near1 = np.abs(xm - 1.0) <= snap_tol
    if not np.all(near0 | near1):
        return None
    return np.where(near1, 1.0, 0.0)


def _pick_branch_var(xm: np.ndarray, free_mask: np.ndarray, snap_tol: float):
    """Most-fractional free entry, ties broken by lowest (n, i) row-major."""
    frac = np.abs(xm - 0.5)
    frac = np.where(free_mask, frac, np.inf)
    frac = np.where((xm <= snap_tol) | (xm >= 1.0 - snap_tol), np.inf, frac)
    flat = int(np.argmin(frac))
    if not np.isfinite(frac.flat[flat]):
        return None
    return np.unravel_index(flat, xm.shape)


def branch_and_bound(
    problem: HorizonProblem,
    cfg: BnbConfig | None = None,
    relax_cfg: RelaxConfig | None = None,
) -> BnbResult:
    """Best 0/1 assignment found by relax-and-branch search.

    Raises ``InfeasibleError`` when every node fathoms infeasible.  Hitting
    the node limit returns the incumbent with ``proven_optimal=False``.
    """
    cfg = cfg or BnbConfig()
    relax_cfg = relax_cfg or RelaxConfig()
    if cfg.literal_dive:
        return _literal_dive(problem, cfg, relax_cfg)
    shape = problem.shape

    def solve_node(fixed):
        mask = np.zeros(shape, dtype=bool)
        vals = np.zeros(shape)
        for n, i, v in fixed:
            mask[n, i] = True
            vals[n, i] = float(v)
        return solve_relaxation(problem, relax_cfg, mask, vals), mask

    root_sol, root_mask = solve_node(())
    nodes_explored = 1
    incumbent_x = None
    incumbent_z = -math.inf
    root_bound = root_sol.z_relax

    snapped = _snap_integral(root_sol.x_relax.values, cfg.snap_tol)
    if snapped is not None and hz.is_feasible(problem, snapped, cfg.feas_tol).feasible:
        z = hz.objective(problem, snapped)
        return BnbResult(
            x01=DecisionMatrix(snapped),
            z01=z,
            nodes_explored=1,
            proven_optimal=True,
            gap=max(0.0, root_bound - z),
        )

    seq = itertools.count()
    # heap of (-bound, order, fixed, bound, relax_x)
    heap = [(-root_bound, next(seq), (), root_bound, root_sol.x_relax.values)]
    node_limited = False

    while heap:
        if nodes_explored >= cfg.node_limit:
            node_limited = True
            break
        neg_bound, _, fixed, bound, relax_x = heapq.heappop(heap)
        if bound <= incumbent_z + cfg.gap_tol:
            continue  # cannot beat the incumbent: cut the branch
        free_mask = np.ones(shape, dtype=bool)
        for n, i, _v in fixed:
            free_mask[n, i] = False
        branch = _pick_branch_var(relax_x, free_mask, cfg.snap_tol)
        if branch is None:
            continue  # integral but unusable solution: dead end
        bn, bi = int(branch[0]), int(branch[1])
        frac_value = relax_x[bn, bi]
        children = [0, 1] if frac_value < cfg.epsilon else [1, 0]
        for v in children:
            child_fixed = fixed + ((bn, bi, v),)
            try:
                child_sol, child_mask = solve_node(child_fixed)
            except InfeasibleError:
                nodes_explored += 1
                continue
            nodes_explored += 1
            child_bound = child_sol.z_relax if child_sol.converged else bound
            child_bound = min(child_bound, bound)
            snapped = _snap_integral(child_sol.x_relax.values, cfg.snap_tol)
            if snapped is not None:
                if hz.is_feasible(problem, snapped, cfg.feas_tol).feasible:
                    z = hz.objective(problem, snapped)
                    if z > incumbent_z:
                        incumbent_z = z
                        incumbent_x = snapped
                continue  # integral relaxation solves the subtree
            if child_bound > incumbent_z + cfg.gap_tol:
                heapq.heappush(
                    heap,
                    (-child_bound, next(seq), child_fixed, child_bound,
                     child_sol.x_relax.values),
                )

    if incumbent_x is None:
        raise InfeasibleError("no integral feasible assignment exists")

    open_bounds = [item[3] for item in heap]
    upper = max([incumbent_z] + open_bounds)
    gap = max(0.0, upper - incumbent_z)
    proven = (not node_limited) and (not heap or gap <= cfg.gap_tol)
    return BnbResult(
        x01=DecisionMatrix(incumbent_x),
        z01=incumbent_z,
        nodes_explored=nodes_explored,
        proven_optimal=proven,
        gap=gap,
    )


def _literal_dive(problem, cfg, relax_cfg):
    """Single-path variant: fix one fractional entry per step per the
    epsilon rule and re-solve, never exploring the sibling branch."""
    shape = problem.shape
    mask = np.zeros(shape, dtype=bool)
    vals = np.zeros(shape)
    nodes = 0
    upper = math.inf
    incumbent_x = None
    incumbent_z = -math.inf
    while True:
        try:
            sol = solve_relaxation(problem, relax_cfg, mask, vals)
        except InfeasibleError:
            break
        nodes += 1
        upper = min(upper, sol.z_relax) if nodes > 1 else sol.z_relax
        snapped = _snap_integral(sol.x_relax.values, cfg.snap_tol)
        if snapped is not None:
            if hz.is_feasible(problem, snapped, cfg.feas_tol).feasible:
                z = hz.objective(problem, snapped)
                if z > incumbent_z:
                    incumbent_z, incumbent_x = z, snapped
            break
        branch = _pick_branch_var(sol.x_relax.values, ~mask, cfg.snap_tol)
        if branch is None:
            break
        bn, bi = int(branch[0]), int(branch[1])
        mask[bn, bi] = True
        vals[bn, bi] = 0.0 if sol.x_relax.values[bn, bi] < cfg.epsilon else 1.0
        if nodes >= cfg.node_limit:
            break
    if incumbent_x is None:
        raise InfeasibleError("single-dive search found no integral feasible assignment")
    proven = nodes == 1  # only a root-integral solve certifies optimality here
    return BnbResult(
        x01=DecisionMatrix(incumbent_x),
        z01=incumbent_z,
        nodes_explored=nodes,
        proven_optimal=proven,
        gap=max(0.0, upper - incumbent_z),
    )


def exhaustive_search(
    problem: HorizonProblem, feas_tol: float = 1e-9
) -> tuple[DecisionMatrix, float]:
    """Exact maximum over all 0/1 assignments by enumeration.

    Ties are broken toward the lexicographically smallest assignment in
    row-major order.  Limited to N*T <= 20 variables.
    """
    n, t = problem.shape
    k = n * t
    if k > EXHAUSTIVE_LIMIT:
        raise SizeLimitError(
            f"{n}x{t} = {k} variables exceeds the enumeration limit "
            f"({EXHAUSTIVE_LIMIT})"
        )
    count = 1 << k
    codes = np.arange(count, dtype=np.int64)
    # bit for flat index f is the (k-1-f)-th bit, so ascending code order is
    # lexicographic order over row-major entries
    shifts = (k - 1 - np.arange(k, dtype=np.int64))
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(float)
    X = bits.reshape(count, n, t)

    D = problem.window.arrivals_bits.astype(float)
    r_dt = problem.link.plc_rate_bps * problem.dt_s
    r = problem.link.plc_rate_bps
    log_s = math.log1p(-problem.p_b) if problem.p_b < 1.0 else -math.inf
    surv0 = np.exp(D * log_s)  # survival probability of a fully wireless sample
    reward1 = D
    reward0 = D * surv0
    stage = np.einsum("knt,nt->k", X, reward1) + np.einsum(
        "knt,nt->k", 1.0 - X, reward0
    )

    bounds = np.array([s.delay_bound_s for s in problem.sensors])
    floors = np.array([s.min_success_prob for s in problem.sensors])
    rel_ok0 = (floors[:, None] - surv0) <= feas_tol  # wireless feasible per entry

    feasible = np.ones(count, dtype=bool)
    depth = np.full(count, float(problem.initial_depth_bits))
    for j in range(t):
        xj = X[:, :, j]
        delay = xj * (D[:, j][None, :] + depth[:, None]) / r - bounds[None, :]
        feasible &= np.all(delay <= feas_tol, axis=1)
        feasible &= np.all((xj == 1.0) | rel_ok0[:, j][None, :], axis=1)
        raw = depth + xj @ D[:, j] - r_dt * xj.sum(axis=1)
        depth = np.clip(raw, 0.0, problem.capacity_bits)
    wireless_bits = np.einsum("knt,nt->k", 1.0 - X, D)
    feasible &= wireless_bits / problem.link.rb_rate_bps - problem.rb_remaining <= feas_tol
    term = problem.terminal.weight * depth
    feasible &= term - problem.terminal.alpha <= feas_tol

    z = stage + term
    if not feasible.any():
        raise InfeasibleError("no integral assignment satisfies the constraints")
    z_masked = np.where(feasible, z, -np.inf)
    best = int(np.argmax(z_masked))  # first max in lexicographic order
    return DecisionMatrix(X[best]), float(z[best])
