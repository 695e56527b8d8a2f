# metrics.py
# Exact optimal transport and the (lax) bisimulation metric fixed points.
#
#   kantorovich     -- exact earth mover's distance between two finite distributions.
#                      POT's network simplex does the work; its duals certify the answer.
#   kantorovich_lp  -- the same quantity from a generic HiGHS LP (oracle and fallback)
#   bisim_metric    -- d(s_i, s_j) = max_a  c_r |R(s_i,a) - R(s_j,a)| + c_t K_d(P(.|s_i,a), P(.|s_j,a))
#   lax_bisim_metric-- d((s_i,a_i),(s_j,a_j)) = c_r |R(s_i,a_i) - R(s_j,a_j)| + c_t K_dS(P(.|s_i,a_i), P(.|s_j,a_j))
#                      where d_S(s, t) is the symmetric Hausdorff distance between
#                      the action sets {(s, .)} and {(t, .)} under the current pair metric.
#
# Both metrics are computed by iterating the operator from d = 0. Every iterate
# is a pseudometric and the sequence increases monotonically to the fixed point.

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import ot
from scipy.optimize import linprog

from src.guardrails import InfeasibleMarginals, NoConvergence, check_probability_vector
from src.mdp_core import DEFAULT_TOL, FiniteMdp

logger = logging.getLogger(__name__)

MARGINAL_TOL = 1e-9
# primal-dual gap accepted from the network simplex before falling back to the LP
CERTIFICATE_TOL = 1e-9
MAX_SWEEPS = 100_000


# -- Optimal transport --

def kantorovich_lp(p: np.ndarray, q: np.ndarray, ground: np.ndarray) -> float:
    """Optimal transport cost as a plain LP over the transportation polytope."""
    n, m = ground.shape
    row_sums = np.kron(np.eye(n), np.ones((1, m)))
    col_sums = np.kron(np.ones((1, n)), np.eye(m))
    result = linprog(
        np.asarray(ground, dtype=np.float64).ravel(),
        A_eq=np.vstack([row_sums, col_sums]),
        b_eq=np.concatenate([p, q]),
        bounds=(0, None),
        method="highs",
    )
    if result.status != 0:
        raise InfeasibleMarginals(f"transport LP failed: {result.message}")
    return float(result.fun)


def _certified(plan: np.ndarray, log: dict, p: np.ndarray, q: np.ndarray, ground: np.ndarray) -> bool:
    if log.get("result_code") != 1:
        return False
    scale = max(1.0, float(ground.max()))
    primal = float(np.sum(plan * ground))
    dual = float(log["u"] @ p + log["v"] @ q)
    slack = ground - log["u"][:, None] - log["v"][None, :]
    return abs(primal - dual) <= CERTIFICATE_TOL * scale and slack.min() >= -CERTIFICATE_TOL * scale


def _transport(p: np.ndarray, q: np.ndarray, ground: np.ndarray) -> float:
    """Kantorovich distance for already validated marginals."""
    rows = np.flatnonzero(p > 0)
    cols = np.flatnonzero(q > 0)
    p, q = p[rows], q[cols]
    cost = np.ascontiguousarray(ground[np.ix_(rows, cols)], dtype=np.float64)

    # a point mass on either side has exactly one coupling
    if rows.size == 1:
        return float(cost[0] @ q / q.sum())
    if cols.size == 1:
        return float(cost[:, 0] @ p / p.sum())

    q = q * (p.sum() / q.sum())
    plan, log = ot.emd(p, q, cost, log=True)
    if _certified(plan, log, p, q, cost):
        return float(log["cost"])

    logger.warning(
        "network simplex not certified (%s), falling back to LP", log.get("warning") or log.get("result_code")
    )
    return kantorovich_lp(p, q, cost)


def kantorovich(p, q, ground) -> float:
    """
    Exact optimal transport cost between probability vectors p and q
    under the nonnegative cost matrix `ground`.
    """
    p = check_probability_vector(p, MARGINAL_TOL, "p")
    q = check_probability_vector(q, MARGINAL_TOL, "q")
    ground = np.asarray(ground, dtype=np.float64)
    if ground.shape != (p.size, q.size):
        raise InfeasibleMarginals(f"ground cost shape {ground.shape} does not match {(p.size, q.size)}")
    if (ground < 0).any():
        raise InfeasibleMarginals("ground cost must be nonnegative")
    return _transport(p, q, ground)


# -- Metric fixed points --

@dataclass(frozen=True, eq=False)
class MetricTable:
    d: np.ndarray
    c_r: float
    c_t: float
    iterations_run: int
    residual: float
    kind: str = "bisim"
    residual_history: List[float] = field(default_factory=list)
    # lax only: the Hausdorff-lifted state metric at the fixed point
    state_distances: Optional[np.ndarray] = None

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "size": int(self.d.shape[0]),
            "c_r": self.c_r,
            "c_t": self.c_t,
            "iterations_run": self.iterations_run,
            "residual": self.residual,
            "max_distance": float(self.d.max()) if self.d.size else 0.0,
        }


def _weights(mdp: FiniteMdp, c_r: float, c_t: Optional[float]):
    c_t = mdp.gamma if c_t is None else float(c_t)
    if c_r < 0 or c_t < 0:
        raise ValueError(f"metric weights must be nonnegative, got c_r={c_r}, c_t={c_t}")
    if c_t >= 1.0:
        raise NoConvergence(f"c_t = {c_t} is not a contraction; use c_t < 1")
    return float(c_r), c_t


def _iterate(sweep, size: int, c_t: float, tol: float, kind: str):
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    d = np.zeros((size, size))
    history: List[float] = []
    threshold = tol * (1.0 - c_t)
    for iteration in range(1, MAX_SWEEPS + 1):
        d_next = sweep(d)
        diff = float(np.abs(d_next - d).max()) if d.size else 0.0
        d = d_next
        history.append(diff)
        if diff <= threshold:
            logger.debug("%s metric converged in %d sweeps (step %.3g)", kind, iteration, diff)
            return d, iteration, history
    raise NoConvergence(f"{kind} metric did not converge in {MAX_SWEEPS} sweeps")


def bisim_metric(mdp: FiniteMdp, c_r: float = 1.0, c_t: Optional[float] = None, tol: float = DEFAULT_TOL) -> MetricTable:
    """Bisimulation metric over states; c_t defaults to the MDP discount."""
    c_r, c_t = _weights(mdp, c_r, c_t)
    n_s, n_a = mdp.n_states, mdp.n_actions

    def sweep(d: np.ndarray) -> np.ndarray:
        d_next = np.zeros_like(d)
        for i in range(n_s):
            for j in range(i + 1, n_s):
                best = 0.0
                for a in range(n_a):
                    value = c_r * abs(mdp.rewards[i, a] - mdp.rewards[j, a])
                    if c_t > 0:
                        value += c_t * _transport(mdp.transitions[i, a], mdp.transitions[j, a], d)
                    best = max(best, value)
                d_next[i, j] = d_next[j, i] = best
        return d_next

    d, iterations, history = _iterate(sweep, n_s, c_t, tol, "bisim")
    return MetricTable(
        d=d, c_r=c_r, c_t=c_t, iterations_run=iterations,
        residual=history[-1], kind="bisim", residual_history=history,
    )


def hausdorff_state_metric(pair_d: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """d_S(s, t) = max(max_a min_b d((s,a),(t,b)), max_b min_a d((s,a),(t,b)))"""
    blocks = pair_d.reshape(n_states, n_actions, n_states, n_actions).transpose(0, 2, 1, 3)
    forward = blocks.min(axis=3).max(axis=2)
    backward = blocks.min(axis=2).max(axis=2)
    return np.maximum(forward, backward)


def lax_bisim_metric(mdp: FiniteMdp, c_r: float = 1.0, c_t: Optional[float] = None, tol: float = DEFAULT_TOL) -> MetricTable:
    """
    Lax bisimulation metric over state-action pairs, indexed p = s * n_actions + a.
    The transport ground cost is the Hausdorff lift of the current pair metric to states.
    """
    c_r, c_t = _weights(mdp, c_r, c_t)
    n_s, n_a = mdp.n_states, mdp.n_actions
    n_pairs = n_s * n_a
    rewards = mdp.rewards.reshape(n_pairs)
    rows = mdp.transitions.reshape(n_pairs, n_s)

    def sweep(d: np.ndarray) -> np.ndarray:
        ground = hausdorff_state_metric(d, n_s, n_a)
        d_next = np.zeros_like(d)
        for i in range(n_pairs):
            for j in range(i + 1, n_pairs):
                value = c_r * abs(rewards[i] - rewards[j])
                if c_t > 0:
                    value += c_t * _transport(rows[i], rows[j], ground)
                d_next[i, j] = d_next[j, i] = value
        return d_next

    d, iterations, history = _iterate(sweep, n_pairs, c_t, tol, "lax")
    return MetricTable(
        d=d, c_r=c_r, c_t=c_t, iterations_run=iterations,
        residual=history[-1], kind="lax", residual_history=history,
        state_distances=hausdorff_state_metric(d, n_s, n_a),
    )
