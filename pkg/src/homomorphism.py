# homomorphism.py
# Finite MDP homomorphisms: build the quotient MDP, lift abstract policies back,
# check value equivalence, and discover the coarsest homomorphism by partition refinement.
#
# A homomorphism h = (f, {g_s}) maps
#   state s        -> abstract state f(s)
#   action a at s  -> abstract action g_s(a)
# and is exact when
#   R_bar(f(s), g_s(a))            == R(s, a)                      (reward invariance)
#   tau_bar(block | f(s), g_s(a))  == sum_{s'' in block} P(s''|s,a) (transition equivariance)
#
# The quotient takes its numbers from the lowest-index preimage of every abstract
# pair. Other preimages are compared against that representative and the worst gap
# goes into the HomomorphismReport, so approximate homomorphisms are measurable.

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.guardrails import DimensionMismatch, InconsistentQuotient
from src.mdp_core import (
    DEFAULT_TOL,
    FiniteMdp,
    TabularPolicy,
    policy_evaluation,
    value_iteration,
)

logger = logging.getLogger(__name__)

# tol = 0 still has to survive summation-order roundoff in block masses
ROUNDOFF_TOL = 1e-12


def _int_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.int64, copy=True)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteHomomorphism:
    state_map: np.ndarray
    action_maps: np.ndarray
    n_abstract_states: Optional[int] = None
    n_abstract_actions: Optional[int] = None

    def __post_init__(self):
        state_map = _int_array(self.state_map, 1, "state_map")
        action_maps = _int_array(self.action_maps, 2, "action_maps")
        if action_maps.shape[0] != state_map.shape[0]:
            raise DimensionMismatch(
                f"action_maps has {action_maps.shape[0]} rows for {state_map.shape[0]} states"
            )
        n_bar_s = int(state_map.max()) + 1 if self.n_abstract_states is None else int(self.n_abstract_states)
        n_bar_a = int(action_maps.max()) + 1 if self.n_abstract_actions is None else int(self.n_abstract_actions)

        if not np.array_equal(np.unique(state_map), np.arange(n_bar_s)):
            raise DimensionMismatch(f"state_map is not surjective onto [0, {n_bar_s})")
        for s, row in enumerate(action_maps):
            if not np.array_equal(np.unique(row), np.arange(n_bar_a)):
                raise DimensionMismatch(f"action map of state {s} is not surjective onto [0, {n_bar_a})")

        object.__setattr__(self, "state_map", state_map)
        object.__setattr__(self, "action_maps", action_maps)
        object.__setattr__(self, "n_abstract_states", n_bar_s)
        object.__setattr__(self, "n_abstract_actions", n_bar_a)

    @property
    def n_states(self) -> int:
        return self.state_map.shape[0]

    @property
    def n_actions(self) -> int:
        return self.action_maps.shape[1]

    @classmethod
    def identity(cls, n_states: int, n_actions: int) -> "FiniteHomomorphism":
        return cls(np.arange(n_states), np.tile(np.arange(n_actions), (n_states, 1)))

    def check_dimensions(self, mdp: FiniteMdp) -> None:
        if (self.n_states, self.n_actions) != (mdp.n_states, mdp.n_actions):
            raise DimensionMismatch(
                f"homomorphism is defined on {(self.n_states, self.n_actions)} "
                f"but the MDP has {(mdp.n_states, mdp.n_actions)}"
            )

    def preimage_counts(self) -> np.ndarray:
        """counts[s, a_bar] = |g_s^{-1}(a_bar)|"""
        counts = np.zeros((self.n_states, self.n_abstract_actions), dtype=np.int64)
        rows = np.repeat(np.arange(self.n_states), self.n_actions)
        np.add.at(counts, (rows, self.action_maps.ravel()), 1)
        return counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteHomomorphism):
            return NotImplemented
        return (
            np.array_equal(self.state_map, other.state_map)
            and np.array_equal(self.action_maps, other.action_maps)
            and self.n_abstract_states == other.n_abstract_states
            and self.n_abstract_actions == other.n_abstract_actions
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "state_map": self.state_map.tolist(),
            "action_maps": self.action_maps.tolist(),
        }


@dataclass(frozen=True)
class HomomorphismReport:
    reward_invariance_error: float
    transition_equivariance_error: float
    tol: float
    is_exact: bool

    def to_dict(self) -> dict:
        return {
            "reward_invariance_error": self.reward_invariance_error,
            "transition_equivariance_error": self.transition_equivariance_error,
            "tol": self.tol,
            "is_exact": self.is_exact,
        }


# -- Quotient --

def block_masses(mdp: FiniteMdp, state_map: np.ndarray, n_blocks: int) -> np.ndarray:
    """masses[s, a, b] = sum of P(s'' | s, a) over the states s'' in block b."""
    one_hot = np.zeros((mdp.n_states, n_blocks))
    one_hot[np.arange(mdp.n_states), state_map] = 1.0
    return mdp.transitions @ one_hot


def _representatives(h: FiniteHomomorphism) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest-index preimage state of every abstract state, and its lowest-index action per abstract action."""
    rep_state = np.array([np.flatnonzero(h.state_map == b)[0] for b in range(h.n_abstract_states)])
    rep_action = np.array([
        [np.flatnonzero(h.action_maps[s] == a_bar)[0] for a_bar in range(h.n_abstract_actions)]
        for s in rep_state
    ])
    return rep_state, rep_action


def quotient_mdp(
    mdp: FiniteMdp,
    h: FiniteHomomorphism,
    tol: float = DEFAULT_TOL,
    strict: bool = True,
) -> Tuple[FiniteMdp, HomomorphismReport]:
    """
    Build M / B_h and measure how far h is from an exact homomorphism.

    With strict=True a report that is not exact at `tol` raises InconsistentQuotient
    (the report and quotient ride along on the exception).
    """
    h.check_dimensions(mdp)
    masses = block_masses(mdp, h.state_map, h.n_abstract_states)
    rep_state, rep_action = _representatives(h)

    rewards_bar = mdp.rewards[rep_state[:, None], rep_action]
    transitions_bar = masses[rep_state[:, None], rep_action]

    image = (h.state_map[:, None], h.action_maps)
    reward_error = float(np.abs(rewards_bar[image] - mdp.rewards).max())
    transition_error = float(np.abs(transitions_bar[image] - masses).max())
    report = HomomorphismReport(
        reward_invariance_error=reward_error,
        transition_equivariance_error=transition_error,
        tol=float(tol),
        is_exact=reward_error <= tol and transition_error <= tol,
    )
    quotient = FiniteMdp(transitions_bar, rewards_bar, mdp.gamma)

    if strict and not report.is_exact:
        raise InconsistentQuotient(
            f"preimages disagree: reward error {reward_error:.3g}, "
            f"transition error {transition_error:.3g} (tol {tol:g})",
            report,
            quotient,
        )
    return quotient, report


# -- Lifting --

def lift_policy(abstract_policy: TabularPolicy, h: FiniteHomomorphism) -> TabularPolicy:
    """
    pi_up(a | s) = pi_bar(g_s(a) | f(s)) / |g_s^{-1}(g_s(a))|

    Each abstract action's probability is split uniformly over its preimage actions.
    """
    if abstract_policy.probs.shape != (h.n_abstract_states, h.n_abstract_actions):
        raise DimensionMismatch(
            f"abstract policy shape {abstract_policy.probs.shape} does not match "
            f"{(h.n_abstract_states, h.n_abstract_actions)}"
        )
    counts = h.preimage_counts()
    rows = np.arange(h.n_states)[:, None]
    lifted = abstract_policy.probs[h.state_map[:, None], h.action_maps] / counts[rows, h.action_maps]
    return TabularPolicy(lifted)


def lift_deterministic(abstract_actions: Sequence[int], h: FiniteHomomorphism) -> np.ndarray:
    """For a deterministic pi_bar, pick the lowest-index preimage action at every state."""
    abstract_actions = np.asarray(abstract_actions, dtype=np.int64)
    if abstract_actions.shape != (h.n_abstract_states,):
        raise DimensionMismatch(
            f"expected {h.n_abstract_states} abstract actions, got shape {abstract_actions.shape}"
        )
    wanted = abstract_actions[h.state_map]
    return np.array([np.flatnonzero(h.action_maps[s] == wanted[s])[0] for s in range(h.n_states)])


# -- Value equivalence --

def _max_pullback_gap(q: np.ndarray, q_bar: np.ndarray, h: FiniteHomomorphism) -> float:
    return float(np.abs(q - q_bar[h.state_map[:, None], h.action_maps]).max())


def verify_value_equivalence(
    mdp: FiniteMdp,
    h: FiniteHomomorphism,
    abstract_policy: TabularPolicy,
    tol: float = DEFAULT_TOL,
    solver_tol: float = DEFAULT_TOL,
) -> float:
    """max_{s,a} |Q^{pi_up}(s, a) - Q^{pi_bar}(f(s), g_s(a))|"""
    quotient, _ = quotient_mdp(mdp, h, tol)
    lifted = lift_policy(abstract_policy, h)
    actual = policy_evaluation(mdp, lifted, solver_tol)
    abstract = policy_evaluation(quotient, abstract_policy, solver_tol)
    return _max_pullback_gap(actual.q, abstract.q, h)


def verify_optimal_value_equivalence(
    mdp: FiniteMdp,
    h: FiniteHomomorphism,
    tol: float = DEFAULT_TOL,
    solver_tol: float = DEFAULT_TOL,
) -> float:
    """max_{s,a} |Q*(s, a) - Q_bar*(f(s), g_s(a))|"""
    quotient, _ = quotient_mdp(mdp, h, tol)
    actual, _ = value_iteration(mdp, solver_tol)
    abstract, _ = value_iteration(quotient, solver_tol)
    return _max_pullback_gap(actual.q, abstract.q, h)


# -- Symmetric constructions --

def mirrored_mdp(base: FiniteMdp, action_perm: Optional[Sequence[int]] = None) -> Tuple[FiniteMdp, FiniteHomomorphism]:
    """
    Two disjoint copies of `base`. In the second copy action a behaves like base
    action action_perm[a] (default: reversed labels). Returns the 2S-state MDP and
    the homomorphism collapsing both copies onto `base`.
    """
    n_s, n_a = base.n_states, base.n_actions
    perm = np.arange(n_a)[::-1] if action_perm is None else np.asarray(action_perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(n_a)):
        raise DimensionMismatch(f"action_perm {perm.tolist()} is not a permutation of {n_a} actions")

    transitions = np.zeros((2 * n_s, n_a, 2 * n_s))
    rewards = np.zeros((2 * n_s, n_a))
    transitions[:n_s, :, :n_s] = base.transitions
    transitions[n_s:, :, n_s:] = base.transitions[:, perm, :]
    rewards[:n_s] = base.rewards
    rewards[n_s:] = base.rewards[:, perm]

    state_map = np.concatenate([np.arange(n_s), np.arange(n_s)])
    action_maps = np.vstack([np.tile(np.arange(n_a), (n_s, 1)), np.tile(perm, (n_s, 1))])
    return FiniteMdp(transitions, rewards, base.gamma), FiniteHomomorphism(state_map, action_maps)


# -- Lax bisimulation minimization --

def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel so blocks are numbered by their lowest member state."""
    mapping = {}
    out = np.empty_like(labels)
    for s, label in enumerate(labels):
        out[s] = mapping.setdefault(int(label), len(mapping))
    return out


def _pair_matches(mdp: FiniteMdp, masses: np.ndarray, s: int, t: int, eps: float) -> np.ndarray:
    """ok[a, b] = (s, a) and (t, b) agree on reward and on every block mass within eps."""
    reward_ok = np.abs(mdp.rewards[s][:, None] - mdp.rewards[t][None, :]) <= eps
    mass_ok = np.abs(masses[s][:, None, :] - masses[t][None, :, :]).max(axis=-1) <= eps
    return reward_ok & mass_ok


def _lax_related(mdp: FiniteMdp, masses: np.ndarray, s: int, t: int, eps: float) -> bool:
    ok = _pair_matches(mdp, masses, s, t, eps)
    return bool(ok.any(axis=1).all() and ok.any(axis=0).all())


def _refine(mdp: FiniteMdp, state_map: np.ndarray, eps: float) -> np.ndarray:
    """Refine the partition until every block is closed under the lax relation."""
    while True:
        n_blocks = int(state_map.max()) + 1
        masses = block_masses(mdp, state_map, n_blocks)
        new_map = np.full(mdp.n_states, -1, dtype=np.int64)
        next_label = 0
        for block in range(n_blocks):
            leaders: List[Tuple[int, int]] = []
            for s in np.flatnonzero(state_map == block):
                for leader, label in leaders:
                    if _lax_related(mdp, masses, s, leader, eps):
                        new_map[s] = label
                        break
                else:
                    new_map[s] = next_label
                    leaders.append((s, next_label))
                    next_label += 1
        new_map = _canonical_labels(new_map)
        if next_label == n_blocks:
            return new_map
        state_map = new_map


def _label_actions(mdp: FiniteMdp, state_map: np.ndarray, eps: float):
    """
    Assign abstract action labels inside every block.

    Types are behaviour classes of the block leader's actions (leader = lowest state).
    Every block must expose the same number of labels, so blocks with fewer types
    duplicate a type, which is only possible when every member has a spare action
    of that type. Returns (action_maps, n_labels, infeasible_blocks).
    """
    n_blocks = int(state_map.max()) + 1
    masses = block_masses(mdp, state_map, n_blocks)
    n_a = mdp.n_actions

    block_types = []
    for block in range(n_blocks):
        members = np.flatnonzero(state_map == block)
        leader = members[0]
        self_ok = _pair_matches(mdp, masses, leader, leader, eps)
        type_leads: List[int] = []
        for a in range(n_a):
            if not any(self_ok[a, b] for b in type_leads):
                type_leads.append(a)
        member_types = {}
        for s in members:
            ok = _pair_matches(mdp, masses, s, leader, eps)[:, type_leads]
            has_type = ok.any(axis=1)
            member_types[s] = np.where(has_type, np.argmax(ok, axis=1), -1)
        block_types.append((members, len(type_leads), member_types))

    n_labels = max(n_types for _, n_types, _ in block_types)
    action_maps = np.zeros((mdp.n_states, n_a), dtype=np.int64)
    infeasible = []
    for block, (members, n_types, member_types) in enumerate(block_types):
        counts = np.array([
            [np.count_nonzero(member_types[s] == t) for t in range(n_types)] for s in members
        ])
        if any((member_types[s] < 0).any() for s in members) or (counts.min(axis=0) == 0).any():
            infeasible.append(block)
            continue
        spare = counts.min(axis=0)
        label_types = list(range(n_types))
        labels_per_type = np.ones(n_types, dtype=np.int64)
        while len(label_types) < n_labels:
            candidates = np.flatnonzero(spare > labels_per_type)
            if candidates.size == 0:
                break
            t = int(candidates[0])
            labels_per_type[t] += 1
            label_types.append(t)
        if len(label_types) < n_labels:
            infeasible.append(block)
            continue

        for s in members:
            types = member_types[s]
            used = np.zeros(n_a, dtype=bool)
            for label, t in enumerate(label_types):
                a = int(np.flatnonzero((types == t) & ~used)[0])
                action_maps[s, a] = label
                used[a] = True
            for a in np.flatnonzero(~used):
                action_maps[s, a] = types[a]
    return action_maps, n_labels, infeasible


def minimize_lax(mdp: FiniteMdp, tol: float = 0.0) -> Tuple[FiniteHomomorphism, FiniteMdp]:
    """
    Coarsest lax-bisimulation partition of the states and the induced homomorphism.

    s and t share a block iff every action of s is matched by some action of t
    (equal reward, equal block-aggregated transitions, within tol) and vice versa.
    tol = 0 means exact up to ROUNDOFF_TOL.
    """
    eps = max(float(tol), ROUNDOFF_TOL)
    state_map = np.zeros(mdp.n_states, dtype=np.int64)

    while True:
        state_map = _refine(mdp, state_map, eps)
        action_maps, n_labels, infeasible = _label_actions(mdp, state_map, eps)
        if not infeasible:
            break
        # blocks that cannot expose n_labels consistent labels fall back to singletons
        logger.info("splitting %d block(s) with no uniform action labelling", len(infeasible))
        split = state_map.copy()
        next_label = int(state_map.max()) + 1
        for block in infeasible:
            for s in np.flatnonzero(state_map == block)[1:]:
                split[s] = next_label
                next_label += 1
        state_map = _canonical_labels(split)

    h = FiniteHomomorphism(state_map, action_maps, int(state_map.max()) + 1, n_labels)
    quotient, report = quotient_mdp(mdp, h, eps, strict=False)
    if not report.is_exact:
        logger.warning("minimized quotient is not exact at tol %g: %s", eps, report.to_dict())
    return h, quotient
