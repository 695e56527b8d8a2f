# grad_equiv.py
# Numerical checks of the continuous homomorphism results on analytic systems.
#
#   check_value_equivalence_mc       -- V^{pi_up}(s) == V_bar^{pi_bar}(f(s)) for a deterministic policy
#   check_optimal_value_equivalence  -- Q*(s, a) == Q_bar*(f(s), g(a))  (Riccati on both sides)
#   check_gradient_equivalence       -- grad_a Q . grad_theta pi_up == grad_a_bar Q_bar . grad_theta pi_bar
#   check_hpg_estimator              -- sampled DPG on M vs sampled HPG on M_bar, same seeds
#
# The abstract policy is always derived from the actual one:
#   pi_bar(s_bar) = g(pi_up(f^-1(s_bar)))
# so both sides share the parameters theta and their gradients are comparable.
#
# Every check returns a report dataclass with a `passed` flag and to_dict().

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from src.diff_engine import Tensor, as_tensor, frozen, no_grad
from src.envs import (
    ContinuousEnv,
    LinearQuadraticEnv,
    PendulumSwingup,
    linear_policy_value,
    lqr_solve,
    q_action_gradient,
    q_value,
    state_value,
)
from src.guardrails import DimensionMismatch, SingularJacobian

logger = logging.getLogger(__name__)

VALUE_TOL = 1e-8
GRADIENT_TOL = 1e-4
FD_GRADIENT_TOL = 1e-3
COSINE_THRESHOLD = 0.99
MAX_JACOBIAN_COND = 1e12
# geometric visitation sampling is truncated once gamma^T falls below this
DISCOUNT_MASS = 1e-4


# -- Homomorphisms and policies --

@dataclass
class AnalyticHomomorphism:
    """
    f(s) = F s and g_s(a) = G a between two continuous systems.

    noise_map says how a noise draw of the actual system maps to the abstract one,
    so paired rollouts stay on corresponding trajectories.
    """
    actual: ContinuousEnv
    abstract: ContinuousEnv
    F: np.ndarray
    G: np.ndarray
    noise_map: Callable[[np.ndarray], np.ndarray] = lambda eps: eps
    name: str = "linear"

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=np.float64))
        self.G = np.atleast_2d(np.asarray(self.G, dtype=np.float64))
        if self.F.shape != (self.actual.state_dim,) * 2 or self.G.shape != (self.actual.action_dim,) * 2:
            raise DimensionMismatch(f"F{self.F.shape} / G{self.G.shape} do not match {self.actual.name}")
        self.F_inv = np.linalg.inv(self.F)

    def state_map(self, state) -> np.ndarray:
        return np.asarray(state, dtype=np.float64) @ self.F.T

    def state_preimage(self, abstract_state) -> np.ndarray:
        return np.asarray(abstract_state, dtype=np.float64) @ self.F_inv.T

    def action_map(self, state, action) -> np.ndarray:
        return np.asarray(action, dtype=np.float64) @ self.G.T

    def action_jacobian(self, state, action) -> np.ndarray:
        """P = d g_s(a) / d a, one matrix per leading batch index of action."""
        action = np.asarray(action, dtype=np.float64)
        return np.broadcast_to(self.G, action.shape[:-1] + self.G.shape)

    def tensor_state_preimage(self, abstract_state: Tensor) -> Tensor:
        return as_tensor(abstract_state) @ self.F_inv.T

    def tensor_action_map(self, action: Tensor) -> Tensor:
        return as_tensor(action) @ self.G.T

    def jacobian_condition(self, state=None, action=None) -> float:
        """Worst condition number of the action Jacobian over the given pairs (any pair if omitted)."""
        if action is None:
            action = np.zeros(self.G.shape[1])
        jacobians = self.action_jacobian(state, action).reshape(-1, *self.G.shape)
        return float(np.linalg.cond(jacobians).max())


def linear_homomorphism(env: LinearQuadraticEnv, F, G) -> AnalyticHomomorphism:
    """Coordinate change s_bar = F s, a_bar = G a; the abstract system is the reparameterized LQR."""
    return AnalyticHomomorphism(env, env.reparameterize(F, G), F, G, name="linear")


def identity_homomorphism(env: ContinuousEnv) -> AnalyticHomomorphism:
    return AnalyticHomomorphism(env, env, np.eye(env.state_dim), np.eye(env.action_dim), name="identity")


def pendulum_flip_homomorphism(env: PendulumSwingup) -> AnalyticHomomorphism:
    """(theta, theta_dot, a) -> (-theta, -theta_dot, -a) onto the same pendulum."""
    return AnalyticHomomorphism(
        env, env, -np.eye(env.state_dim), -np.eye(env.action_dim),
        noise_map=lambda eps: -np.asarray(eps), name="pendulum_flip",
    )


def corrupt_reward(hom: AnalyticHomomorphism, violation: float = 0.5) -> AnalyticHomomorphism:
    """Same maps, but the abstract reward charges an extra violation * |a_bar|^2."""
    abstract = hom.abstract
    if not isinstance(abstract, LinearQuadraticEnv):
        raise TypeError("reward corruption is defined for linear-quadratic abstract systems")
    broken = LinearQuadraticEnv(
        abstract.A, abstract.B, abstract.Q, abstract.R + violation * np.eye(abstract.action_dim),
        noise=abstract.L, action_bound=abstract.action_bound,
    )
    return AnalyticHomomorphism(hom.actual, broken, hom.F, hom.G, hom.noise_map, name=f"{hom.name}+corrupt_reward")


class LinearPolicy:
    """pi(s) = s @ W, i.e. the gain K = -W^T of a = -K s."""

    def __init__(self, weight):
        self.weight = Tensor(np.atleast_2d(np.asarray(weight, dtype=np.float64)), requires_grad=True)

    @classmethod
    def from_gain(cls, K) -> "LinearPolicy":
        return cls(-np.atleast_2d(np.asarray(K, dtype=np.float64)).T)

    @property
    def gain(self) -> np.ndarray:
        return -self.weight.data.T

    def __call__(self, states) -> Tensor:
        return as_tensor(states) @ self.weight

    def parameters(self) -> List[Tensor]:
        return [self.weight]


def act(policy, states) -> np.ndarray:
    """Evaluate a tensor policy on plain arrays without recording."""
    states = np.asarray(states, dtype=np.float64)
    single = states.ndim == 1
    with no_grad():
        out = policy(np.atleast_2d(states)).data
    return out[0] if single else out


def abstract_actions(hom: AnalyticHomomorphism, policy, abstract_states) -> np.ndarray:
    """pi_bar(s_bar) = g(pi_up(f^-1(s_bar)))"""
    pre = hom.state_preimage(abstract_states)
    return hom.action_map(pre, act(policy, pre))


def _abstract_policy_tensor(hom: AnalyticHomomorphism, policy):
    return lambda s_bar: hom.tensor_action_map(policy(hom.tensor_state_preimage(s_bar)))


def _flat_grads(params: List[Tensor]) -> np.ndarray:
    return np.concatenate([
        (np.zeros_like(p.data) if p.grad is None else p.grad).ravel() for p in params
    ])


def _zero(params: List[Tensor]):
    for p in params:
        p.grad = None


def _rel_error(x: np.ndarray, y: np.ndarray) -> float:
    scale = max(np.linalg.norm(x), np.linalg.norm(y))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(x - y) / scale)


def _sides(env: ContinuousEnv, hom: AnalyticHomomorphism):
    if (env.state_dim, env.action_dim) != (hom.actual.state_dim, hom.actual.action_dim):
        raise DimensionMismatch(f"homomorphism is defined on {hom.actual.name}, not on this {env.name}")
    return env, hom.abstract


def _sample_states(env: ContinuousEnv, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(env, PendulumSwingup):
        return np.stack([rng.uniform(-np.pi, np.pi, n), rng.uniform(-2.0, 2.0, n)], axis=-1)
    return rng.uniform(-1.0, 1.0, size=(n, env.state_dim))


# -- Value equivalence --

@dataclass
class ValueEquivalenceReport:
    max_abs_gap: float
    stderr: float
    n_points: int
    method: str
    passed: bool
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)


def _discounted_return(env, start, policy_fn, noise, gamma) -> np.ndarray:
    state = start
    total = np.zeros(start.shape[:-1])
    for t in range(noise.shape[0]):
        state, reward = env.step(state, policy_fn(state), noise=noise[t])
        total += gamma ** t * reward
    return total


def check_value_equivalence_mc(
    env: ContinuousEnv,
    hom: AnalyticHomomorphism,
    policy,
    n_rollouts: int = 64,
    horizon: int = 200,
    seed: int = 0,
    gamma: float = 0.9,
    n_points: int = 8,
) -> ValueEquivalenceReport:
    """
    Compare V^{pi_up}(s) and V_bar^{pi_bar}(f(s)) from matched start states.

    Deterministic LQR with a linear policy is answered in closed form (Lyapunov on
    both sides, 100 test states, exact tolerance). Everything else runs paired
    Monte Carlo rollouts: the abstract rollout sees noise_map(eps) whenever the
    actual one sees eps, and the check passes when every per-state gap is within
    3 standard errors.
    """
    rng = np.random.default_rng(seed)
    actual, abstract = _sides(env, hom)

    if isinstance(actual, LinearQuadraticEnv) and actual.is_deterministic and isinstance(policy, LinearPolicy):
        points = _sample_states(actual, rng, 100)
        K = policy.gain
        K_bar = hom.G @ K @ hom.F_inv
        P = linear_policy_value(actual, K, gamma)
        P_bar = linear_policy_value(abstract, K_bar, gamma)
        gap = np.abs(state_value(actual, P, gamma, points) - state_value(abstract, P_bar, gamma, hom.state_map(points)))
        max_gap = float(gap.max())
        return ValueEquivalenceReport(max_gap, 0.0, len(points), "analytic", max_gap <= VALUE_TOL, VALUE_TOL)

    points = _sample_states(actual, rng, n_points)
    noise_dim = actual.L.shape[1] if isinstance(actual, LinearQuadraticEnv) else 1
    starts = np.repeat(points, n_rollouts, axis=0)
    noise = rng.standard_normal((horizon, starts.shape[0], noise_dim))
    if isinstance(actual, PendulumSwingup):
        noise = noise[..., 0]

    actual_returns = _discounted_return(actual, starts, lambda s: act(policy, s), noise, gamma)
    abstract_returns = _discounted_return(
        abstract, hom.state_map(starts), lambda sb: abstract_actions(hom, policy, sb), hom.noise_map(noise), gamma,
    )
    diff = (actual_returns - abstract_returns).reshape(n_points, n_rollouts)
    gaps = np.abs(diff.mean(axis=1))
    stderrs = diff.std(axis=1, ddof=1) / np.sqrt(n_rollouts) if n_rollouts > 1 else np.zeros(n_points)
    worst = int(np.argmax(gaps))
    passed = bool(np.all(gaps <= 3.0 * stderrs + 1e-9))
    return ValueEquivalenceReport(
        float(gaps[worst]), float(stderrs[worst]), n_points, "monte_carlo", passed, 3.0,
    )


@dataclass
class OptimalValueReport:
    max_q_gap: float
    max_v_gap: float
    n_points: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_optimal_value_equivalence(
    env: LinearQuadraticEnv,
    hom: AnalyticHomomorphism,
    gamma: float = 0.9,
    n_points: int = 100,
    seed: int = 0,
) -> OptimalValueReport:
    """|Q*(s, a) - Q_bar*(F s, G a)| and |V*(s) - V_bar*(F s)| over random test points."""
    rng = np.random.default_rng(seed)
    actual, abstract = _sides(env, hom)
    _, P = lqr_solve(actual, gamma)
    _, P_bar = lqr_solve(abstract, gamma)
    states = _sample_states(actual, rng, n_points)
    actions = rng.uniform(-1.0, 1.0, size=(n_points, actual.action_dim))

    q = q_value(actual, P, gamma, states, actions)
    q_bar = q_value(abstract, P_bar, gamma, hom.state_map(states), hom.action_map(states, actions))
    v = state_value(actual, P, gamma, states)
    v_bar = state_value(abstract, P_bar, gamma, hom.state_map(states))
    q_gap, v_gap = float(np.abs(q - q_bar).max()), float(np.abs(v - v_bar).max())
    return OptimalValueReport(q_gap, v_gap, n_points, max(q_gap, v_gap) <= VALUE_TOL)


# -- Gradient equivalence --

def _rollout_q(env: LinearQuadraticEnv, policy_fn, gamma: float, horizon: int, states, actions) -> np.ndarray:
    """Noise-free truncated Q(s, a) = r(s, a) + sum_{t=1..H} gamma^t r(s_t, pi(s_t))."""
    next_state, total = env.step(states, actions, noise=np.zeros(np.shape(states)[:-1] + (env.L.shape[1],)))
    state = next_state
    for t in range(1, horizon + 1):
        next_state, reward = env.step(state, policy_fn(state), noise=np.zeros(np.shape(state)[:-1] + (env.L.shape[1],)))
        total = total + gamma ** t * reward
        state = next_state
    return total


def _autodiff_action_grad(env, policy_tensor, policy, gamma, horizon, states, actions) -> np.ndarray:
    a = Tensor(actions, requires_grad=True)
    with frozen(policy):
        state, total = env.tensor_step(Tensor(states), a)
        for t in range(1, horizon + 1):
            state, reward = env.tensor_step(state, policy_tensor(state))
            total = total + gamma ** t * reward
        total.sum().backward()
    return a.grad


def _fd_action_grad(env, policy_fn, gamma, horizon, states, actions, h) -> np.ndarray:
    grad = np.zeros_like(actions)
    for j in range(actions.shape[1]):
        step = np.zeros_like(actions)
        step[:, j] = h
        plus = _rollout_q(env, policy_fn, gamma, horizon, states, actions + step)
        minus = _rollout_q(env, policy_fn, gamma, horizon, states, actions - step)
        grad[:, j] = (plus - minus) / (2.0 * h)
    return grad


@dataclass
class GradientEquivalenceReport:
    max_rel_error: float
    max_cancellation_error: float
    jacobian_condition: float
    n_points: int
    method: str
    passed: bool
    tolerance: float
    per_point_errors: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def check_gradient_equivalence(
    env: LinearQuadraticEnv,
    hom: AnalyticHomomorphism,
    policy,
    test_states=None,
    fd_step: float = 1e-4,
    method: str = "closed_form",
    gamma: float = 0.9,
    horizon: int = 200,
    seed: int = 0,
) -> GradientEquivalenceReport:
    """
    At each test state compare
        grad_a Q^{pi_up}(s, a) . grad_theta pi_up(s)            (actual side)
        grad_a_bar Q_bar^{pi_bar}(f(s), a_bar) . grad_theta pi_bar(f(s))   (abstract side)
    with pi_bar_theta(f(s)) = g_s(pi_up_theta(s)).

    method picks how grad_a Q is obtained: "closed_form" (linear policies only),
    "autodiff" through a noise-free truncated rollout, or "finite_difference" on
    that rollout with step fd_step. Gradients w.r.t. theta always go through the
    diff engine.
    """
    actual, abstract = _sides(env, hom)
    if test_states is None:
        test_states = _sample_states(actual, np.random.default_rng(seed), 10)
    states = np.atleast_2d(np.asarray(test_states, dtype=np.float64))

    actions = act(policy, states)
    condition = hom.jacobian_condition(states, actions)
    if not np.isfinite(condition) or condition > MAX_JACOBIAN_COND:
        raise SingularJacobian(f"action map Jacobian is singular (condition number {condition:.3g})")

    abstract_states = hom.state_map(states)
    abstract_acts = hom.action_map(states, actions)
    params = policy.parameters()

    if method == "closed_form":
        if not isinstance(policy, LinearPolicy):
            raise ValueError("closed_form gradients need a LinearPolicy")
        P = linear_policy_value(actual, policy.gain, gamma)
        P_bar = linear_policy_value(abstract, hom.G @ policy.gain @ hom.F_inv, gamma)
        dq = q_action_gradient(actual, P, gamma, states, actions)
        dq_bar = q_action_gradient(abstract, P_bar, gamma, abstract_states, abstract_acts)
    elif method == "autodiff":
        dq = _autodiff_action_grad(actual, policy, policy, gamma, horizon, states, actions)
        dq_bar = _autodiff_action_grad(
            abstract, _abstract_policy_tensor(hom, policy), policy, gamma, horizon, abstract_states, abstract_acts,
        )
    elif method == "finite_difference":
        dq = _fd_action_grad(actual, lambda s: act(policy, s), gamma, horizon, states, actions, fd_step)
        dq_bar = _fd_action_grad(
            abstract, lambda sb: abstract_actions(hom, policy, sb), gamma, horizon,
            abstract_states, abstract_acts, fd_step,
        )
    else:
        raise ValueError(f"unknown method {method!r}")

    # grad_a Q = grad_a_bar Q_bar . P with P = dg/da
    jacobians = hom.action_jacobian(states, actions)
    cancellation = np.abs(dq - np.einsum("ni,nij->nj", dq_bar, jacobians)).max() / max(1.0, float(np.abs(dq).max()))

    errors = []
    for i in range(states.shape[0]):
        _zero(params)
        policy(states[i:i + 1]).backward(dq[i:i + 1])
        left = _flat_grads(params)

        _zero(params)
        hom.tensor_action_map(policy(states[i:i + 1])).backward(dq_bar[i:i + 1])
        right = _flat_grads(params)
        errors.append(_rel_error(left, right))
    _zero(params)

    tolerance = FD_GRADIENT_TOL if method == "finite_difference" else GRADIENT_TOL
    max_error = max(errors) if errors else 0.0
    logger.debug("gradient equivalence (%s): max relative error %.3g", method, max_error)
    return GradientEquivalenceReport(
        max_rel_error=max_error,
        max_cancellation_error=float(cancellation),
        jacobian_condition=condition,
        n_points=states.shape[0],
        method=method,
        passed=max_error <= tolerance,
        tolerance=tolerance,
        per_point_errors=errors,
    )


# -- HPG estimator --

@dataclass
class HpgReport:
    cosine_similarity: float
    rel_norm_gap: float
    n_samples: int
    truncation: int
    passed: bool
    dpg_gradient: List[float] = field(default_factory=list)
    hpg_gradient: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def perturbed_optimal_policy(env: LinearQuadraticEnv, gamma: float, rng: np.random.Generator,
                             scale: float = 0.05) -> LinearPolicy:
    """Optimal gain plus a small random perturbation, so the true gradient is not zero."""
    K, _ = lqr_solve(env, gamma)
    delta = rng.standard_normal(K.shape)
    delta *= scale * max(np.linalg.norm(K), 1.0) / np.linalg.norm(delta)
    return LinearPolicy.from_gain(K + delta)


def _visitation_samples(env, start, policy_fn, noise, stop_times) -> np.ndarray:
    """State of every chain at its own stopping time."""
    state = start
    samples = np.array(start, copy=True)
    for t in range(1, noise.shape[0] + 1):
        state, _ = env.step(state, policy_fn(state), noise=noise[t - 1])
        hit = stop_times == t
        samples[hit] = state[hit]
    return samples


def check_hpg_estimator(
    env: LinearQuadraticEnv,
    hom: AnalyticHomomorphism,
    policy=None,
    n_samples: int = 100_000,
    seed: int = 0,
    gamma: float = 0.9,
    horizon: int = 100,
) -> HpgReport:
    """
    Sample states from the discounted visitation of each side (geometric stopping
    times truncated at DISCOUNT_MASS, shared between sides along with start states
    and noise) and form
        DPG on M     : mean_i  grad_a Q(s_i, pi(s_i)) . grad_theta pi(s_i)
        HPG on M_bar : mean_i  grad_a_bar Q_bar(s_bar_i, pi_bar(s_bar_i)) . grad_theta pi_bar(s_bar_i)

    policy defaults to a perturbed optimal LinearPolicy. A LinearPolicy gets the
    closed-form grad_a Q; any other tensor policy (an Mlp, say) gets grad_a Q by
    autodiff through a noise-free rollout of length horizon on each side.
    """
    rng = np.random.default_rng(seed)
    actual, abstract = _sides(env, hom)
    if policy is None:
        policy = perturbed_optimal_policy(actual, gamma, rng)

    truncation = int(np.ceil(np.log(DISCOUNT_MASS) / np.log(gamma)))
    stop_times = np.minimum(rng.geometric(1.0 - gamma, size=n_samples) - 1, truncation)
    starts = rng.uniform(-1.0, 1.0, size=(n_samples, actual.state_dim))
    noise = rng.standard_normal((truncation, n_samples, actual.L.shape[1]))

    states = _visitation_samples(actual, starts, lambda s: act(policy, s), noise, stop_times)
    abstract_states = _visitation_samples(
        abstract, hom.state_map(starts), lambda sb: abstract_actions(hom, policy, sb), hom.noise_map(noise), stop_times,
    )

    abstract_policy = _abstract_policy_tensor(hom, policy)
    actions = act(policy, states)
    abstract_acts = abstract_actions(hom, policy, abstract_states)
    if isinstance(policy, LinearPolicy):
        K = policy.gain
        P = linear_policy_value(actual, K, gamma)
        P_bar = linear_policy_value(abstract, hom.G @ K @ hom.F_inv, gamma)
        dq = q_action_gradient(actual, P, gamma, states, actions)
        dq_bar = q_action_gradient(abstract, P_bar, gamma, abstract_states, abstract_acts)
    else:
        dq = _autodiff_action_grad(actual, policy, policy, gamma, horizon, states, actions)
        dq_bar = _autodiff_action_grad(abstract, abstract_policy, policy, gamma, horizon, abstract_states, abstract_acts)
    params = policy.parameters()

    _zero(params)
    policy(states).backward(dq / n_samples)
    dpg = _flat_grads(params)

    _zero(params)
    abstract_policy(abstract_states).backward(dq_bar / n_samples)
    hpg = _flat_grads(params)
    _zero(params)

    norms = np.linalg.norm(dpg) * np.linalg.norm(hpg)
    cosine = float(dpg @ hpg / norms) if norms > 0 else (1.0 if np.array_equal(dpg, hpg) else 0.0)
    gap = float(np.linalg.norm(dpg - hpg) / max(np.linalg.norm(dpg), 1e-300))
    logger.info("HPG estimator (%s): cosine %.6f, relative gap %.3g", hom.name, cosine, gap)
    return HpgReport(
        cosine_similarity=cosine,
        rel_norm_gap=gap,
        n_samples=n_samples,
        truncation=truncation,
        passed=cosine >= COSINE_THRESHOLD,
        dpg_gradient=dpg.tolist(),
        hpg_gradient=hpg.tolist(),
    )
